#include "vidact/cli/cli.hpp"

int main(int argc, char** argv) { return vidact::cli::run(argc, argv); }
