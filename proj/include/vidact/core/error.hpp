#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vidact {

/// Coarse error categories. The CLI maps these onto exit codes.
enum class ErrorKind {
    Config,      // invalid configuration or phase ordering
    Dimension,   // tensor shapes do not conform
    Index,       // token id or element index out of range
    Data,        // malformed or semantically invalid input data
    Parse,       // file syntax error
    Schema,      // well-formed file whose contents disagree with its header
    MissingFile,
    Numeric,     // divergence, NaN, unstable integration
    Coverage,    // DMP library lacks an entry for an action step
    Grounding,   // action refers to an object not present in the scene
    Usage,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return "config error";
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Index: return "index error";
        case ErrorKind::Data: return "data error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Schema: return "schema error";
        case ErrorKind::MissingFile: return "missing file";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::Coverage: return "coverage error";
        case ErrorKind::Grounding: return "grounding error";
        case ErrorKind::Usage: return "usage error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace vidact
