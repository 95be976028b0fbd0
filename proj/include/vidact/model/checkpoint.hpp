#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "vidact/core/rng.hpp"
#include "vidact/model/config.hpp"
#include "vidact/model/params.hpp"
#include "vidact/model/transformer.hpp"

namespace vidact {

inline constexpr const char* kCheckpointFormat = "vidact-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Self-describing JSON container: architecture, named parameter tensors with
/// owner tags, generator state and free-form metadata.
struct Checkpoint {
    ModelConfig config;
    ParamStore params;
    Rng rng;
    nlohmann::json metadata = nlohmann::json::object();

    ActionTransformer model() const { return ActionTransformer(config, params); }
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, entry] : ckpt.params.entries()) {
        params[name] = {{"owner", to_string(entry.owner)},
                        {"shape", entry.tensor.shape()},
                        {"values", std::vector<double>(entry.tensor.values().begin(), entry.tensor.values().end())}};
    }
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"config", ckpt.config},
            {"rng", {{"seed", ckpt.rng.seed()}, {"position", ckpt.rng.position()}}},
            {"metadata", ckpt.metadata},
            {"params", params}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    require(j.is_object() && j.value("format", "") == kCheckpointFormat, ErrorKind::Parse,
            "not a vidact checkpoint");
    require(j.contains("version"), ErrorKind::Parse, "checkpoint has no version field");
    const int version = j.at("version").get<int>();
    require(version == kCheckpointVersion, ErrorKind::Parse,
            "unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    try {
        ckpt.config = j.at("config").get<ModelConfig>();
        ckpt.rng = Rng(j.at("rng").at("seed").get<std::uint64_t>(), j.at("rng").at("position").get<std::uint64_t>());
        ckpt.metadata = j.value("metadata", nlohmann::json::object());
        for (const auto& [name, entry] : j.at("params").items()) {
            Tensor t(entry.at("shape").get<Shape>(), entry.at("values").get<std::vector<double>>());
            ckpt.params.add(name, submodule_from_string(entry.at("owner").get<std::string>()), t);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("malformed checkpoint: ") + e.what());
    }
    // validates names, shapes and owners against the declared architecture
    (void)ckpt.model();
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, "cannot write checkpoint " + path.string());
    out << checkpoint_to_json(ckpt).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingFile, "checkpoint not found: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, "checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace vidact
