#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/core/error.hpp"
#include "vidact/data/records.hpp"

// Manifest layout (UTF-8 JSON lines):
//   line 1   {"schema": "vidact-manifest", "version": 1,
//             "dims": {"audio": A, "visual": V, "text": T},
//             "unk_vector": [T doubles], "words": [...], "verbs": [...], "nouns": [...]}
//   line 2.. {"video_id", "segment", "onset", "offset",
//             "caption": [words] | null, "actions": [{"verb", "nouns"}] | null,
//             "subtitle": [words] | null, "bench": [nouns], "features": "relative/path.bin"}
// Word and action vocabularies list non-special tokens in id order.
//
// Feature file: magic "VDF1", then audio, visual, text blocks, each
//   uint64 rows, uint64 cols, rows*cols float64, all little-endian.

namespace vidact {

inline constexpr const char* kManifestSchema = "vidact-manifest";
inline constexpr int kManifestVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

inline void write_block(std::ostream& out, const Tensor& t) {
    const std::uint64_t shape[2] = {t.rows(), t.cols()};
    out.write(reinterpret_cast<const char*>(shape), sizeof shape);
    out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor read_block(std::istream& in, const std::string& path) {
    std::uint64_t shape[2] = {0, 0};
    in.read(reinterpret_cast<char*>(shape), sizeof shape);
    require(static_cast<bool>(in) && shape[0] < (1u << 24) && shape[1] < (1u << 24), ErrorKind::Parse,
            "truncated or corrupt feature file " + path);
    std::vector<double> values(shape[0] * shape[1]);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    require(static_cast<bool>(in), ErrorKind::Parse, "truncated feature file " + path);
    return Tensor({shape[0], shape[1]}, std::move(values));
}

inline nlohmann::json step_json(const ActionSequence& seq) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : seq) out.push_back({{"verb", s.verb}, {"nouns", s.nouns}});
    return out;
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <>
inline nlohmann::json optional_json(const std::optional<ActionSequence>& v) {
    return v ? step_json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline void write_features(const FeatureBundle& bundle, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, "cannot write feature file " + path.string());
    out.write("VDF1", 4);
    detail::write_block(out, bundle.audio);
    detail::write_block(out, bundle.visual);
    detail::write_block(out, bundle.text);
}

inline FeatureBundle read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingFile, "feature file not found: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    require(static_cast<bool>(in) && std::memcmp(magic, "VDF1", 4) == 0, ErrorKind::Parse,
            "not a feature file: " + path.string());
    FeatureBundle b;
    b.audio = detail::read_block(in, path.string());
    b.visual = detail::read_block(in, path.string());
    b.text = detail::read_block(in, path.string());
    return b;
}

/// Writes `manifest.jsonl` and one feature file per record under `dir`.
inline void write_manifest(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.jsonl", std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, "cannot write " + (dir / "manifest.jsonl").string());
    nlohmann::json header = {{"schema", kManifestSchema},
                             {"version", kManifestVersion},
                             {"dims", {{"audio", ds.dims.audio}, {"visual", ds.dims.visual}, {"text", ds.dims.text}}},
                             {"unk_vector", ds.unk_text},
                             {"words", ds.words.words()},
                             {"verbs", ds.actions.verbs()},
                             {"nouns", ds.actions.nouns()}};
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        nlohmann::json line = {{"video_id", r.video_id},
                               {"segment", r.segment},
                               {"onset", r.onset},
                               {"offset", r.offset},
                               {"caption", detail::optional_json(r.caption)},
                               {"actions", detail::optional_json(r.actions)},
                               {"subtitle", detail::optional_json(r.subtitle)},
                               {"bench", r.bench},
                               {"features", r.feature_ref}};
        out << line.dump() << '\n';
        write_features(ds.features.at(i), dir / r.feature_ref);
    }
}

namespace detail {

inline void check_bundle(const FeatureBundle& b, const FeatureDims& dims, const std::string& where) {
    auto check = [&](const Tensor& t, std::size_t dim, const char* what) {
        require(t.rows() >= 1 && t.cols() == dim, ErrorKind::Schema,
                where + ": " + what + " features " + shape_string(t.shape()) + " do not match header width " +
                    std::to_string(dim));
    };
    check(b.audio, dims.audio, "audio");
    check(b.visual, dims.visual, "visual");
    check(b.text, dims.text, "text");
}

}  // namespace detail

/// Parses a manifest and its feature files. Records with neither caption nor
/// actions are accepted; training rejects them later.
inline Dataset load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingFile, "manifest not found: " + path.string());
    const std::filesystem::path dir = path.parent_path();
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    auto where = [&] { return path.string() + ":" + std::to_string(line_no); };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, where() + ": " + e.what());
        }
        try {
            if (line_no == 1) {
                require(j.value("schema", "") == kManifestSchema, ErrorKind::Parse, where() + ": missing manifest header");
                require(j.value("version", 0) == kManifestVersion, ErrorKind::Parse,
                        where() + ": unsupported manifest version");
                ds.dims = {j.at("dims").at("audio").get<std::size_t>(), j.at("dims").at("visual").get<std::size_t>(),
                           j.at("dims").at("text").get<std::size_t>()};
                ds.unk_text = j.at("unk_vector").get<std::vector<double>>();
                require(ds.unk_text.size() == ds.dims.text, ErrorKind::Schema,
                        where() + ": unk_vector width " + std::to_string(ds.unk_text.size()) +
                            " does not match text width " + std::to_string(ds.dims.text));
                ds.words = Vocabulary(j.at("words").get<std::vector<std::string>>());
                ds.actions = ActionVocabulary(j.at("verbs").get<std::vector<std::string>>(),
                                              j.at("nouns").get<std::vector<std::string>>());
                continue;
            }
            SegmentRecord r;
            r.video_id = j.at("video_id").get<std::string>();
            r.segment = j.at("segment").get<int>();
            r.onset = j.at("onset").get<double>();
            r.offset = j.at("offset").get<double>();
            require(r.onset < r.offset, ErrorKind::Data, where() + ": onset must precede offset");
            if (!j.at("caption").is_null()) r.caption = j.at("caption").get<std::vector<std::string>>();
            if (!j.at("subtitle").is_null()) r.subtitle = j.at("subtitle").get<std::vector<std::string>>();
            if (!j.at("actions").is_null()) {
                ActionSequence seq;
                for (const auto& s : j.at("actions"))
                    seq.push_back({s.at("verb").get<std::string>(), s.at("nouns").get<std::vector<std::string>>()});
                r.actions = seq;
            }
            r.bench = j.value("bench", std::vector<std::string>{});
            r.feature_ref = j.at("features").get<std::string>();
            FeatureBundle b = read_features(dir / r.feature_ref);
            b.has_subtitle = r.subtitle.has_value();
            detail::check_bundle(b, ds.dims, where());
            ds.records.push_back(std::move(r));
            ds.features.push_back(std::move(b));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, where() + ": " + e.what());
        }
    }
    require(line_no >= 1, ErrorKind::Parse, path.string() + ": empty manifest");
    return ds;
}

}  // namespace vidact
