#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "vidact/data/vocabulary.hpp"
#include "vidact/numerics/tensor.hpp"

namespace vidact {

/// Per-segment feature sequences. `visual` is the already fused video+image
/// stream; `text` holds subtitle word vectors or the single <unk> row.
struct FeatureBundle {
    Tensor audio;   // T_A x d_audio
    Tensor visual;  // T_V x d_visual
    Tensor text;    // T_T x d_text
    bool has_subtitle = false;
};

struct SegmentRecord {
    std::string video_id;
    int segment = 0;  // index within the video
    double onset = 0.0;
    double offset = 0.0;
    std::optional<std::vector<std::string>> caption;
    std::optional<ActionSequence> actions;
    std::optional<std::vector<std::string>> subtitle;
    std::vector<std::string> bench;  // objects present on the workbench for this clip
    std::string feature_ref;         // path relative to the manifest directory

    bool trainable() const { return caption.has_value() || actions.has_value(); }

    bool operator==(const SegmentRecord&) const = default;
};

struct FeatureDims {
    std::size_t audio = 0;
    std::size_t visual = 0;
    std::size_t text = 0;

    bool operator==(const FeatureDims&) const = default;
};

/// Records plus the shared metadata needed to interpret them.
struct Dataset {
    FeatureDims dims;
    Vocabulary words;
    ActionVocabulary actions;
    std::vector<double> unk_text;  // word vector used when a segment has no subtitle
    std::vector<SegmentRecord> records;
    std::vector<FeatureBundle> features;  // parallel to records

    std::vector<std::string> video_ids() const {
        std::vector<std::string> ids;
        for (const auto& r : records)
            if (ids.empty() || ids.back() != r.video_id)
                if (std::find(ids.begin(), ids.end(), r.video_id) == ids.end()) ids.push_back(r.video_id);
        return ids;
    }

    /// Sub-dataset holding the given record indices, metadata shared.
    Dataset subset(const std::vector<std::size_t>& indices) const {
        Dataset out{dims, words, actions, unk_text, {}, {}};
        for (std::size_t i : indices) {
            out.records.push_back(records.at(i));
            out.features.push_back(features.at(i));
        }
        return out;
    }
};

}  // namespace vidact
