#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidact/core/error.hpp"
#include "vidact/core/rng.hpp"
#include "vidact/data/records.hpp"

namespace vidact {

/// Partitions whole videos into `folds` groups whose sizes differ by at most
/// one; larger folds come last (28 videos, 3 folds -> 9, 9, 10).
inline std::vector<Dataset> split_dataset(const Dataset& ds, std::size_t folds, std::uint64_t seed) {
    require(folds >= 2, ErrorKind::Config, "split: need at least 2 folds");
    std::vector<std::string> videos = ds.video_ids();
    require(videos.size() >= folds, ErrorKind::Config,
            "split: " + std::to_string(videos.size()) + " videos cannot fill " + std::to_string(folds) + " folds");
    Rng rng(seed);
    rng.shuffle(videos);

    std::map<std::string, std::size_t> fold_of;
    const std::size_t base = videos.size() / folds, extra = videos.size() % folds;
    std::size_t next = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t size = base + (f >= folds - extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) fold_of[videos[next++]] = f;
    }
    std::vector<std::vector<std::size_t>> members(folds);
    for (std::size_t i = 0; i < ds.records.size(); ++i) members[fold_of.at(ds.records[i].video_id)].push_back(i);
    std::vector<Dataset> out;
    for (const auto& m : members) out.push_back(ds.subset(m));
    return out;
}

struct SplitView {
    Dataset train, validation, test;
};

/// Rotation `round` of a cross-validation: fold `round` is the test set, the
/// next fold validates, the rest train.
inline SplitView cross_validation_round(const std::vector<Dataset>& folds, std::size_t round) {
    require(folds.size() >= 3, ErrorKind::Config, "cross validation needs at least 3 folds");
    require(round < folds.size(), ErrorKind::Config, "cross validation round out of range");
    SplitView view;
    view.test = folds[round];
    view.validation = folds[(round + 1) % folds.size()];
    view.train = Dataset{folds[0].dims, folds[0].words, folds[0].actions, folds[0].unk_text, {}, {}};
    for (std::size_t f = 0; f < folds.size(); ++f) {
        if (f == round || f == (round + 1) % folds.size()) continue;
        view.train.records.insert(view.train.records.end(), folds[f].records.begin(), folds[f].records.end());
        view.train.features.insert(view.train.features.end(), folds[f].features.begin(), folds[f].features.end());
    }
    return view;
}

}  // namespace vidact
