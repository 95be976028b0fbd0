#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/core/error.hpp"
#include "vidact/core/rng.hpp"
#include "vidact/data/records.hpp"
#include "vidact/numerics/ops.hpp"

namespace vidact {

/// One grammar rule: a verb, the nouns allowed in each argument slot, and the
/// caption phrase with {0}, {1}, ... noun placeholders. Slots of one
/// production should be disjoint so argument order is implied by noun
/// identity, and productions sharing a verb should differ in arity so a
/// caption identifies its production.
struct Production {
    std::string verb;
    std::vector<std::vector<std::string>> slots;
    std::string caption;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Production, verb, slots, caption)

/// Parameters of the synthetic kitchen world.
struct WorldSpec {
    std::vector<std::string> verbs;
    std::vector<std::string> nouns;
    std::vector<Production> grammar;
    std::vector<std::string> fillers{"okay", "so", "now", "um"};
    std::string caption_prefix = "the person";
    std::string step_joiner = "then";

    double noise = 0.5;
    std::uint64_t embedding_seed = 7;
    FeatureDims dims{32, 48, 16};
    std::size_t video_dim = 32;  // raw clip-feature width before fusion
    std::size_t image_dim = 24;  // raw frame-feature width before fusion
    std::size_t frames_per_step = 2;
    std::size_t min_steps = 1;
    std::size_t max_steps = 3;
    std::size_t active_nouns = 4;  // nouns a video's actions draw from
    std::size_t distractors = 4;   // additional on-bench nouns never acted on
    double frame_period = 0.5;     // seconds per feature frame
    double gap = 1.0;              // seconds between consecutive segments

    void validate() const {
        require(!verbs.empty() && !nouns.empty(), ErrorKind::Config, "world: empty verb or noun inventory");
        require(!grammar.empty(), ErrorKind::Config, "world: empty grammar");
        const std::set<std::string> verb_set(verbs.begin(), verbs.end()), noun_set(nouns.begin(), nouns.end());
        std::set<std::string> covered;
        for (const auto& p : grammar) {
            require(verb_set.contains(p.verb), ErrorKind::Config, "world: grammar verb '" + p.verb + "' not in inventory");
            require(!p.caption.empty(), ErrorKind::Config, "world: no caption template for verb '" + p.verb + "'");
            covered.insert(p.verb);
            for (const auto& slot : p.slots) {
                require(!slot.empty(), ErrorKind::Config, "world: empty slot for verb '" + p.verb + "'");
                for (const auto& n : slot)
                    require(noun_set.contains(n), ErrorKind::Config,
                            "world: grammar noun '" + n + "' not in inventory");
            }
        }
        for (const auto& v : verbs)
            require(covered.contains(v), ErrorKind::Config, "world: no caption template for verb '" + v + "'");
        require(frames_per_step >= 1 && min_steps >= 1 && max_steps >= min_steps, ErrorKind::Config,
                "world: step counts must satisfy 1 <= min_steps <= max_steps and frames_per_step >= 1");
        require(active_nouns >= 1 && active_nouns + distractors <= nouns.size(), ErrorKind::Config,
                "world: active_nouns + distractors exceeds the noun inventory");
        require(noise >= 0.0 && frame_period > 0.0, ErrorKind::Config, "world: noise must be >= 0, frame_period > 0");
        require(dims.audio > 0 && dims.visual > 0 && dims.text > 0 && video_dim > 0 && image_dim > 0,
                ErrorKind::Config, "world: feature widths must be positive");
    }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FeatureDims, audio, visual, text)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WorldSpec, verbs, nouns, grammar, fillers, caption_prefix,
                                                step_joiner, noise, embedding_seed, dims, video_dim, image_dim,
                                                frames_per_step, min_steps, max_steps, active_nouns, distractors,
                                                frame_period, gap)

/// Fractions of segments carrying each annotation.
struct AnnotationMix {
    double actions = 1.0;
    double captions = 1.0;
    double subtitles = 0.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AnnotationMix, actions, captions, subtitles)

/// A small kitchen: 10 verbs and 18 nouns, covering the three robot demo
/// tasks (cereal, coffee, drinks on a tray).
inline WorldSpec default_kitchen_world() {
    WorldSpec w;
    w.verbs = {"take", "place", "wash", "cut", "pour", "open", "close", "turn-on", "turn-off", "stir"};
    w.nouns = {"bowl",   "cereal", "milk",  "coffee", "cup",  "tray",  "orange-juice", "strawberry-juice", "celery",
               "carrot", "tomato", "tap",   "fridge", "stove", "pan", "knife",        "spoon",            "plate"};
    const std::vector<std::string> portable{"bowl", "cup", "pan", "plate", "knife", "spoon", "celery", "carrot", "tomato"};
    const std::vector<std::string> bottles{"milk", "orange-juice", "strawberry-juice"};
    const std::vector<std::string> pourable{"cereal", "milk", "coffee", "orange-juice", "strawberry-juice"};
    const std::vector<std::string> container{"bowl", "cup", "pan"};
    w.grammar = {
        {"take", {portable}, "picks up the {0}"},
        {"place", {portable}, "sets down the {0}"},
        {"place", {bottles, {"tray"}}, "places the {0} on the {1}"},
        {"wash", {{"celery", "carrot", "tomato", "cup", "bowl", "plate", "knife", "spoon"}}, "rinses the {0}"},
        {"cut", {{"celery", "carrot", "tomato"}}, "slices the {0}"},
        {"pour", {pourable, container}, "pours the {0} into the {1}"},
        {"open", {{"fridge", "tap"}}, "opens the {0}"},
        {"close", {{"fridge", "tap"}}, "shuts the {0}"},
        {"turn-on", {{"tap", "stove"}}, "switches on the {0}"},
        {"turn-off", {{"tap", "stove"}}, "switches off the {0}"},
        {"stir", {{"pan", "bowl", "cup"}}, "stirs the {0}"},
    };
    return w;
}

/// Fixed class prototypes from which all synthetic features are drawn.
struct WorldEmbeddings {
    std::map<std::string, std::vector<double>> verb_video, noun_video, noun_image, verb_audio, words;
    std::vector<double> unk;
    std::vector<double> fusion;  // (video_dim + image_dim) x d_visual, row-major
};

namespace detail {

inline std::vector<double> gaussian_vector(const Rng& base, const std::string& key, std::size_t n, double scale = 1.0) {
    Rng r = base.derive(stable_hash(key));
    std::vector<double> v(n);
    for (auto& x : v) x = r.normal(0.0, scale);
    return v;
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

}  // namespace detail

/// The production a step was drawn from: same verb, same arity, each noun in its slot.
inline const Production& find_production(const WorldSpec& spec, const ActionStep& step) {
    for (const auto& p : spec.grammar) {
        if (p.verb != step.verb || p.slots.size() != step.nouns.size()) continue;
        bool fits = true;
        for (std::size_t i = 0; i < p.slots.size(); ++i)
            fits = fits && std::find(p.slots[i].begin(), p.slots[i].end(), step.nouns[i]) != p.slots[i].end();
        if (fits) return p;
    }
    fail(ErrorKind::Data, "no grammar production matches step '" + step.verb + "' with " +
                              std::to_string(step.nouns.size()) + " nouns");
}

/// Caption words for an action sequence.
inline std::vector<std::string> render_caption(const WorldSpec& spec, const ActionSequence& seq) {
    std::vector<std::string> words = detail::split_words(spec.caption_prefix);
    for (std::size_t s = 0; s < seq.size(); ++s) {
        if (s > 0) words.push_back(spec.step_joiner);
        for (const auto& w : detail::split_words(find_production(spec, seq[s]).caption)) {
            if (w.size() == 3 && w.front() == '{' && w.back() == '}') {
                const std::size_t slot = static_cast<std::size_t>(w[1] - '0');
                require(slot < seq[s].nouns.size(), ErrorKind::Data,
                        "caption template for '" + seq[s].verb + "' needs more nouns than the step has");
                words.push_back(seq[s].nouns[slot]);
            } else {
                words.push_back(w);
            }
        }
    }
    return words;
}

/// Every word a caption or subtitle of this world can contain, in first-seen order.
inline std::vector<std::string> world_words(const WorldSpec& spec) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto add = [&](const std::string& w) {
        if (seen.insert(w).second) out.push_back(w);
    };
    for (const auto& w : detail::split_words(spec.caption_prefix)) add(w);
    add(spec.step_joiner);
    for (const auto& p : spec.grammar)
        for (const auto& w : detail::split_words(p.caption))
            if (w.front() != '{') add(w);
    for (const auto& n : spec.nouns) add(n);
    for (const auto& f : spec.fillers) add(f);
    return out;
}

inline WorldEmbeddings make_embeddings(const WorldSpec& spec) {
    const Rng base(spec.embedding_seed);
    WorldEmbeddings e;
    for (const auto& v : spec.verbs) {
        e.verb_video[v] = detail::gaussian_vector(base, "video/verb/" + v, spec.video_dim);
        e.verb_audio[v] = detail::gaussian_vector(base, "audio/verb/" + v, spec.dims.audio);
    }
    for (const auto& n : spec.nouns) {
        e.noun_video[n] = detail::gaussian_vector(base, "video/noun/" + n, spec.video_dim);
        e.noun_image[n] = detail::gaussian_vector(base, "image/noun/" + n, spec.image_dim);
    }
    for (const auto& w : world_words(spec)) e.words[w] = detail::gaussian_vector(base, "word/" + w, spec.dims.text);
    e.unk = detail::gaussian_vector(base, "word/<unk>", spec.dims.text);
    const std::size_t fan_in = spec.video_dim + spec.image_dim;
    e.fusion = detail::gaussian_vector(base, "fusion", fan_in * spec.dims.visual, 1.0 / std::sqrt(double(fan_in)));
    return e;
}

/// Concatenates clip and frame features per time step and projects them to
/// one visual stream.
inline Tensor fuse_visual(const Tensor& video, const Tensor& image, const std::vector<double>& projection,
                          std::size_t out_dim) {
    require(video.rows() == image.rows(), ErrorKind::Dimension,
            "fuse_visual: " + shape_string(video.shape()) + " vs " + shape_string(image.shape()));
    const std::size_t in_dim = video.cols() + image.cols();
    require(projection.size() == in_dim * out_dim, ErrorKind::Dimension, "fuse_visual: projection size mismatch");
    NoGradGuard guard;
    const Tensor w({in_dim, out_dim}, projection);
    return ops::matmul(ops::concat_cols({video, image}), w);
}

/// Noise-free visual frame of one step.
inline std::vector<double> clean_step_frame(const WorldSpec& spec, const WorldEmbeddings& emb, const ActionStep& step) {
    std::vector<double> raw(spec.video_dim + spec.image_dim, 0.0);
    const auto& vv = emb.verb_video.at(step.verb);
    for (std::size_t j = 0; j < spec.video_dim; ++j) raw[j] = vv[j];
    const double share = step.nouns.empty() ? 0.0 : 1.0 / static_cast<double>(step.nouns.size());
    for (const auto& n : step.nouns) {
        const auto& nv = emb.noun_video.at(n);
        const auto& ni = emb.noun_image.at(n);
        for (std::size_t j = 0; j < spec.video_dim; ++j) raw[j] += share * nv[j];
        for (std::size_t j = 0; j < spec.image_dim; ++j) raw[spec.video_dim + j] += share * ni[j];
    }
    std::vector<double> out(spec.dims.visual, 0.0);
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (std::size_t j = 0; j < spec.dims.visual; ++j) out[j] += raw[i] * emb.fusion[i * spec.dims.visual + j];
    return out;
}

namespace detail {

/// Productions whose every slot can be filled from `pool`, with distinct nouns.
inline std::vector<const Production*> usable_productions(const WorldSpec& spec, const std::set<std::string>& pool) {
    std::vector<const Production*> out;
    for (const auto& p : spec.grammar) {
        std::set<std::string> used;
        bool ok = true;
        for (const auto& slot : p.slots) {
            bool found = false;
            for (const auto& n : slot)
                if (pool.contains(n) && !used.contains(n)) {
                    used.insert(n);
                    found = true;
                    break;
                }
            ok = ok && found;
        }
        if (ok) out.push_back(&p);
    }
    return out;
}

inline ActionStep sample_step(const Production& p, const std::set<std::string>& pool, Rng& rng) {
    ActionStep step{p.verb, {}};
    for (const auto& slot : p.slots) {
        std::vector<std::string> options;
        for (const auto& n : slot)
            if (pool.contains(n) && std::find(step.nouns.begin(), step.nouns.end(), n) == step.nouns.end())
                options.push_back(n);
        step.nouns.push_back(options[rng.index(options.size())]);
    }
    return step;
}

inline std::vector<std::size_t> chosen_subset(std::size_t n, double fraction, Rng rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
    return order;
}

}  // namespace detail

/// Draws a synthetic corpus. Exactly round(fraction * total) segments carry
/// each annotation type; the subsets are drawn independently.
inline Dataset generate_dataset(const WorldSpec& spec, std::size_t n_videos, std::size_t segments_per_video,
                                const AnnotationMix& mix, std::uint64_t seed) {
    spec.validate();
    for (double f : {mix.actions, mix.captions, mix.subtitles})
        require(f >= 0.0 && f <= 1.0, ErrorKind::Config, "annotation fractions must lie in [0, 1]");
    require(n_videos >= 1 && segments_per_video >= 1, ErrorKind::Config, "need at least one video and one segment");

    const WorldEmbeddings emb = make_embeddings(spec);
    Dataset ds;
    ds.dims = spec.dims;
    ds.words = Vocabulary(world_words(spec));
    ds.actions = ActionVocabulary(spec.verbs, spec.nouns);
    ds.unk_text = emb.unk;

    const Rng root(seed);
    std::vector<ActionSequence> latent;
    for (std::size_t v = 0; v < n_videos; ++v) {
        Rng rng = root.derive(v);
        std::vector<std::string> order = spec.nouns;
        std::set<std::string> pool;
        std::vector<const Production*> usable;
        // redraw the active pool until some production fits
        for (int attempt = 0; usable.empty(); ++attempt) {
            require(attempt < 1000, ErrorKind::Config, "world: grammar cannot be satisfied by any noun pool");
            rng.shuffle(order);
            pool = std::set<std::string>(order.begin(), order.begin() + static_cast<long>(spec.active_nouns));
            usable = detail::usable_productions(spec, pool);
        }
        std::vector<std::string> bench(order.begin(), order.begin() + static_cast<long>(spec.active_nouns + spec.distractors));
        std::sort(bench.begin(), bench.end());

        char id[32];
        std::snprintf(id, sizeof id, "v%03zu", v);
        double clock = 0.0;
        for (std::size_t s = 0; s < segments_per_video; ++s) {
            const std::size_t steps = spec.min_steps + rng.index(spec.max_steps - spec.min_steps + 1);
            ActionSequence seq;
            for (std::size_t k = 0; k < steps; ++k) seq.push_back(detail::sample_step(*usable[rng.index(usable.size())], pool, rng));

            const std::size_t frames = steps * spec.frames_per_step;
            Tensor audio = Tensor::zeros({frames, spec.dims.audio});
            Tensor visual = Tensor::zeros({frames, spec.dims.visual});
            auto a = audio.mutable_values();
            auto x = visual.mutable_values();
            for (std::size_t f = 0; f < frames; ++f) {
                const ActionStep& step = seq[f / spec.frames_per_step];
                const auto frame = clean_step_frame(spec, emb, step);
                const auto& sound = emb.verb_audio.at(step.verb);
                for (std::size_t j = 0; j < spec.dims.visual; ++j)
                    x[f * spec.dims.visual + j] = frame[j] + spec.noise * rng.normal();
                for (std::size_t j = 0; j < spec.dims.audio; ++j)
                    a[f * spec.dims.audio + j] = sound[j] + spec.noise * rng.normal();
            }

            SegmentRecord rec;
            rec.video_id = id;
            rec.segment = static_cast<int>(s);
            rec.onset = clock;
            rec.offset = clock + static_cast<double>(frames) * spec.frame_period;
            clock = rec.offset + spec.gap;
            rec.bench = bench;
            char ref[64];
            std::snprintf(ref, sizeof ref, "features/%s_s%03zu.bin", id, s);
            rec.feature_ref = ref;
            ds.records.push_back(std::move(rec));
            ds.features.push_back({audio, visual, Tensor{}, false});
            latent.push_back(std::move(seq));
        }
    }

    const std::size_t n = ds.records.size();
    std::vector<char> has_actions(n, 0), has_caption(n, 0), has_subtitle(n, 0);
    for (std::size_t i : detail::chosen_subset(n, mix.actions, root.derive(0xA0))) has_actions[i] = 1;
    for (std::size_t i : detail::chosen_subset(n, mix.captions, root.derive(0xA1))) has_caption[i] = 1;
    for (std::size_t i : detail::chosen_subset(n, mix.subtitles, root.derive(0xA2))) has_subtitle[i] = 1;

    Rng text_rng = root.derive(0xA3);
    for (std::size_t i = 0; i < n; ++i) {
        auto& rec = ds.records[i];
        auto& bundle = ds.features[i];
        const auto caption = render_caption(spec, latent[i]);
        if (has_actions[i]) rec.actions = latent[i];
        if (has_caption[i]) rec.caption = caption;
        if (has_subtitle[i] && !spec.fillers.empty()) {
            std::vector<std::string> spoken;
            for (const auto& w : caption) {
                if (text_rng.uniform() < 0.25) spoken.push_back(spec.fillers[text_rng.index(spec.fillers.size())]);
                spoken.push_back(w);
            }
            rec.subtitle = spoken;
            Tensor text = Tensor::zeros({spoken.size(), spec.dims.text});
            auto t = text.mutable_values();
            for (std::size_t r = 0; r < spoken.size(); ++r) {
                const auto& vec = emb.words.at(spoken[r]);
                for (std::size_t j = 0; j < spec.dims.text; ++j)
                    t[r * spec.dims.text + j] = vec[j] + spec.noise * text_rng.normal();
            }
            bundle.text = text;
            bundle.has_subtitle = true;
        } else {
            bundle.text = Tensor({1, spec.dims.text}, ds.unk_text);
        }
    }
    return ds;
}

/// Copy of `ds` in which only a seeded subset of the given fractions keeps
/// action and caption annotations. Used to carve low-resource training splits.
inline Dataset thin_annotations(const Dataset& ds, double keep_actions, double keep_captions, std::uint64_t seed) {
    for (double f : {keep_actions, keep_captions})
        require(f >= 0.0 && f <= 1.0, ErrorKind::Config, "annotation fractions must lie in [0, 1]");
    Dataset out = ds;
    const Rng root(seed);
    std::vector<char> actions(out.records.size(), 0), captions(out.records.size(), 0);
    for (std::size_t i : detail::chosen_subset(out.records.size(), keep_actions, root.derive(1))) actions[i] = 1;
    for (std::size_t i : detail::chosen_subset(out.records.size(), keep_captions, root.derive(2))) captions[i] = 1;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        if (!actions[i]) out.records[i].actions.reset();
        if (!captions[i]) out.records[i].caption.reset();
    }
    return out;
}

}  // namespace vidact
