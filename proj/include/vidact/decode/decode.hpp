#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/data/records.hpp"
#include "vidact/model/transformer.hpp"

namespace vidact {

/// Objects present on the workbench, optionally with the verbs allowed there.
struct TaskKnowledge {
    std::vector<std::string> allowed_nouns;
    std::optional<std::vector<std::string>> allowed_verbs;
};

enum class Strategy { Greedy, Beam };

struct DecodeConfig {
    Strategy strategy = Strategy::Beam;
    std::size_t beam_width = 4;
    std::size_t max_length = 24;  // generated tokens, <eos> included
    double length_penalty = 0.0;  // hypotheses are ranked by score / length^penalty
    bool use_task_knowledge = false;

    void validate() const {
        require(beam_width >= 1, ErrorKind::Config, "decode: beam width must be >= 1");
        require(max_length >= 1, ErrorKind::Config, "decode: max length must be >= 1");
        require(length_penalty >= 0.0, ErrorKind::Config, "decode: length penalty must be >= 0");
    }
};

inline std::string to_string(Strategy s) { return s == Strategy::Greedy ? "greedy" : "beam"; }

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "greedy") return Strategy::Greedy;
    if (s == "beam") return Strategy::Beam;
    fail(ErrorKind::Config, "unknown decoding strategy '" + s + "' (expected greedy or beam)");
}

inline void to_json(nlohmann::json& j, const DecodeConfig& c) {
    j = {{"strategy", to_string(c.strategy)},
         {"beam_width", c.beam_width},
         {"max_length", c.max_length},
         {"length_penalty", c.length_penalty},
         {"use_task_knowledge", c.use_task_knowledge}};
}

inline void from_json(const nlohmann::json& j, DecodeConfig& c) {
    c.strategy = strategy_from_string(j.value("strategy", to_string(c.strategy)));
    c.beam_width = j.value("beam_width", c.beam_width);
    c.max_length = j.value("max_length", c.max_length);
    c.length_penalty = j.value("length_penalty", c.length_penalty);
    c.use_task_knowledge = j.value("use_task_knowledge", c.use_task_knowledge);
}

/// Per-token permission over the action vocabulary.
struct VocabMask {
    std::vector<char> allowed;
    std::string id = "none";
};

/// Specials stay allowed; nouns outside the bench, and verbs outside the
/// optional verb set, are excluded.
inline VocabMask build_mask(const TaskKnowledge& knowledge, const ActionVocabulary& vocab) {
    VocabMask m{std::vector<char>(vocab.size(), 1), {}};
    std::set<std::string> nouns;
    for (const auto& n : knowledge.allowed_nouns) {
        require(vocab.is_noun(vocab.id(n)), ErrorKind::Config, "task knowledge names unknown noun '" + n + "'");
        nouns.insert(n);
    }
    for (int id = vocab.first_noun(); id < static_cast<int>(vocab.size()); ++id)
        m.allowed[static_cast<std::size_t>(id)] = nouns.contains(vocab.token(id));
    std::string key;
    for (const auto& n : nouns) key += n + ",";
    if (knowledge.allowed_verbs) {
        std::set<std::string> verbs;
        for (const auto& v : *knowledge.allowed_verbs) {
            require(vocab.is_verb(vocab.id(v)), ErrorKind::Config, "task knowledge names unknown verb '" + v + "'");
            verbs.insert(v);
        }
        for (int id = kNumSpecials; id < vocab.first_noun(); ++id)
            m.allowed[static_cast<std::size_t>(id)] = verbs.contains(vocab.token(id));
        key += "|";
        for (const auto& v : verbs) key += v + ",";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "bench-%016llx", static_cast<unsigned long long>(stable_hash(key)));
    m.id = buf;
    return m;
}

/// Sets excluded logits to -inf so they carry zero probability after softmax.
inline Tensor apply_task_mask(const Tensor& logits, const VocabMask& mask) {
    require(mask.allowed.size() == logits.size(), ErrorKind::Index,
            "task mask covers " + std::to_string(mask.allowed.size()) + " tokens, logits have " +
                std::to_string(logits.size()));
    require(mask.allowed[kEos], ErrorKind::Config, "task mask must not exclude <eos>");
    std::vector<double> out(logits.values().begin(), logits.values().end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!mask.allowed[i]) out[i] = -std::numeric_limits<double>::infinity();
    return Tensor(logits.shape(), std::move(out));
}

struct Hypothesis {
    std::vector<int> tokens;  // without <sos> and <eos>
    double score = 0.0;       // summed log-probability, <eos> included when finished
    bool truncated = false;   // max length reached before <eos>
};

namespace detail {

inline std::vector<double> log_probs(const Tensor& logits) {
    const auto in = logits.values();
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lse;
    return out;
}

/// Incremental decoder: memory projected once, logits of the last position per call.
class StepFn {
public:
    StepFn(const ActionTransformer& model, const Encodings& enc, Head head, const VocabMask* mask)
        : model_(model), head_(head), mask_(mask), memory_(model.memory(enc, head)) {}

    std::vector<double> operator()(const std::vector<int>& prefix) const {
        const Tensor all = model_.decoder_logits(head_, memory_, model_.embed_tokens(head_, prefix));
        Tensor last = ops::reshape(ops::slice_rows(all, prefix.size() - 1, prefix.size()), {all.cols()});
        if (mask_) last = apply_task_mask(last, *mask_);
        return log_probs(last);
    }

private:
    const ActionTransformer& model_;
    Head head_;
    const VocabMask* mask_;
    Tensor memory_;
};

inline double ranking_score(const Hypothesis& h, double penalty) {
    if (penalty == 0.0) return h.score;
    const double len = static_cast<double>(h.tokens.size() + (h.truncated ? 0 : 1));
    return h.score / std::pow(std::max(len, 1.0), penalty);
}

inline Hypothesis greedy(const StepFn& step, std::size_t max_len) {
    Hypothesis h;
    std::vector<int> prefix{kSos};
    for (std::size_t t = 0; t < max_len; ++t) {
        const auto lp = step(prefix);
        const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        h.score += lp[static_cast<std::size_t>(best)];
        if (best == kEos) return h;
        h.tokens.push_back(best);
        prefix.push_back(best);
    }
    h.truncated = true;
    return h;
}

inline Hypothesis beam(const StepFn& step, std::size_t max_len, std::size_t width, double penalty) {
    struct Live {
        std::vector<int> prefix;
        double score;
    };
    std::vector<Live> live{{{kSos}, 0.0}};
    std::vector<Hypothesis> finished;
    for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
        struct Candidate {
            std::size_t parent;
            int token;
            double score;
        };
        std::vector<Candidate> cand;
        for (std::size_t b = 0; b < live.size(); ++b) {
            const auto lp = step(live[b].prefix);
            std::vector<int> order(lp.size());
            for (std::size_t i = 0; i < lp.size(); ++i) order[i] = static_cast<int>(i);
            const std::size_t keep = std::min(width, order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(), [&](int a, int c) {
                return lp[static_cast<std::size_t>(a)] > lp[static_cast<std::size_t>(c)] ||
                       (lp[static_cast<std::size_t>(a)] == lp[static_cast<std::size_t>(c)] && a < c);
            });
            for (std::size_t k = 0; k < keep; ++k) {
                const double s = lp[static_cast<std::size_t>(order[k])];
                if (std::isinf(s)) continue;
                cand.push_back({b, order[k], live[b].score + s});
            }
        }
        std::stable_sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& c) { return a.score > c.score; });
        std::vector<Live> next;
        for (const auto& c : cand) {
            if (next.size() >= width) break;
            if (c.token == kEos) {
                finished.push_back({{live[c.parent].prefix.begin() + 1, live[c.parent].prefix.end()}, c.score, false});
                continue;
            }
            auto prefix = live[c.parent].prefix;
            prefix.push_back(c.token);
            next.push_back({std::move(prefix), c.score});
        }
        live = std::move(next);
        // log-probabilities only decrease, so with no length normalization a
        // finished hypothesis that beats every live one cannot be overtaken
        if (penalty == 0.0 && !finished.empty() && !live.empty()) {
            double best_done = -std::numeric_limits<double>::infinity();
            for (const auto& f : finished) best_done = std::max(best_done, f.score);
            if (best_done >= live.front().score) break;
        }
    }
    std::vector<Hypothesis> pool = finished;
    if (pool.empty())
        for (const auto& l : live) pool.push_back({{l.prefix.begin() + 1, l.prefix.end()}, l.score, true});
    return *std::max_element(pool.begin(), pool.end(), [&](const Hypothesis& a, const Hypothesis& b) {
        return ranking_score(a, penalty) < ranking_score(b, penalty);
    });
}

}  // namespace detail

/// Decodes one segment from <sos>. Beam search returns the greedy hypothesis
/// instead when that scores higher, so beam never ranks below greedy.
inline Hypothesis decode_sequence(const ActionTransformer& model, const Encodings& enc, Head head,
                                  const DecodeConfig& cfg, const VocabMask* mask = nullptr) {
    cfg.validate();
    NoGradGuard guard;
    const detail::StepFn step(model, enc, head, mask);
    const std::size_t max_len = std::min(cfg.max_length, model.config().max_target_length + 1);
    const Hypothesis g = detail::greedy(step, max_len);
    if (cfg.strategy == Strategy::Greedy || cfg.beam_width == 1) return g;
    const Hypothesis b = detail::beam(step, max_len, cfg.beam_width, cfg.length_penalty);
    return detail::ranking_score(g, cfg.length_penalty) > detail::ranking_score(b, cfg.length_penalty) ? g : b;
}

struct Detokenized {
    ActionSequence steps;
    std::vector<std::string> orphan_nouns;  // nouns seen before any verb
    std::vector<std::string> warnings;
};

/// Groups tokens into steps: each verb opens a step and following nouns
/// attach to it. Decoding stops at <eos>; other specials are skipped.
inline Detokenized detokenize_actions(const std::vector<std::string>& tokens, const ActionVocabulary& vocab) {
    Detokenized out;
    for (const auto& tok : tokens) {
        const int id = vocab.tokens().contains(tok) ? vocab.id(tok) : kUnk;
        if (id == kEos) break;
        if (vocab.is_verb(id)) {
            out.steps.push_back({tok, {}});
        } else if (vocab.is_noun(id)) {
            if (out.steps.empty()) {
                out.orphan_nouns.push_back(tok);
                out.warnings.push_back("noun '" + tok + "' precedes any verb");
            } else {
                out.steps.back().nouns.push_back(tok);
            }
        }
    }
    return out;
}

inline Detokenized detokenize_actions(const std::vector<int>& ids, const ActionVocabulary& vocab) {
    return detokenize_actions(vocab.tokens().decode(ids), vocab);
}

/// Decoded output of one segment, written as one JSON line.
struct DecodedSegment {
    std::string video_id;
    int segment = 0;
    Head head = Head::Action;
    std::vector<std::string> tokens;
    ActionSequence steps;
    std::vector<std::string> warnings;
    double score = 0.0;
    bool truncated = false;
    std::string mask_id = "none";
};

inline nlohmann::json to_json(const DecodedSegment& d) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : d.steps) steps.push_back({{"verb", s.verb}, {"nouns", s.nouns}});
    return {{"video_id", d.video_id}, {"segment", d.segment}, {"head", to_string(d.head)},
            {"tokens", d.tokens},     {"steps", steps},       {"score", d.score},
            {"truncated", d.truncated}, {"warnings", d.warnings}, {"mask_id", d.mask_id}};
}

inline DecodedSegment decoded_from_json(const nlohmann::json& j) {
    DecodedSegment d;
    d.video_id = j.at("video_id").get<std::string>();
    d.segment = j.at("segment").get<int>();
    d.head = j.value("head", "action") == "caption" ? Head::Caption : Head::Action;
    d.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& s : j.value("steps", nlohmann::json::array()))
        d.steps.push_back({s.at("verb").get<std::string>(), s.at("nouns").get<std::vector<std::string>>()});
    d.score = j.value("score", 0.0);
    d.truncated = j.value("truncated", false);
    d.mask_id = j.value("mask_id", "none");
    return d;
}

/// Decodes every record of a dataset with one head. With task knowledge
/// enabled, each action segment is masked by its own bench.
inline std::vector<DecodedSegment> decode_dataset(const ActionTransformer& model, const Dataset& ds, Head head,
                                                  const DecodeConfig& cfg) {
    std::vector<DecodedSegment> out;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& rec = ds.records[i];
        std::optional<VocabMask> mask;
        if (head == Head::Action && cfg.use_task_knowledge) mask = build_mask({rec.bench, std::nullopt}, ds.actions);
        NoGradGuard guard;
        const Encodings enc = model.encode(ds.features[i]);
        const Hypothesis h = decode_sequence(model, enc, head, cfg, mask ? &*mask : nullptr);
        DecodedSegment d{rec.video_id, rec.segment, head, {}, {}, {}, h.score, h.truncated, mask ? mask->id : "none"};
        if (head == Head::Action) {
            d.tokens = ds.actions.tokens().decode(h.tokens);
            auto det = detokenize_actions(d.tokens, ds.actions);
            d.steps = std::move(det.steps);
            d.warnings = std::move(det.warnings);
        } else {
            d.tokens = ds.words.decode(h.tokens);
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace vidact
