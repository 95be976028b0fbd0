#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/data/records.hpp"
#include "vidact/decode/decode.hpp"
#include "vidact/metrics/metrics.hpp"
#include "vidact/model/checkpoint.hpp"
#include "vidact/model/transformer.hpp"
#include "vidact/numerics/adam.hpp"

namespace vidact {

enum class Phase { Baseline, Multitask, FinetuneWeak };

inline std::string to_string(Phase p) {
    switch (p) {
        case Phase::Baseline: return "baseline";
        case Phase::Multitask: return "multitask";
        case Phase::FinetuneWeak: return "finetune-weak";
    }
    return "?";
}

inline Phase phase_from_string(const std::string& s) {
    if (s == "baseline") return Phase::Baseline;
    if (s == "multitask") return Phase::Multitask;
    if (s == "finetune-weak") return Phase::FinetuneWeak;
    fail(ErrorKind::Config, "unknown phase '" + s + "' (expected baseline, multitask or finetune-weak)");
}

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 8;
    std::size_t steps = 500;
    std::size_t eval_every = 50;  // steps per validation epoch
    double clip_norm = 1.0;
    double tau = 1.0;              // Gumbel-softmax temperature
    std::size_t weak_samples = 1;  // soft samples per segment in the weak loss
    double caption_weight = 1.0;
    double action_weight = 1.0;
    double weak_weight = 1.0;
    std::uint64_t seed = 0;
    // classifier pre-training
    double classifier_lr = 3e-3;
    std::size_t classifier_steps = 400;
    std::size_t classifier_batch = 16;
    DecodeConfig eval_decode{Strategy::Greedy, 1, 24, 0.0, false};

    void validate() const {
        require(tau > 0.0, ErrorKind::Config, "train: tau must be > 0");
        require(steps > 0 && batch_size > 0 && eval_every > 0, ErrorKind::Config,
                "train: steps, batch_size and eval_every must be > 0");
        require(caption_weight >= 0.0 && action_weight >= 0.0 && weak_weight >= 0.0, ErrorKind::Config,
                "train: loss weights must be >= 0");
        require(lr > 0.0 && classifier_lr > 0.0, ErrorKind::Config, "train: learning rates must be > 0");
        require(weak_samples >= 1 && classifier_batch >= 1, ErrorKind::Config,
                "train: weak_samples and classifier_batch must be >= 1");
        eval_decode.validate();
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lr", c.lr},
         {"batch_size", c.batch_size},
         {"steps", c.steps},
         {"eval_every", c.eval_every},
         {"clip_norm", c.clip_norm},
         {"tau", c.tau},
         {"weak_samples", c.weak_samples},
         {"caption_weight", c.caption_weight},
         {"action_weight", c.action_weight},
         {"weak_weight", c.weak_weight},
         {"seed", c.seed},
         {"classifier_lr", c.classifier_lr},
         {"classifier_steps", c.classifier_steps},
         {"classifier_batch", c.classifier_batch},
         {"eval_decode", c.eval_decode}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    const TrainConfig d;
    c.lr = j.value("lr", d.lr);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.steps = j.value("steps", d.steps);
    c.eval_every = j.value("eval_every", d.eval_every);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.tau = j.value("tau", d.tau);
    c.weak_samples = j.value("weak_samples", d.weak_samples);
    c.caption_weight = j.value("caption_weight", d.caption_weight);
    c.action_weight = j.value("action_weight", d.action_weight);
    c.weak_weight = j.value("weak_weight", d.weak_weight);
    c.seed = j.value("seed", d.seed);
    c.classifier_lr = j.value("classifier_lr", d.classifier_lr);
    c.classifier_steps = j.value("classifier_steps", d.classifier_steps);
    c.classifier_batch = j.value("classifier_batch", d.classifier_batch);
    c.eval_decode = j.value("eval_decode", d.eval_decode);
}

/// Per-step loss values. A term that had nothing to contribute is absent and
/// has count 0.
struct LossReport {
    std::optional<double> caption, action, weak, classifier;
    std::size_t caption_segments = 0, caption_tokens = 0;
    std::size_t action_segments = 0, action_tokens = 0;
    std::size_t weak_segments = 0;
    std::size_t classifier_pairs = 0;
    double total = 0.0;
};

inline nlohmann::json to_json(const LossReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"caption", opt(r.caption)},         {"caption_segments", r.caption_segments},
            {"caption_tokens", r.caption_tokens}, {"action", opt(r.action)},
            {"action_segments", r.action_segments}, {"action_tokens", r.action_tokens},
            {"weak", opt(r.weak)},               {"weak_segments", r.weak_segments},
            {"classifier", opt(r.classifier)},   {"classifier_pairs", r.classifier_pairs},
            {"total", r.total}};
}

/// A scalar loss graph plus its report; `loss` is undefined when no term contributed.
struct LossTerm {
    Tensor loss;
    LossReport report;
};

struct StepResult {
    GradMap grads;
    LossReport report;
};

/// Model plus everything that must persist between phases.
struct TrainingState {
    ActionTransformer model;
    Rng rng;
    bool classifier_pretrained = false;
    std::vector<std::string> phases;  // completed phases, in order
};

inline Checkpoint to_checkpoint(const TrainingState& s, nlohmann::json metadata = nlohmann::json::object()) {
    metadata["classifier_pretrained"] = s.classifier_pretrained;
    metadata["phases"] = s.phases;
    return Checkpoint{s.model.config(), s.model.params(), s.rng, std::move(metadata)};
}

inline TrainingState from_checkpoint(const Checkpoint& c) {
    return TrainingState{c.model(), c.rng, c.metadata.value("classifier_pretrained", false),
                         c.metadata.value("phases", std::vector<std::string>{})};
}

/// `base` with feature widths and vocabulary sizes taken from a dataset.
inline ModelConfig config_for(const Dataset& ds, ModelConfig base = {}) {
    base.d_audio = ds.dims.audio;
    base.d_visual = ds.dims.visual;
    base.d_text = ds.dims.text;
    base.word_vocab = ds.words.size();
    base.action_vocab = ds.actions.size();
    return base;
}

namespace detail {

inline std::vector<int> with_eos(std::vector<int> ids) {
    ids.push_back(kEos);
    return ids;
}

inline std::vector<int> with_sos(const std::vector<int>& ids) {
    std::vector<int> out{kSos};
    out.insert(out.end(), ids.begin(), ids.end());
    return out;
}

/// Summed teacher-forced cross-entropy of one target sequence.
inline Tensor sequence_nll(const ActionTransformer& m, Head head, const Tensor& memory, const std::vector<int>& ids) {
    const Tensor logits = m.decoder_logits(head, memory, m.embed_tokens(head, with_sos(ids)));
    return ops::cross_entropy(logits, with_eos(ids), -1, ops::Reduction::Sum);
}

/// Gradients of parameters that received one in the last backward pass.
inline GradMap collect_grads(const ParamStore& params) {
    GradMap out;
    for (const auto& [name, e] : params.entries())
        if (e.tensor.requires_grad() && e.tensor.has_grad()) out.emplace(name, e.tensor.grad_or_zeros());
    return out;
}

/// Freezes a submodule for the guard's lifetime.
class FreezeGuard {
public:
    FreezeGuard(ParamStore& params, Submodule owner) : params_(params), owner_(owner), was_(params.is_frozen(owner)) {
        params_.set_frozen(owner_, true);
    }
    ~FreezeGuard() { params_.set_frozen(owner_, was_); }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    ParamStore& params_;
    Submodule owner_;
    bool was_;
};

}  // namespace detail

/// Multi-task objective over a batch: teacher-forced CE through the caption
/// decoder for records with a caption (when `with_caption`), and through the
/// action decoder for records with an action sequence. Each term is divided
/// by its own token count, <eos> included.
inline LossTerm multitask_loss(const ActionTransformer& m, const Dataset& ds, const std::vector<std::size_t>& batch,
                               const TrainConfig& cfg, bool with_caption = true) {
    LossTerm out;
    std::vector<Tensor> caption_terms, action_terms;
    for (std::size_t i : batch) {
        const auto& rec = ds.records.at(i);
        require(rec.trainable(), ErrorKind::Data,
                "record " + rec.video_id + "/" + std::to_string(rec.segment) + " has neither caption nor actions");
        const bool use_caption = with_caption && rec.caption.has_value();
        if (!use_caption && !rec.actions) continue;
        const Encodings enc = m.encode(ds.features.at(i));
        if (use_caption) {
            const auto ids = ds.words.encode(*rec.caption);
            caption_terms.push_back(detail::sequence_nll(m, Head::Caption, m.memory(enc, Head::Caption), ids));
            out.report.caption_tokens += ids.size() + 1;
            ++out.report.caption_segments;
        }
        if (rec.actions) {
            const auto ids = ds.actions.encode(*rec.actions);
            action_terms.push_back(detail::sequence_nll(m, Head::Action, m.memory(enc, Head::Action), ids));
            out.report.action_tokens += ids.size() + 1;
            ++out.report.action_segments;
        }
    }
    std::vector<Tensor> total;
    if (!caption_terms.empty()) {
        const Tensor c = ops::scale(ops::add_all(caption_terms), 1.0 / static_cast<double>(out.report.caption_tokens));
        out.report.caption = c.item();
        total.push_back(ops::scale(c, cfg.caption_weight));
    }
    if (!action_terms.empty()) {
        const Tensor a = ops::scale(ops::add_all(action_terms), 1.0 / static_cast<double>(out.report.action_tokens));
        out.report.action = a.item();
        total.push_back(ops::scale(a, cfg.action_weight));
    }
    if (!total.empty()) {
        out.loss = ops::add_all(total);
        out.report.total = out.loss.item();
    }
    return out;
}

/// Zeroes gradients, back-propagates the multi-task loss and returns the gradients.
inline StepResult multitask_step(ActionTransformer& m, const Dataset& ds, const std::vector<std::size_t>& batch,
                                 const TrainConfig& cfg, bool with_caption = true) {
    m.params().zero_grad();
    LossTerm term = multitask_loss(m, ds, batch, cfg, with_caption);
    if (term.loss.defined()) backward(term.loss);
    return {detail::collect_grads(m.params()), term.report};
}

/// Autoregressive soft action sequence from the action decoder. Each step
/// draws a Gumbel-softmax sample from the next-token logits and feeds its
/// expected embedding back in. Generation ends when a sample's argmax is
/// <eos> (that row is dropped) or at the length limit. An immediate <eos>
/// keeps the first sample so the sequence is never empty.
inline Tensor sample_soft_actions(const ActionTransformer& m, const Tensor& memory, double tau, Rng& rng) {
    const std::size_t limit = m.config().max_target_length;
    std::vector<Tensor> inputs{m.embed_tokens(Head::Action, {kSos})};
    std::vector<Tensor> samples;
    for (std::size_t t = 0; t < limit; ++t) {
        const Tensor logits = m.decoder_logits(Head::Action, memory, ops::concat_rows(inputs));
        const Tensor last = ops::slice_rows(logits, logits.rows() - 1, logits.rows());
        const Tensor y = ops::gumbel_softmax_sample(last, tau, rng);
        const auto v = y.values();
        const auto argmax = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
        if (argmax == kEos) {
            if (samples.empty()) samples.push_back(y);
            break;
        }
        samples.push_back(y);
        inputs.push_back(m.embed_soft(Head::Action, y));
    }
    return ops::concat_rows(samples);
}

/// Weak objective: -log S(y', c) for soft action samples y' of each
/// caption-only record, averaged over records and samples.
inline LossTerm weak_loss(const ActionTransformer& m, const Dataset& ds, const std::vector<std::size_t>& batch,
                          const TrainConfig& cfg, Rng& rng) {
    LossTerm out;
    std::vector<Tensor> terms;
    for (std::size_t i : batch) {
        const auto& rec = ds.records.at(i);
        require(rec.caption && !rec.actions, ErrorKind::Data,
                "weak supervision expects caption-only records; " + rec.video_id + "/" +
                    std::to_string(rec.segment) + " does not qualify");
        const Encodings enc = m.encode(ds.features.at(i));
        const Tensor memory = m.memory(enc, Head::Action);
        const Tensor caption_emb = m.classifier_embed_words(ds.words.encode(*rec.caption));
        for (std::size_t k = 0; k < cfg.weak_samples; ++k) {
            const Tensor soft = sample_soft_actions(m, memory, cfg.tau, rng);
            const Tensor z = m.classifier_logit(m.classifier_embed_soft_actions(soft), caption_emb);
            terms.push_back(ops::bce_with_logits(z, 1));
        }
        ++out.report.weak_segments;
    }
    if (!terms.empty()) {
        out.loss = ops::scale(ops::add_all(terms), 1.0 / static_cast<double>(terms.size()));
        out.report.weak = out.loss.item();
        out.report.total = out.loss.item();
    }
    return out;
}

/// Back-propagates the weak loss with the classifier frozen, so no gradient
/// reaches it.
inline StepResult weak_sup_step(TrainingState& state, const Dataset& ds, const std::vector<std::size_t>& batch,
                                const TrainConfig& cfg, Rng& rng) {
    require(state.classifier_pretrained, ErrorKind::Config,
            "weak supervision needs a pre-trained semantic classifier; run pretrain-classifier first");
    auto& params = state.model.params();
    detail::FreezeGuard freeze(params, Submodule::S);
    params.zero_grad();
    LossTerm term = weak_loss(state.model, ds, batch, cfg, rng);
    if (term.loss.defined()) backward(term.loss);
    return {detail::collect_grads(params), term.report};
}

// ---- classifier pre-training ----------------------------------------------

/// A caption drawn uniformly from `captions` whose content differs from
/// `positive`; resamples on equality.
inline const std::vector<std::string>& sample_negative(const std::vector<const std::vector<std::string>*>& captions,
                                                       const std::vector<std::string>& positive, Rng& rng) {
    for (;;) {
        const auto* c = captions[rng.index(captions.size())];
        if (*c != positive) return *c;
    }
}

struct ClassifierPairs {
    std::vector<std::size_t> paired;  // records with both an action sequence and a caption
    std::vector<const std::vector<std::string>*> captions;  // every caption in the dataset
};

inline ClassifierPairs classifier_pairs(const Dataset& ds) {
    ClassifierPairs p;
    std::set<std::vector<std::string>> distinct;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (!r.caption) continue;
        p.captions.push_back(&*r.caption);
        distinct.insert(*r.caption);
        if (r.actions) p.paired.push_back(i);
    }
    require(distinct.size() >= 2, ErrorKind::Config,
            "classifier pre-training needs at least 2 distinct captions to draw negatives");
    require(!p.paired.empty(), ErrorKind::Config, "classifier pre-training needs records with actions and captions");
    return p;
}

/// BCE(S(y, c+), 1) + BCE(S(y, c-), 0) averaged over a batch of paired records.
inline LossTerm classifier_loss(const ActionTransformer& m, const Dataset& ds, const ClassifierPairs& pairs,
                                const std::vector<std::size_t>& batch, Rng& rng) {
    LossTerm out;
    std::vector<Tensor> terms;
    for (std::size_t i : batch) {
        const auto& rec = ds.records.at(i);
        const Tensor y = m.classifier_embed_actions(ds.actions.encode(*rec.actions));
        const auto& negative = sample_negative(pairs.captions, *rec.caption, rng);
        terms.push_back(ops::bce_with_logits(m.classifier_logit(y, m.classifier_embed_words(ds.words.encode(*rec.caption))), 1));
        terms.push_back(ops::bce_with_logits(m.classifier_logit(y, m.classifier_embed_words(ds.words.encode(negative))), 0));
        ++out.report.classifier_pairs;
    }
    out.loss = ops::scale(ops::add_all(terms), 1.0 / static_cast<double>(batch.size()));
    out.report.classifier = out.loss.item();
    out.report.total = out.loss.item();
    return out;
}

namespace detail {

/// Endless reshuffled pass over indices.
class BatchStream {
public:
    BatchStream(std::vector<std::size_t> pool, std::size_t batch, Rng rng)
        : pool_(std::move(pool)), batch_(std::min(batch, pool_.size())), rng_(rng) {
        reshuffle();
    }

    std::vector<std::size_t> next() {
        if (cursor_ + batch_ > pool_.size()) reshuffle();
        std::vector<std::size_t> out(pool_.begin() + static_cast<long>(cursor_),
                                     pool_.begin() + static_cast<long>(cursor_ + batch_));
        cursor_ += batch_;
        return out;
    }

    const Rng& rng() const { return rng_; }

private:
    void reshuffle() {
        rng_.shuffle(pool_);
        cursor_ = 0;
    }

    std::vector<std::size_t> pool_;
    std::size_t batch_;
    Rng rng_;
    std::size_t cursor_ = 0;
};

inline void write_log(std::ostream* log, std::size_t step, const std::string& phase, const LossReport& r) {
    if (!log) return;
    nlohmann::json j = to_json(r);
    j["step"] = step;
    j["phase"] = phase;
    *log << j.dump() << '\n';
}

}  // namespace detail

/// Fits the semantic classifier on (action sequence, caption) pairs with
/// random negative captions. Only classifier parameters change.
inline std::vector<LossReport> pretrain_classifier(TrainingState& state, const Dataset& ds, const TrainConfig& cfg,
                                                   std::ostream* log = nullptr) {
    cfg.validate();
    const ClassifierPairs pairs = classifier_pairs(ds);
    auto& params = state.model.params();
    Rng rng = Rng(cfg.seed).derive(stable_hash("pretrain-classifier"));
    detail::BatchStream stream(pairs.paired, cfg.classifier_batch, rng.derive(1));
    Rng negatives = rng.derive(2);
    AdamState adam;
    const AdamConfig acfg{cfg.classifier_lr, 0.9, 0.999, 1e-8, cfg.clip_norm};
    const auto s_params = params.named_tensors(Submodule::S);
    std::vector<LossReport> reports;
    for (std::size_t step = 1; step <= cfg.classifier_steps; ++step) {
        params.zero_grad();
        LossTerm term = classifier_loss(state.model, ds, pairs, stream.next(), negatives);
        backward(term.loss);
        GradMap grads;
        for (const auto& [name, t] : s_params) grads.emplace(name, t.grad_or_zeros());
        adam_step(s_params, grads, adam, acfg);
        detail::write_log(log, step, "pretrain-classifier", term.report);
        reports.push_back(term.report);
    }
    state.classifier_pretrained = true;
    state.phases.push_back("pretrain-classifier");
    return reports;
}

struct ClassifierEval {
    double mean_positive = 0.0;
    double mean_negative = 0.0;
    double accuracy = 0.0;          // positives above 0.5 and negatives below, over all 2N judgements
    double ranking_accuracy = 0.0;  // S(y, c+) > S(y, c-) over N pairs
    std::size_t pairs = 0;
};

/// Scores each paired record against its caption and one sampled negative.
inline ClassifierEval evaluate_classifier(const ActionTransformer& m, const Dataset& ds, std::uint64_t seed) {
    NoGradGuard guard;
    const ClassifierPairs pairs = classifier_pairs(ds);
    Rng rng(seed);
    ClassifierEval e;
    std::size_t correct = 0, ranked = 0;
    for (std::size_t i : pairs.paired) {
        const auto& rec = ds.records[i];
        const Tensor y = m.classifier_embed_actions(ds.actions.encode(*rec.actions));
        const double pos = m.classify_semantic(y, m.classifier_embed_words(ds.words.encode(*rec.caption))).item();
        const auto& neg_caption = sample_negative(pairs.captions, *rec.caption, rng);
        const double neg = m.classify_semantic(y, m.classifier_embed_words(ds.words.encode(neg_caption))).item();
        e.mean_positive += pos;
        e.mean_negative += neg;
        correct += (pos > 0.5) + (neg < 0.5);
        ranked += pos > neg;
    }
    e.pairs = pairs.paired.size();
    const double n = static_cast<double>(e.pairs);
    e.mean_positive /= n;
    e.mean_negative /= n;
    e.accuracy = static_cast<double>(correct) / (2.0 * n);
    e.ranking_accuracy = static_cast<double>(ranked) / n;
    return e;
}

// ---- phase driver -----------------------------------------------------------

/// Mean METEOR of decoded action sequences against references, over records with actions.
inline double action_meteor(const ActionTransformer& m, const Dataset& ds, const DecodeConfig& cfg) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        if (ds.records[i].actions) idx.push_back(i);
    require(!idx.empty(), ErrorKind::Data, "validation set has no action-annotated records");
    const Dataset sub = ds.subset(idx);
    const auto decoded = decode_dataset(m, sub, Head::Action, cfg);
    double total = 0.0;
    for (std::size_t k = 0; k < decoded.size(); ++k)
        total += metrics::meteor(decoded[k].tokens, serialize_actions(*sub.records[k].actions));
    return total / static_cast<double>(decoded.size());
}

struct TrainResult {
    TrainingState best;         // state at the validation-selected epoch
    std::size_t best_epoch = 0;  // 1-based
    std::vector<double> validation_meteor;
    std::vector<LossReport> reports;
};

/// Runs one phase.
///  - baseline: action-annotated records only, caption decoder unused;
///  - multitask: caption and action cross-entropy over every record;
///  - finetune-weak: the multi-task loss, plus the weak loss when a batch
///    holds no action annotation; the classifier stays frozen.
/// Every `eval_every` steps closes an epoch; the epoch with the highest
/// validation METEOR is returned.
inline TrainResult train(TrainingState state, const Dataset& train_set, const Dataset& validation, Phase phase,
                         const TrainConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    if (phase == Phase::FinetuneWeak) {
        const bool has_multitask =
            std::find(state.phases.begin(), state.phases.end(), "multitask") != state.phases.end();
        require(has_multitask, ErrorKind::Config, "finetune-weak requires a checkpoint from the multitask phase");
        require(state.classifier_pretrained, ErrorKind::Config,
                "finetune-weak requires a pre-trained semantic classifier; run pretrain-classifier first");
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train_set.records.size(); ++i) {
        const auto& r = train_set.records[i];
        require(r.trainable(), ErrorKind::Data,
                "training record " + r.video_id + "/" + std::to_string(r.segment) + " has neither caption nor actions");
        if (phase != Phase::Baseline || r.actions) pool.push_back(i);
    }
    require(!pool.empty(), ErrorKind::Data, "no training records usable by the " + to_string(phase) + " phase");

    auto& params = state.model.params();
    std::optional<detail::FreezeGuard> freeze;
    if (phase == Phase::FinetuneWeak) freeze.emplace(params, Submodule::S);

    const Rng root = Rng(cfg.seed).derive(stable_hash(to_string(phase)));
    detail::BatchStream stream(pool, cfg.batch_size, root.derive(1));
    Rng gumbel = root.derive(2);
    AdamState adam;
    const AdamConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm};
    const auto trainable = params.named_tensors();

    TrainResult result{state, 0, {}, {}};
    double best_meteor = -1.0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const auto batch = stream.next();
        params.zero_grad();
        LossTerm mt = multitask_loss(state.model, train_set, batch, cfg, phase != Phase::Baseline);
        LossReport report = mt.report;
        Tensor total = mt.loss;
        if (phase == Phase::FinetuneWeak) {
            const bool caption_only = std::none_of(batch.begin(), batch.end(), [&](std::size_t i) {
                return train_set.records[i].actions.has_value();
            });
            if (caption_only) {
                LossTerm weak = weak_loss(state.model, train_set, batch, cfg, gumbel);
                report.weak = weak.report.weak;
                report.weak_segments = weak.report.weak_segments;
                const Tensor w = ops::scale(weak.loss, cfg.weak_weight);
                total = total.defined() ? ops::add(total, w) : w;
            }
        }
        if (total.defined()) {
            report.total = total.item();
            backward(total);
            adam_step(trainable, detail::collect_grads(params), adam, acfg);
        }
        detail::write_log(log, step, to_string(phase), report);
        result.reports.push_back(report);

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            const double meteor = action_meteor(state.model, validation, cfg.eval_decode);
            result.validation_meteor.push_back(meteor);
            if (meteor > best_meteor) {
                best_meteor = meteor;
                result.best_epoch = result.validation_meteor.size();
                result.best = state;
            }
        }
    }
    freeze.reset();
    result.best.model.params().set_frozen(Submodule::S, false);
    result.best.rng = gumbel;
    result.best.phases.push_back(to_string(phase));
    return result;
}

inline nlohmann::json train_metadata(const TrainResult& r, Phase phase) {
    return {{"phase", to_string(phase)},
            {"best_epoch", r.best_epoch},
            {"validation_meteor", r.validation_meteor},
            {"steps", r.reports.size()}};
}

}  // namespace vidact
