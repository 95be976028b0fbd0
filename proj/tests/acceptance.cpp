// Acceptance run: one PASS/FAIL line per criterion. With arguments, only the
// named criteria run (e.g. `acceptance A1 A6`).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "support/finite_difference.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "vidact/cli/cli.hpp"
#include "vidact/data/split.hpp"
#include "vidact/data/world.hpp"
#include "vidact/decode/decode.hpp"
#include "vidact/dmp/kitchen.hpp"
#include "vidact/metrics/metrics.hpp"
#include "vidact/numerics/attention.hpp"
#include "vidact/training/training.hpp"

using namespace vidact;
using vidact::testing::check_gradients;
using vidact::testing::random_readout;
using vidact::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double average(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string join(const std::vector<double>& v, const char* f = "%.3f") {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
    return s;
}

// ---- A1 --------------------------------------------------------------------

Verdict gradient_suite() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_op;
    std::size_t checks = 0;
    auto record = [&](const std::string& op, double err) {
        ++checks;
        if (err >= worst) worst = err, worst_op = op;
    };
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(1000 + seed);
        auto rt = [&](Shape s, double sd = 1.0) { return random_tensor(std::move(s), rng, sd); };
        const Tensor a = rt({3, 4}), b = rt({3, 4}), w = rt({4, 5}), bias = rt({5}), v4 = rt({4});
        const Tensor x = rt({4, 6}), gain = rt({6}), shift = rt({6});
        const auto r12 = random_readout(12, seed), r15 = random_readout(15, seed), r24 = random_readout(24, seed);
        auto check = [&](const std::string& op, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
            try {
                record(op, check_gradients(f, std::move(leaves)).max_relative_error);
            } catch (const Error& e) {
                fail(e.kind(), op + ": " + e.what());
            }
        };
        check("matmul", [&] { return r15(ops::matmul(a, w)); }, {a, w});
        check("linear", [&] { return r15(ops::linear(a, w, bias)); }, {a, w, bias});
        check("add", [&] { return r12(ops::add(a, b)); }, {a, b});
        check("sub", [&] { return r12(ops::sub(a, b)); }, {a, b});
        check("mul", [&] { return r12(ops::mul(a, b)); }, {a, b});
        check("scale", [&] { return r12(ops::scale(a, -1.7)); }, {a});
        check("add_constant", [&] {
            const std::vector<double> c(12, 0.3);
            return r12(ops::add_constant(a, c));
        }, {a});
        check("add_bias", [&] { return r12(ops::add_bias(a, v4)); }, {a, v4});
        check("relu", [&] { return r12(ops::relu(a)); }, {a});
        check("sigmoid", [&] { return r12(ops::sigmoid(a)); }, {a});
        check("tanh", [&] { return r12(ops::tanh(a)); }, {a});
        check("transpose", [&] { return r12(ops::transpose(a)); }, {a});
        check("reshape", [&] { return r12(ops::reshape(a, {4, 3})); }, {a});
        check("softmax(rows)", [&] { return r12(ops::softmax(a, -1)); }, {a});
        check("softmax(cols)", [&] { return r12(ops::softmax(a, 0)); }, {a});
        check("log_softmax", [&] { return r12(ops::log_softmax(a)); }, {a});
        check("layer_norm", [&] { return r24(ops::layer_norm(x, gain, shift)); }, {x, gain, shift});
        check("concat_rows", [&] { return random_readout(24, seed)(ops::concat_rows({a, b})); }, {a, b});
        check("concat_cols", [&] { return random_readout(24, seed)(ops::concat_cols({a, b})); }, {a, b});
        check("slice_rows", [&] { return random_readout(8, seed)(ops::slice_rows(a, 1, 3)); }, {a});
        check("slice_cols", [&] { return random_readout(6, seed)(ops::slice_cols(a, 1, 3)); }, {a});
        check("mean_rows", [&] { return random_readout(4, seed)(ops::mean_rows(a)); }, {a});
        check("sum", [&] { return ops::sum(ops::mul(a, a)); }, {a});
        check("mean", [&] { return ops::mean(ops::mul(a, b)); }, {a, b});
        check("add_all", [&] { return ops::add_all({r12(a), r12(ops::mul(a, b)), ops::sum(b)}); }, {a, b});
        check("embedding", [&] { return random_readout(20, seed)(ops::embedding(w, {0, 3, 3, 1})); }, {w});
        {
            const Tensor seq = rt({6, 3}), k = rt({3, 3, 2});
            for (std::size_t stride : {1u, 2u}) {
                const std::size_t n = ops::conv1d_time(seq, k, stride).size();
                check("conv1d_time", [&] { return random_readout(n, seed)(ops::conv1d_time(seq, k, stride)); },
                      {seq, k});
            }
        }
        for (auto red : {ops::Reduction::Mean, ops::Reduction::Sum})
            check("cross_entropy", [&] { return ops::cross_entropy(a, {1, -1, 3}, -1, red); }, {a});
        {
            const Tensor z = Tensor::scalar(rng.normal(), true);
            const Tensor p = Tensor::scalar(0.1 + 0.8 * rng.uniform(), true);
            for (int label : {0, 1}) {
                check("bce_with_logits", [&] { return ops::bce_with_logits(z, label); }, {z});
                check("binary_cross_entropy", [&] { return ops::binary_cross_entropy(p, label); }, {p});
            }
        }
        for (double tau : {0.5, 1.0, 2.0})
            check("gumbel_softmax", [&] {
                Rng draw(seed);
                return random_readout(4, seed)(ops::gumbel_softmax_sample(v4, tau, draw));
            }, {v4});
        {
            const double s = 0.35;
            AttentionWeights aw{rt({8, 8}, s), rt({8}, 0.1), rt({8, 8}, s), rt({8}, 0.1),
                                rt({8, 8}, s), rt({8}, 0.1), rt({8, 8}, s), rt({8}, 0.1)};
            const Tensor q = rt({3, 8}), kv = rt({4, 8});
            for (bool masked : {false, true}) {
                const auto mask = masked ? std::optional(AttentionMask::causal(3, 4)) : std::nullopt;
                check("multi_head_attention", [&] { return r24(ops::multi_head_attention(q, kv, kv, aw, 2, mask)); },
                      {q, kv, aw.wq, aw.bq, aw.wk, aw.wv, aw.bv, aw.wo, aw.bo});
            }
        }
        {
            // whole-model losses on a tiny transformer, a few parameters from each submodule
            const ModelConfig c = testing::tiny_config();
            const ActionTransformer m(c, seed);
            const FeatureBundle bundle = testing::random_bundle(c, rng);
            const std::vector<int> actions{kSos, 5, 6, kEos}, words{kSos, 7, 4, 9, kEos};
            auto seq_loss = [&](Head head, const std::vector<int>& ids) {
                const Encodings enc = m.encode(bundle);
                const std::vector<int> input(ids.begin(), ids.end() - 1), target(ids.begin() + 1, ids.end());
                const Tensor logits = m.decoder_logits(head, m.memory(enc, head), m.embed_tokens(head, input));
                return ops::cross_entropy(logits, target, kPad, ops::Reduction::Sum);
            };
            std::vector<Tensor> leaves;
            for (const char* n : {"E.in_audio.w", "E.in_visual.w", "T.in.w", "D.out.w", "Dp.out.w"})
                leaves.push_back(m.params().get(n));
            check("model caption+action loss",
                  [&] { return ops::add(seq_loss(Head::Caption, words), seq_loss(Head::Action, actions)); }, leaves);
            const Tensor logits = rt({3, c.action_vocab});
            const Tensor soft = ops::softmax(logits);
            const Tensor probs({3, c.action_vocab}, {soft.values().begin(), soft.values().end()}, true);
            for (double& e : m.params().get("S.out.w").mutable_values()) e = rng.normal();
            auto semantic = [&] {
                return ops::bce_with_logits(
                    m.classifier_logit(m.classifier_embed_soft_actions(probs), m.classifier_embed_words({7, 4, 9})), 1);
            };
            check("classifier: soft actions", semantic, {probs});
            {
                std::vector<Tensor> all{probs};
                for (const char* n : {"S.hidden.w", "S.out.w", "S.action_embedding"}) all.push_back(m.params().get(n));
                check("classifier: all leaves", semantic, all);
            }
            for (const char* n : {"S.hidden.w", "S.hidden.b", "S.out.w", "S.action_embedding", "S.word_embedding"})
                check(std::string("classifier: ") + n, semantic, {m.params().get(n)});
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0, std::to_string(checks) + " checks over 5 seeds, worst rel. error " +
                                            fmt("%.2e", worst) + " (" + worst_op + "), " + fmt("%.1f s", secs)};
}

// ---- A2 --------------------------------------------------------------------

Verdict overfit() {
    const auto t0 = Clock::now();
    const Dataset ds = generate_dataset(default_kitchen_world(), 16, 4, {1.0, 0.0, 0.0}, 1);
    TrainingState state{ActionTransformer(config_for(ds), 1), Rng(1), false, {}};
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.steps = 500;
    cfg.eval_every = 50;
    cfg.seed = 1;
    const TrainResult r = train(std::move(state), ds, ds, Phase::Baseline, cfg);
    const auto decoded = decode_dataset(r.best.model, ds, Head::Action, cfg.eval_decode);
    std::vector<metrics::EvalRow> rows;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        rows.push_back(
            metrics::make_action_row(ds.records[i].video_id, ds.records[i].segment, decoded[i].steps, *ds.records[i].actions));
    const auto rep = metrics::summarize(std::move(rows));
    const double secs = seconds_since(t0);
    return {rep.bleu1 >= 0.95 && rep.meteor >= 0.90 && secs < 600.0,
            std::to_string(ds.records.size()) + " segments, BLEU-1 " + fmt("%.3f", rep.bleu1) + ", METEOR " +
                fmt("%.3f", rep.meteor) + " after " + std::to_string(cfg.steps) + " steps, " + fmt("%.0f s", secs)};
}

// ---- A3, A5, A8 share one low-resource study per seed -----------------------

constexpr std::size_t kStudyVideos = 200;
constexpr double kStudyNoise = 1.5;
constexpr std::size_t kStudySteps = 1000;
constexpr double kStudyLr = 3e-3;
constexpr std::size_t kStudyClassifierSteps = 1500;

struct SeedStudy {
    double baseline = 0, multitask = 0, finetune = 0;  // held-out action METEOR
    double error_plain = 0, error_masked = 0;          // action error rate (%)
    double success_plain = 0, success_masked = 0;      // task success rate (%)
    double exact_plain = 0, exact_masked = 0;          // segments decoded exactly (%)
    double margin = 0, accuracy = 0;                   // classifier on held-out pairs
};

metrics::EvalReport score(const ActionTransformer& m, const Dataset& ds, bool masked) {
    DecodeConfig dc{Strategy::Greedy, 1, 24, 0.0, masked};
    const auto decoded = decode_dataset(m, ds, Head::Action, dc);
    std::vector<metrics::EvalRow> rows;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        rows.push_back(
            metrics::make_action_row(ds.records[i].video_id, ds.records[i].segment, decoded[i].steps, *ds.records[i].actions));
    return metrics::summarize(std::move(rows));
}

double exact_segments(const metrics::EvalReport& r) {
    std::size_t ok = 0;
    for (const auto& row : r.rows) ok += row.hyp == row.ref;
    return r.rows.empty() ? 0.0 : 100.0 * static_cast<double>(ok) / static_cast<double>(r.rows.size());
}

SeedStudy run_study(std::uint64_t seed) {
    const auto t0 = Clock::now();
    WorldSpec world = default_kitchen_world();
    world.noise = kStudyNoise;
    const Dataset ds = generate_dataset(world, kStudyVideos, 4, {1.0, 1.0, 0.0}, seed);
    const SplitView view = cross_validation_round(split_dataset(ds, 5, seed), 0);
    const Dataset train_set = thin_annotations(view.train, 0.1, 1.0, seed);

    TrainConfig cfg;
    cfg.lr = kStudyLr;
    cfg.steps = kStudySteps;
    cfg.eval_every = kStudySteps / 10;
    cfg.classifier_steps = kStudyClassifierSteps;
    cfg.seed = seed;
    const DecodeConfig greedy{Strategy::Greedy, 1, 24, 0.0, false};
    const TrainingState init{ActionTransformer(config_for(ds), seed), Rng(seed), false, {}};

    SeedStudy s;
    const TrainResult base = train(init, train_set, view.validation, Phase::Baseline, cfg);
    s.baseline = action_meteor(base.best.model, view.test, greedy);
    const TrainResult multi = train(init, train_set, view.validation, Phase::Multitask, cfg);
    s.multitask = action_meteor(multi.best.model, view.test, greedy);

    TrainingState with_classifier = multi.best;
    pretrain_classifier(with_classifier, train_set, cfg);
    const ClassifierEval ce = evaluate_classifier(with_classifier.model, view.test, seed);
    s.margin = ce.mean_positive - ce.mean_negative;
    s.accuracy = ce.accuracy;

    const TrainResult fine = train(with_classifier, train_set, view.validation, Phase::FinetuneWeak, cfg);
    s.finetune = action_meteor(fine.best.model, view.test, greedy);

    const auto plain = score(fine.best.model, view.test, false), masked = score(fine.best.model, view.test, true);
    s.error_plain = plain.action_error.value_or(0.0);
    s.error_masked = masked.action_error.value_or(0.0);
    s.success_plain = plain.task_success.value_or(0.0);
    s.success_masked = masked.task_success.value_or(0.0);
    s.exact_plain = exact_segments(plain);
    s.exact_masked = exact_segments(masked);
    std::cerr << "  seed " << seed << ": METEOR " << s.baseline << " / " << s.multitask << " / " << s.finetune
              << ", action error " << s.error_plain << " -> " << s.error_masked << ", task success " << s.success_plain
              << " -> " << s.success_masked << ", exact segments " << s.exact_plain << " -> " << s.exact_masked
              << ", classifier margin " << s.margin << " acc " << s.accuracy << " ("
              << seconds_since(t0) << " s)\n";
    return s;
}

std::vector<SeedStudy>& studies() {
    static std::vector<SeedStudy> all = [] {
        std::vector<SeedStudy> v;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) v.push_back(run_study(seed));
        return v;
    }();
    return all;
}

template <typename F>
std::vector<double> column(F f) {
    std::vector<double> v;
    for (const auto& s : studies()) v.push_back(f(s));
    return v;
}

Verdict style_transfer_ordering() {
    const auto b = column([](const SeedStudy& s) { return s.baseline; });
    const auto m = column([](const SeedStudy& s) { return s.multitask; });
    const auto f = column([](const SeedStudy& s) { return s.finetune; });
    const double mb = median(b), mm = median(m), mf = median(f);
    return {mm >= 1.2 * mb && mf >= mm,
            "median held-out METEOR baseline " + fmt("%.3f", mb) + ", multitask " + fmt("%.3f", mm) + " (" +
                fmt("%.2fx", mm / mb) + "), finetune-weak " + fmt("%.3f", mf) + "; per seed multitask/baseline " +
                join(column([](const SeedStudy& s) { return s.multitask / s.baseline; }), "%.2f")};
}

Verdict masking() {
    const auto ep = column([](const SeedStudy& s) { return s.error_plain; });
    const auto em = column([](const SeedStudy& s) { return s.error_masked; });
    const auto sp = column([](const SeedStudy& s) { return s.success_plain; });
    const auto sm = column([](const SeedStudy& s) { return s.success_masked; });
    const auto xp = column([](const SeedStudy& s) { return s.exact_plain; });
    const auto xm = column([](const SeedStudy& s) { return s.exact_masked; });
    return {average(em) < average(ep) && average(sm) > average(sp),
            "mean over 5 seeds: action error " + fmt("%.1f", average(ep)) + " -> " + fmt("%.1f", average(em)) +
                ", task success per video " + fmt("%.1f", average(sp)) + " -> " + fmt("%.1f", average(sm)) +
                " (exact segments, not scored: " + fmt("%.1f", average(xp)) + " -> " + fmt("%.1f", average(xm)) + ")"};
}

Verdict classifier() {
    const auto margin = column([](const SeedStudy& s) { return s.margin; });
    const auto acc = column([](const SeedStudy& s) { return s.accuracy; });
    return {average(margin) >= 0.6 && average(acc) >= 0.9,
            "held-out pairs, mean over 5 seeds: margin " + fmt("%.3f", average(margin)) + ", accuracy " +
                fmt("%.3f", average(acc)) + "; per seed margin " + join(margin) + ", accuracy " + join(acc)};
}

// ---- A4 --------------------------------------------------------------------

Verdict invariants() {
    WorldSpec w = default_kitchen_world();
    w.dims = {6, 10, 5};
    w.video_dim = 6;
    w.image_dim = 4;
    const Dataset captions = generate_dataset(w, 4, 3, {0.0, 1.0, 0.0}, 2);
    ModelConfig c = config_for(captions, testing::tiny_config());
    c.max_target_length = 24;
    std::vector<std::size_t> batch(captions.records.size());
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
    TrainConfig cfg;

    bool s_identical = true, s_no_grad = true, dprime_zero = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TrainingState state{ActionTransformer(c, seed), Rng(seed), true, {}};
        Rng init(seed);
        for (double& v : state.model.params().get("S.out.w").mutable_values()) v = init.normal();
        std::vector<std::vector<double>> before;
        for (const auto& [_, t] : state.model.params().named_tensors(Submodule::S))
            before.emplace_back(t.values().begin(), t.values().end());
        Rng rng(seed + 100);
        const auto [grads, report] = weak_sup_step(state, captions, batch, cfg, rng);
        std::size_t k = 0;
        for (const auto& [_, t] : state.model.params().named_tensors(Submodule::S)) {
            s_identical = s_identical && std::vector<double>(t.values().begin(), t.values().end()) == before[k++];
            s_no_grad = s_no_grad && !t.has_grad();
        }
        for (const auto& [name, _] : grads) s_no_grad = s_no_grad && state.model.params().owner(name) != Submodule::S;

        ActionTransformer m(c, seed);
        const auto [mt_grads, mt_report] = multitask_step(m, captions, batch, cfg);
        for (const auto& [name, g] : mt_grads)
            if (m.params().owner(name) == Submodule::DPrime)
                for (double v : g) dprime_zero = dprime_zero && v == 0.0;
        for (const auto& [_, t] : m.params().named_tensors(Submodule::DPrime)) dprime_zero = dprime_zero && !t.has_grad();
        dprime_zero = dprime_zero && !mt_report.action.has_value();
    }
    return {s_identical && s_no_grad && dprime_zero,
            std::string("5 seeds: S bit-identical after weak step ") + (s_identical ? "yes" : "NO") +
                ", no S gradient " + (s_no_grad ? "yes" : "NO") + ", caption-only batch leaves D' gradient zero " +
                (dprime_zero ? "yes" : "NO")};
}

// ---- A6 --------------------------------------------------------------------

Verdict metric_oracles() {
    using metrics::Tokens;
    bool bleu_ok = true;
    Rng rng(42);
    auto random_tokens = [&] {
        static const Tokens alphabet{"a", "b", "c", "d", "e"};
        Tokens t(1 + rng.index(7));
        for (auto& w : t) w = alphabet[rng.index(alphabet.size())];
        return t;
    };
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tokens> hyps, refs;
        const std::size_t pairs = 1 + rng.index(4);
        for (std::size_t s = 0; s < pairs; ++s) hyps.push_back(random_tokens()), refs.push_back(random_tokens());
        for (std::size_t n : {1u, 2u}) bleu_ok = bleu_ok && metrics::corpus_bleu(hyps, refs, n) == testing::oracle_bleu(hyps, refs, n);
    }
    const Tokens five{"a", "b", "c", "d", "e"};
    const double identity = metrics::meteor(five, five), disjoint = metrics::meteor({"x", "y"}, five);
    const bool meteor_ok = std::abs(identity - 0.996) < 1e-9 && std::abs(disjoint) < 1e-9;

    const ActionSequence ref{{"take", {"cup"}}, {"pour", {"milk", "cup"}}};
    const ActionSequence one_wrong{{"take", {"cup"}}, {"pour", {"milk", "bowl"}}};
    const auto exact = metrics::error_rates(ref, ref), partial = metrics::error_rates(one_wrong, ref),
               empty = metrics::error_rates({}, ref);
    const bool rates_ok = exact.action_error == 0.0 && exact.word_error == 0.0 && partial.action_error == 50.0 &&
                          partial.word_error == 20.0 && empty.action_error == 100.0 && empty.word_error == 100.0;
    const bool success_ok = metrics::task_success({{{ref, ref}}, {{one_wrong, ref}}}) == 50.0 &&
                            metrics::task_success({{{ref, ref}, {ref, ref}}}) == 100.0 &&
                            metrics::task_success({}) == 0.0;
    return {bleu_ok && meteor_ok && rates_ok && success_ok,
            std::string("BLEU vs brute force on 20 cases ") + (bleu_ok ? "exact" : "MISMATCH") + ", METEOR identity " +
                fmt("%.12f", identity) + " disjoint " + fmt("%.1f", disjoint) + ", error rates " +
                (rates_ok ? "ok" : "WRONG") + ", task success " + (success_ok ? "ok" : "WRONG")};
}

// ---- A7 --------------------------------------------------------------------

Verdict dmp_suite() {
    dmp::DmpPrimitive zero = dmp::fit_dmp(dmp::minimum_jerk({0.0, 0.0, 0.0}, {0.3, -0.2, 0.1}, 1.0, 0.01));
    for (auto& row : zero.weights) std::fill(row.begin(), row.end(), 0.0);
    const dmp::Point start{0.1, 0.2, -0.3}, goal{0.5, -0.4, 0.2};
    const auto path = dmp::rollout(zero, start, goal, 0.001, 5.0 * zero.tau);
    double rel = 0.0;
    for (std::size_t d = 0; d < 3; ++d)
        rel = std::max(rel, std::abs(path.y.back()[d] - goal[d]) / std::abs(goal[d] - start[d]));

    const auto demo = dmp::minimum_jerk({0.0, 0.1, 0.2}, {0.4, -0.3, 0.5}, 1.0, 0.005, {0.0, 0.0, 0.15});
    const auto fitted = dmp::fit_dmp(demo);
    const auto replay = dmp::rollout(fitted, demo.y.front(), demo.y.back(), 0.005, fitted.tau);
    double range = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        double lo = 1e300, hi = -1e300;
        for (const auto& y : demo.y) lo = std::min(lo, y[d]), hi = std::max(hi, y[d]);
        range = std::max(range, hi - lo);
    }
    const double err = dmp::rmse(demo, replay);

    const auto tasks = dmp::default_tasks();
    const auto& task = tasks.front();
    const auto result = dmp::align_and_execute(task.subtasks, dmp::default_library(), dmp::make_scene(task.objects), task);
    return {rel < 1e-3 && err < 0.05 * range && result.success,
            "zero forcing at 5 tau: rel. goal error " + fmt("%.1e", rel) + "; fit RMSE " +
                fmt("%.2f%%", 100.0 * err / range) + " of range; task '" + task.name + "' " +
                (result.success ? "succeeds" : "FAILS")};
}

// ---- A9 --------------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) {
            std::ifstream in(e.path(), std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            files[fs::relative(e.path(), root).string()] = ss.str();
        }
    return files;
}

Verdict determinism() {
    const fs::path base = fs::temp_directory_path() / ("vidact_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base);
    const fs::path home = fs::current_path();
    const nlohmann::json cfg = {
        {"dataset", {{"videos", 10}, {"segments_per_video", 3}, {"train_actions", 0.3}}},
        {"model",
         {{"d_model_av", 8}, {"d_model_text", 8}, {"d_model_dec", 8}, {"heads", 2}, {"encoder_layers", 1},
          {"decoder_layers", 1}, {"ff_multiplier", 2}, {"classifier_hidden", 8}, {"classifier_embedding", 4}}},
        {"train", {{"steps", 6}, {"eval_every", 3}, {"batch_size", 4}, {"classifier_steps", 6}}},
        {"decode", {{"strategy", "beam"}, {"beam_width", 3}, {"max_length", 10}}},
        {"seed", 4},
    };
    const std::vector<std::vector<std::string>> stages{
        {"gen-data", "--out", "data"},
        {"train", "--phase", "baseline", "--data", "data", "--out", "baseline"},
        {"train", "--phase", "multitask", "--data", "data", "--init", "baseline/checkpoint.json", "--out", "multitask"},
        {"pretrain-classifier", "--data", "data", "--init", "multitask/checkpoint.json", "--out", "classifier"},
        {"finetune-weak", "--data", "data", "--init", "classifier/checkpoint.json", "--out", "finetune"},
        {"decode", "--checkpoint", "finetune/checkpoint.json", "--data", "data", "--task-knowledge", "--out", "decoded"},
        {"eval", "--checkpoint", "finetune/checkpoint.json", "--data", "data", "--out", "eval"},
        {"exec-sim", "--task", "coffee", "--out", "sim"},
    };
    bool ran = true;
    for (const char* run : {"first", "second"}) {
        fs::create_directories(base / run);
        fs::current_path(base / run);
        std::ofstream("run.json") << cfg.dump(2);
        for (auto args : stages) {
            args.insert(args.begin() + 1, {"--config", "run.json"});
            std::ostringstream out, err;
            if (cli::run(args, out, err) != 0) {
                ran = false;
                std::cerr << "  stage " << args[0] << " failed: " << err.str();
            }
        }
        fs::current_path(home);
    }
    const auto a = tree(base / "first"), b = tree(base / "second");
    std::size_t differing = 0;
    for (const auto& [name, content] : a) {
        const auto it = b.find(name);
        if (it == b.end() || it->second != content) {
            ++differing;
            std::cerr << "  differs: " << name << "\n";
        }
    }
    differing += b.size() > a.size() ? b.size() - a.size() : 0;
    fs::remove_all(base);
    return {ran && differing == 0 && !a.empty(),
            std::to_string(stages.size()) + " pipeline stages run twice, " + std::to_string(a.size()) +
                " artifacts compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"A1", gradient_suite},  {"A2", overfit},        {"A3", style_transfer_ordering},
        {"A4", invariants},      {"A5", masking},        {"A6", metric_oracles},
        {"A7", dmp_suite},       {"A8", classifier},     {"A9", determinism},
    };
    std::set<std::string> wanted(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [id, check] : criteria) {
        if (!wanted.empty() && !wanted.count(id)) continue;
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  [" << fmt("%.1f s", seconds_since(t0))
                  << "]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
