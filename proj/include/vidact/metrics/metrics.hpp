#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/core/error.hpp"
#include "vidact/data/vocabulary.hpp"

namespace vidact::metrics {

using Tokens = std::vector<std::string>;

/// Clipped n-gram counts of one hypothesis against one reference.
struct NgramTally {
    std::size_t matched = 0;
    std::size_t total = 0;  // n-grams in the hypothesis
};

inline NgramTally ngram_tally(const Tokens& hyp, const Tokens& ref, std::size_t n) {
    NgramTally t;
    if (hyp.size() < n) return t;
    std::map<Tokens, std::size_t> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[Tokens(ref.begin() + i, ref.begin() + i + n)];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[Tokens(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        t.matched += std::min(count, it == ref_counts.end() ? 0 : it->second);
        t.total += count;
    }
    return t;
}

/// Corpus BLEU-n: n-gram counts and lengths are pooled over all pairs before
/// the precisions and brevity penalty are formed.
inline double corpus_bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, std::size_t n) {
    require(n == 1 || n == 2, ErrorKind::Config, "bleu: order must be 1 or 2");
    require(hyps.size() == refs.size(), ErrorKind::Data, "bleu: hypothesis and reference counts differ");
    std::vector<NgramTally> pooled(n);
    std::size_t hyp_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        require(!refs[s].empty(), ErrorKind::Data, "bleu: empty reference in pair " + std::to_string(s));
        hyp_len += hyps[s].size();
        ref_len += refs[s].size();
        for (std::size_t k = 1; k <= n; ++k) {
            const auto t = ngram_tally(hyps[s], refs[s], k);
            pooled[k - 1].matched += t.matched;
            pooled[k - 1].total += t.total;
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_precision = 0.0;
    for (const auto& t : pooled) {
        if (t.matched == 0) return 0.0;
        log_precision += std::log(static_cast<double>(t.matched) / static_cast<double>(t.total));
    }
    const double brevity =
        hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return brevity * std::exp(log_precision / static_cast<double>(n));
}

inline double bleu(const Tokens& hyp, const Tokens& ref, std::size_t n) { return corpus_bleu({hyp}, {ref}, n); }

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
};

struct MeteorDetail {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fmean = 0.0;
    double penalty = 0.0;
    double score = 0.0;
};

/// Exact-match METEOR. Each hypothesis token, left to right, aligns to the
/// leftmost unused identical reference token; this yields the maximum number
/// of matches. A chunk is a run of matches adjacent in both sequences.
inline MeteorDetail meteor_detail(const Tokens& hyp, const Tokens& ref, const MeteorParams& p = {}) {
    require(!ref.empty(), ErrorKind::Data, "meteor: empty reference");
    MeteorDetail d;
    std::vector<char> used(ref.size(), 0);
    std::vector<long> aligned(hyp.size(), -1);
    for (std::size_t i = 0; i < hyp.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (!used[j] && ref[j] == hyp[i]) {
                used[j] = 1;
                aligned[i] = static_cast<long>(j);
                ++d.matches;
                break;
            }
    if (d.matches == 0) return d;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (aligned[i] < 0) continue;
        const bool continues = i > 0 && aligned[i - 1] >= 0 && aligned[i - 1] + 1 == aligned[i];
        if (!continues) ++d.chunks;
    }
    const double m = static_cast<double>(d.matches);
    d.precision = m / static_cast<double>(hyp.size());
    d.recall = m / static_cast<double>(ref.size());
    d.fmean = d.precision * d.recall / (p.alpha * d.precision + (1.0 - p.alpha) * d.recall);
    d.penalty = p.gamma * std::pow(static_cast<double>(d.chunks) / m, p.beta);
    d.score = d.fmean * (1.0 - d.penalty);
    return d;
}

inline double meteor(const Tokens& hyp, const Tokens& ref, const MeteorParams& p = {}) {
    return meteor_detail(hyp, ref, p).score;
}

template <typename T, typename Eq>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b, Eq eq) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (eq(a[i - 1], b[j - 1]) ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Longest order-preserving alignment of steps that match exactly (verb and noun set).
inline std::size_t matched_steps(const ActionSequence& hyp, const ActionSequence& ref) {
    std::vector<std::vector<std::size_t>> lcs(hyp.size() + 1, std::vector<std::size_t>(ref.size() + 1, 0));
    for (std::size_t i = 1; i <= hyp.size(); ++i)
        for (std::size_t j = 1; j <= ref.size(); ++j)
            lcs[i][j] = hyp[i - 1].matches(ref[j - 1]) ? lcs[i - 1][j - 1] + 1 : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    return lcs[hyp.size()][ref.size()];
}

struct ErrorRates {
    double word_error = 0.0;    // percent
    double action_error = 0.0;  // percent
};

inline ErrorRates error_rates(const ActionSequence& hyp, const ActionSequence& ref) {
    require(!ref.empty(), ErrorKind::Data, "error_rates: empty reference");
    const Tokens h = serialize_actions(hyp), r = serialize_actions(ref);
    const auto edits = edit_distance(h, r, [](const auto& a, const auto& b) { return a == b; });
    return {100.0 * static_cast<double>(edits) / static_cast<double>(r.size()),
            100.0 * static_cast<double>(ref.size() - matched_steps(hyp, ref)) / static_cast<double>(ref.size())};
}

/// Predictions for one clip: (hypothesis, reference) per segment.
using ClipPrediction = std::vector<std::pair<ActionSequence, ActionSequence>>;

/// A clip succeeds when every reference step of every segment is predicted
/// exactly, in order.
inline bool clip_succeeds(const ClipPrediction& clip) {
    for (const auto& [hyp, ref] : clip)
        if (matched_steps(hyp, ref) != ref.size()) return false;
    return true;
}

inline double task_success(const std::vector<ClipPrediction>& clips) {
    if (clips.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& c : clips) ok += clip_succeeds(c);
    return 100.0 * static_cast<double>(ok) / static_cast<double>(clips.size());
}

/// One evaluated segment, holding the counts every corpus figure is pooled from.
struct EvalRow {
    std::string video_id;
    int segment = 0;
    Tokens hyp, ref;
    NgramTally unigrams, bigrams;
    double meteor = 0.0;
    std::size_t edits = 0;
    // action-head rows only
    std::optional<std::size_t> ref_steps, matched;
};

struct EvalReport {
    double bleu1 = 0.0, bleu2 = 0.0, meteor = 0.0;
    double word_error = 0.0;
    std::optional<double> action_error, task_success;
    std::vector<EvalRow> rows;
};

inline EvalRow make_row(std::string video_id, int segment, Tokens hyp, Tokens ref) {
    require(!ref.empty(), ErrorKind::Data, "evaluation: empty reference for " + video_id + "/" + std::to_string(segment));
    EvalRow row{std::move(video_id), segment, std::move(hyp), std::move(ref), {}, {}, 0.0, 0, {}, {}};
    row.unigrams = ngram_tally(row.hyp, row.ref, 1);
    row.bigrams = ngram_tally(row.hyp, row.ref, 2);
    row.meteor = meteor(row.hyp, row.ref);
    row.edits = edit_distance(row.hyp, row.ref, [](const auto& a, const auto& b) { return a == b; });
    return row;
}

inline EvalRow make_action_row(std::string video_id, int segment, const ActionSequence& hyp, const ActionSequence& ref) {
    EvalRow row = make_row(std::move(video_id), segment, serialize_actions(hyp), serialize_actions(ref));
    row.ref_steps = ref.size();
    row.matched = matched_steps(hyp, ref);
    return row;
}

/// Pools per-segment rows into corpus figures: BLEU from pooled n-gram
/// counts, METEOR as the segment mean, word error as total edits over total
/// reference tokens, action error as unmatched over total reference steps,
/// and task success over clips grouped by video id.
inline EvalReport summarize(std::vector<EvalRow> rows) {
    EvalReport rep;
    rep.rows = std::move(rows);
    if (rep.rows.empty()) return rep;
    std::size_t hyp_len = 0, ref_len = 0, edits = 0;
    NgramTally u, b;
    double meteor_sum = 0.0;
    bool actions = true;
    std::size_t steps = 0, matched = 0;
    std::map<std::string, bool> clip_ok;
    for (const auto& r : rep.rows) {
        hyp_len += r.hyp.size();
        ref_len += r.ref.size();
        edits += r.edits;
        u.matched += r.unigrams.matched;
        u.total += r.unigrams.total;
        b.matched += r.bigrams.matched;
        b.total += r.bigrams.total;
        meteor_sum += r.meteor;
        actions = actions && r.ref_steps.has_value();
        if (r.ref_steps) {
            steps += *r.ref_steps;
            matched += *r.matched;
            auto [it, fresh] = clip_ok.emplace(r.video_id, true);
            it->second = it->second && *r.matched == *r.ref_steps;
        }
    }
    const double brevity =
        hyp_len == 0 ? 0.0
                     : (hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
    auto precision = [](const NgramTally& t) { return t.total ? static_cast<double>(t.matched) / static_cast<double>(t.total) : 0.0; };
    rep.bleu1 = brevity * precision(u);
    rep.bleu2 = brevity * std::sqrt(precision(u) * precision(b));
    rep.meteor = meteor_sum / static_cast<double>(rep.rows.size());
    rep.word_error = 100.0 * static_cast<double>(edits) / static_cast<double>(ref_len);
    if (actions) {
        rep.action_error = 100.0 * static_cast<double>(steps - matched) / static_cast<double>(steps);
        std::size_t ok = 0;
        for (const auto& [id, good] : clip_ok) ok += good;
        rep.task_success = 100.0 * static_cast<double>(ok) / static_cast<double>(clip_ok.size());
    }
    return rep;
}

inline nlohmann::json to_json(const EvalReport& rep, bool with_rows = true) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j = {{"bleu1", rep.bleu1},
                        {"bleu2", rep.bleu2},
                        {"meteor", rep.meteor},
                        {"word_error", rep.word_error},
                        {"action_error", opt(rep.action_error)},
                        {"task_success", opt(rep.task_success)},
                        {"segments", rep.rows.size()}};
    if (with_rows) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : rep.rows) {
            nlohmann::json row = {{"video_id", r.video_id},
                                  {"segment", r.segment},
                                  {"hyp", r.hyp},
                                  {"ref", r.ref},
                                  {"unigram_matched", r.unigrams.matched},
                                  {"unigram_total", r.unigrams.total},
                                  {"bigram_matched", r.bigrams.matched},
                                  {"bigram_total", r.bigrams.total},
                                  {"meteor", r.meteor},
                                  {"edits", r.edits}};
            if (r.ref_steps) {
                row["ref_steps"] = *r.ref_steps;
                row["matched_steps"] = *r.matched;
            }
            rows.push_back(row);
        }
        j["rows"] = rows;
    }
    return j;
}

/// Plain-text comparison table, one row per method.
inline std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& runs) {
    std::size_t width = 6;
    for (const auto& [name, rep] : runs) width = std::max(width, name.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %7s  %7s  %7s  %10s  %12s  %12s\n", static_cast<int>(width), "Method", "BLEU-1",
                  "BLEU-2", "METEOR", "Word err %", "Action err %", "Task succ %");
    out += buf;
    out += std::string(width + 69, '-') + "\n";
    auto pct = [](const std::optional<double>& v) {
        char s[32];
        if (v) std::snprintf(s, sizeof s, "%.1f", *v);
        else std::snprintf(s, sizeof s, "-");
        return std::string(s);
    };
    for (const auto& [name, rep] : runs) {
        std::snprintf(buf, sizeof buf, "%-*s  %7.3f  %7.3f  %7.3f  %10.1f  %12s  %12s\n", static_cast<int>(width),
                      name.c_str(), rep.bleu1, rep.bleu2, rep.meteor, rep.word_error, pct(rep.action_error).c_str(),
                      pct(rep.task_success).c_str());
        out += buf;
    }
    return out;
}

}  // namespace vidact::metrics
