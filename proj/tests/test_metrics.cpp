#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "vidact/core/rng.hpp"
#include "vidact/metrics/metrics.hpp"

using namespace vidact;
using namespace vidact::metrics;
using vidact::testing::oracle_bleu;

namespace {

Tokens random_tokens(Rng& rng, std::size_t min_len, std::size_t max_len) {
    static const Tokens alphabet{"a", "b", "c", "d", "e"};
    Tokens t(min_len + rng.index(max_len - min_len + 1));
    for (auto& w : t) w = alphabet[rng.index(alphabet.size())];
    return t;
}

ActionSequence seq(std::initializer_list<ActionStep> steps) { return steps; }

}  // namespace

TEST(Bleu, IdentityAndDisjoint) {
    const Tokens ref{"take", "celery", "wash", "celery"};
    EXPECT_DOUBLE_EQ(bleu(ref, ref, 1), 1.0);
    EXPECT_DOUBLE_EQ(bleu(ref, ref, 2), 1.0);
    EXPECT_DOUBLE_EQ(bleu({"x", "y"}, ref, 1), 0.0);
}

TEST(Bleu, BrevityPenaltyHandCases) {
    const Tokens hyp{"take", "celery", "wash", "celery"};
    // reference of 6 tokens: exp(1 - 6/4) with perfect precision
    EXPECT_NEAR(bleu(hyp, {"take", "celery", "wash", "celery", "pour", "celery"}, 1), std::exp(-0.5), 1e-12);
    // reference of 5 tokens: exp(1 - 5/4) ~ 0.7788
    EXPECT_NEAR(bleu(hyp, {"take", "celery", "wash", "celery", "pour"}, 1), std::exp(-0.25), 1e-12);
    EXPECT_NEAR(std::exp(-0.25), 0.7788, 1e-4);
}

TEST(Bleu, EmptyReferenceIsDataError) {
    try {
        bleu({"a"}, {}, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Data);
    }
}

TEST(Bleu, MatchesBruteForceOracleOnRandomCorpora) {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tokens> hyps, refs;
        const std::size_t pairs = 1 + rng.index(4);
        for (std::size_t s = 0; s < pairs; ++s) {
            hyps.push_back(random_tokens(rng, 1, 7));
            refs.push_back(random_tokens(rng, 1, 7));
        }
        for (std::size_t n : {1u, 2u}) {
            const double got = corpus_bleu(hyps, refs, n);
            EXPECT_EQ(got, oracle_bleu(hyps, refs, n)) << "trial " << trial << " n=" << n;
            EXPECT_GE(got, 0.0);
            EXPECT_LE(got, 1.0);
        }
    }
}

TEST(Meteor, HandComputedCases) {
    const Tokens five{"a", "b", "c", "d", "e"};
    EXPECT_NEAR(meteor(five, five), 0.996, 1e-9);
    EXPECT_EQ(meteor({"x", "y"}, five), 0.0);
    // hypothesis b a d c against a b c d: 4 matches in 4 chunks
    const Tokens ref{"a", "b", "c", "d"};
    const auto swapped = meteor_detail({"b", "a", "d", "c"}, ref);
    EXPECT_EQ(swapped.matches, 4u);
    EXPECT_EQ(swapped.chunks, 4u);
    EXPECT_NEAR(swapped.score, 1.0 - 0.5, 1e-12);
    EXPECT_LT(swapped.score, meteor(ref, ref));
}

TEST(Meteor, FmeanWeightsRecall) {
    // 2 of 4 reference tokens, hypothesis of 2: P = 1, R = 0.5, one chunk
    const auto d = meteor_detail({"a", "b"}, {"a", "b", "c", "d"});
    EXPECT_DOUBLE_EQ(d.fmean, 0.5 / (0.9 + 0.1 * 0.5));
    EXPECT_DOUBLE_EQ(d.penalty, 0.5 * std::pow(0.5, 3));
}

TEST(Meteor, RangeAndIdentityBound) {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const Tokens h = random_tokens(rng, 0, 6), r = random_tokens(rng, 1, 6);
        const double m = meteor(h, r);
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, 1.0);
        EXPECT_GE(meteor(r, r), 1.0 - 0.5 * std::pow(1.0 / double(r.size()), 3) - 1e-12);
    }
}

TEST(Meteor, AddingAMatchingUnigramNeverLowersRecall) {
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
        Tokens h = random_tokens(rng, 0, 5);
        const Tokens r = random_tokens(rng, 1, 6);
        const double before = meteor_detail(h, r).recall;
        h.insert(h.begin() + static_cast<long>(rng.index(h.size() + 1)), r[rng.index(r.size())]);
        EXPECT_GE(meteor_detail(h, r).recall, before);
    }
}

TEST(Meteor, EmptyReferenceIsDataError) { EXPECT_THROW(meteor({"a"}, {}), Error); }

TEST(ErrorRates, DefinitionalCases) {
    const ActionSequence ref = seq({{"turn-on", {"tap"}}, {"take", {"celery"}}, {"wash", {"celery"}}, {"turn-off", {"tap"}}});
    const auto same = error_rates(ref, ref);
    EXPECT_EQ(same.word_error, 0.0);
    EXPECT_EQ(same.action_error, 0.0);
    const auto empty = error_rates({}, ref);
    EXPECT_EQ(empty.word_error, 100.0);
    EXPECT_EQ(empty.action_error, 100.0);
    ActionSequence missing = ref;
    missing.erase(missing.begin() + 2);
    EXPECT_EQ(error_rates(missing, ref).action_error, 25.0);
    // two deleted tokens out of eight
    EXPECT_EQ(error_rates(missing, ref).word_error, 25.0);
}

TEST(ErrorRates, NounOrderWithinStepDoesNotMatter) {
    const ActionSequence ref = seq({{"pour", {"milk", "bowl"}}});
    EXPECT_EQ(error_rates(seq({{"pour", {"bowl", "milk"}}}), ref).action_error, 0.0);
}

TEST(ErrorRates, AlignmentRespectsOrder) {
    const ActionSequence ref = seq({{"take", {"cup"}}, {"wash", {"cup"}}, {"stir", {"cup"}}});
    ActionSequence shuffled{ref[2], ref[0], ref[1]};
    EXPECT_EQ(error_rates(ref, ref).action_error, 0.0);
    EXPECT_NEAR(error_rates(shuffled, ref).action_error, 100.0 / 3.0, 1e-12);
}

TEST(TaskSuccess, DefinitionalCases) {
    const ActionSequence a = seq({{"place", {"bowl"}}, {"pour", {"cereal", "bowl"}}});
    std::vector<ClipPrediction> clips(4, ClipPrediction{{a, a}, {a, a}});
    EXPECT_EQ(task_success(clips), 100.0);
    clips[2][1].first[1].nouns[0] = "milk";
    EXPECT_EQ(task_success(clips), 75.0);
}

TEST(Report, CorpusFiguresAreRecomputableFromRows) {
    Rng rng(9);
    std::vector<EvalRow> rows;
    std::vector<Tokens> hyps, refs;
    for (int s = 0; s < 8; ++s) {
        hyps.push_back(random_tokens(rng, 1, 6));
        refs.push_back(random_tokens(rng, 1, 6));
        rows.push_back(make_row("v" + std::to_string(s / 3), s, hyps.back(), refs.back()));
    }
    const EvalReport rep = summarize(rows);
    EXPECT_NEAR(rep.bleu1, corpus_bleu(hyps, refs, 1), 1e-12);
    EXPECT_NEAR(rep.bleu2, corpus_bleu(hyps, refs, 2), 1e-12);
    double m = 0.0;
    for (std::size_t s = 0; s < hyps.size(); ++s) m += meteor(hyps[s], refs[s]);
    EXPECT_NEAR(rep.meteor, m / 8.0, 1e-12);
    EXPECT_FALSE(rep.action_error.has_value());
    const auto j = to_json(rep);
    EXPECT_EQ(j.at("rows").size(), 8u);
    EXPECT_TRUE(j.at("task_success").is_null());
}

TEST(Report, ActionRowsYieldTaskSuccessPerVideo) {
    const ActionSequence a = seq({{"take", {"cup"}}}), b = seq({{"wash", {"cup"}}});
    const EvalReport rep = summarize({make_action_row("v0", 0, a, a), make_action_row("v0", 1, a, b),
                                      make_action_row("v1", 0, b, b)});
    EXPECT_NEAR(*rep.action_error, 100.0 / 3.0, 1e-12);
    EXPECT_EQ(*rep.task_success, 50.0);
    const std::string table = format_table({{"Baseline", rep}});
    EXPECT_NE(table.find("Baseline"), std::string::npos);
    EXPECT_NE(table.find("METEOR"), std::string::npos);
}
