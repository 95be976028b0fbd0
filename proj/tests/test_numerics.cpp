#include <gtest/gtest.h>

#include <cmath>

#include "support/finite_difference.hpp"
#include "vidact/numerics/adam.hpp"
#include "vidact/numerics/attention.hpp"
#include "vidact/numerics/ops.hpp"

using namespace vidact;
using vidact::testing::check_gradients;
using vidact::testing::random_readout;
using vidact::testing::random_tensor;

namespace {

Tensor identity(std::size_t n, bool requires_grad = false) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Tensor({n, n}, v, requires_grad);
}

AttentionWeights random_attention(std::size_t d, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    return {random_tensor({d, d}, rng, s), random_tensor({d}, rng, 0.1),
            random_tensor({d, d}, rng, s), random_tensor({d}, rng, 0.1),
            random_tensor({d, d}, rng, s), random_tensor({d}, rng, 0.1),
            random_tensor({d, d}, rng, s), random_tensor({d}, rng, 0.1)};
}

}  // namespace

TEST(Linear, ZeroInputGivesBiasRows) {
    Rng rng(1);
    const Tensor x = Tensor::zeros({3, 4});
    const Tensor w = random_tensor({4, 2}, rng);
    const Tensor b({2}, {0.25, -1.5});
    const Tensor y = ops::linear(x, w, b);
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(y.at(r, 0), 0.25);
        EXPECT_EQ(y.at(r, 1), -1.5);
    }
}

TEST(Linear, IdentityWeightsReturnInput) {
    Rng rng(2);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor y = ops::linear(x, identity(4), Tensor::zeros({4}));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
    const Tensor x = Tensor::zeros({3, 4});
    const Tensor w = Tensor::zeros({5, 2});
    try {
        ops::linear(x, w, Tensor::zeros({2}));
        FAIL() << "expected dimension error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Dimension);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[3x4]"), std::string::npos);
        EXPECT_NE(msg.find("[5x2]"), std::string::npos);
    }
}

TEST(Linear, GradientsMatchFiniteDifferences) {
    Rng rng(3);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor w = random_tensor({4, 2}, rng);
    const Tensor b = random_tensor({2}, rng);
    const auto readout = random_readout(6, 99);
    const auto r = check_gradients([&] { return readout(ops::linear(x, w, b)); }, {x, w, b});
    EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Softmax, UniformLogits) {
    const Tensor y = ops::softmax(Tensor({4}, {0.3, 0.3, 0.3, 0.3}));
    for (double p : y.values()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const Tensor y = ops::softmax(Tensor({2}, {1000.0, 0.0}));
    EXPECT_EQ(y.values()[0], 1.0);
    EXPECT_EQ(y.values()[1], 0.0);
}

TEST(Softmax, BothAxesSumToOneAndMatchFiniteDifferences) {
    for (int axis : {0, 1}) {
        Rng rng(4 + static_cast<std::uint64_t>(axis));
        const Tensor x = random_tensor({2, 5}, rng, 2.0);
        const Tensor y = ops::softmax(x, axis);
        const std::size_t slices = axis == 1 ? 2 : 5;
        for (std::size_t s = 0; s < slices; ++s) {
            double total = 0.0;
            for (std::size_t i = 0; i < (axis == 1 ? 5u : 2u); ++i)
                total += axis == 1 ? y.at(s, i) : y.at(i, s);
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
        const auto readout = random_readout(10, 7);
        const auto r = check_gradients([&] { return readout(ops::softmax(x, axis)); }, {x});
        EXPECT_LT(r.max_relative_error, 1e-6);
    }
}

TEST(LayerNorm, ConstantRowBecomesZero) {
    const Tensor y = ops::layer_norm(Tensor::filled({1, 6}, 3.5), Tensor::filled({6}, 1.0),
                                     Tensor::zeros({6}));
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedRowNearlyUnchanged) {
    // mean 0, population variance 1
    const Tensor x({1, 4}, {-1.0, 1.0, -1.0, 1.0});
    const Tensor y = ops::layer_norm(x, Tensor::filled({4}, 1.0), Tensor::zeros({4}), 1e-5);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.values()[i], x.values()[i], 1e-5);
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
    Rng rng(5);
    const Tensor x = random_tensor({4, 8}, rng);
    const Tensor gain = random_tensor({8}, rng);
    const Tensor shift = random_tensor({8}, rng);
    const auto readout = random_readout(32, 11);
    const auto r = check_gradients([&] { return readout(ops::layer_norm(x, gain, shift)); },
                                   {x, gain, shift});
    EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(Attention, SingleKeyReturnsProjectedValue) {
    Rng rng(6);
    const auto w = random_attention(8, rng);
    const Tensor kv = random_tensor({1, 8}, rng);
    const Tensor q1 = random_tensor({2, 8}, rng);
    const Tensor q2 = random_tensor({2, 8}, rng);
    const Tensor expected = ops::linear(ops::linear(kv, w.wv, w.bv), w.wo, w.bo);
    for (const Tensor& q : {q1, q2}) {
        const Tensor y = ops::multi_head_attention(q, kv, kv, w, 2);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), expected.at(0, c), 1e-12);
    }
}

TEST(Attention, CausalFirstPositionAttendsToItself) {
    Rng rng(7);
    const Tensor q = random_tensor({3, 4}, rng);
    const Tensor k = random_tensor({3, 4}, rng);
    const Tensor v = random_tensor({3, 4}, rng);
    const Tensor y = ops::scaled_dot_product_attention(q, k, v, 2, AttentionMask::causal(3, 3));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.at(0, c), v.at(0, c));
}

TEST(Attention, IndivisibleWidthIsConfigError) {
    const Tensor x = Tensor::zeros({2, 6});
    try {
        ops::scaled_dot_product_attention(x, x, x, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
}

TEST(Attention, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(100 + seed);
        const Tensor q = random_tensor({3, 8}, rng);
        const Tensor kv = random_tensor({4, 8}, rng);
        auto w = random_attention(8, rng);
        const auto readout = random_readout(24, seed);
        const auto mask = seed % 2 ? std::optional(AttentionMask::causal(3, 4)) : std::nullopt;
        const auto r = check_gradients(
            [&] { return readout(ops::multi_head_attention(q, kv, kv, w, 2, mask)); },
            {q, kv, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo});
        EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
    }
}

TEST(Conv1d, UnitKernelIdentity) {
    Rng rng(8);
    const Tensor x = random_tensor({5, 3}, rng);
    std::vector<double> k(9, 0.0);
    for (int i = 0; i < 3; ++i) k[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    const Tensor y = ops::conv1d_time(x, Tensor({1, 3, 3}, k));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(Conv1d, AveragingKernelKeepsConstant) {
    const Tensor x = Tensor::filled({6, 2}, 1.75);
    const Tensor k = Tensor::filled({3, 2, 1}, 1.0 / 6.0);
    const Tensor y = ops::conv1d_time(x, k, 1);
    ASSERT_EQ(y.rows(), 4u);
    for (double v : y.values()) EXPECT_NEAR(v, 1.75, 1e-15);
}

TEST(Conv1d, TooShortInputIsError) {
    try {
        ops::conv1d_time(Tensor::zeros({2, 3}), Tensor::zeros({3, 3, 1}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Data);
    }
}

TEST(Conv1d, GradientsMatchFiniteDifferences) {
    for (std::size_t stride : {1u, 2u}) {
        Rng rng(9 + stride);
        const Tensor x = random_tensor({6, 3}, rng);
        const Tensor k = random_tensor({3, 3, 2}, rng);
        const Tensor probe = ops::conv1d_time(x, k, stride);
        const auto readout = random_readout(probe.size(), 5);
        const auto r = check_gradients([&] { return readout(ops::conv1d_time(x, k, stride)); }, {x, k});
        EXPECT_LT(r.max_relative_error, 1e-5);
    }
}

TEST(CrossEntropy, UniformLogitsGiveLogVocab) {
    const Tensor logits = Tensor::zeros({2, 300});
    EXPECT_NEAR(ops::cross_entropy(logits, {5, 299}, -1).item(), std::log(300.0), 1e-12);
    EXPECT_NEAR(std::log(300.0), 5.7038, 1e-4);
}

TEST(CrossEntropy, ConfidentCorrectClass) {
    std::vector<double> v(10, 0.0);
    v[3] = 30.0;
    EXPECT_LT(ops::cross_entropy(Tensor({1, 10}, v), {3}, -1).item(), 1e-9);
}

TEST(CrossEntropy, AllIgnoredIsExactlyZeroWithNoGradient) {
    Rng rng(10);
    const Tensor logits = random_tensor({3, 5}, rng);
    const Tensor loss = ops::cross_entropy(logits, {-1, -1, -1}, -1);
    EXPECT_EQ(loss.item(), 0.0);
    backward(loss);
    for (double g : logits.grad_or_zeros()) EXPECT_EQ(g, 0.0);
}

TEST(CrossEntropy, OutOfRangeTargetIsIndexError) {
    try {
        ops::cross_entropy(Tensor::zeros({1, 4}), {4}, -1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Index);
    }
}

TEST(CrossEntropy, GradientsMatchFiniteDifferences) {
    Rng rng(11);
    const Tensor logits = random_tensor({4, 6}, rng);
    for (auto red : {ops::Reduction::Mean, ops::Reduction::Sum}) {
        const auto r = check_gradients(
            [&] { return ops::cross_entropy(logits, {1, -1, 5, 0}, -1, red); }, {logits});
        EXPECT_LT(r.max_relative_error, 1e-6);
    }
}

TEST(GumbelSoftmax, SumsToOneInsideOpenInterval) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Tensor logits = random_tensor({7}, rng, 3.0, false);
        const Tensor y = ops::gumbel_softmax_sample(logits, 1.0, rng);
        double total = 0.0;
        for (double p : y.values()) {
            EXPECT_GT(p, 0.0);
            EXPECT_LT(p, 1.0);
            total += p;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(GumbelSoftmax, LowTemperatureConcentratesOnDominantLogit) {
    // brute force over many independent draws
    Rng rng(12);
    Tensor logits({5}, {0.0, 0.3, 20.0, -0.5, 0.1});
    for (int draw = 0; draw < 2000; ++draw) {
        const Tensor y = ops::gumbel_softmax_sample(logits, 0.01, rng);
        EXPECT_GT(*std::max_element(y.values().begin(), y.values().end()), 0.999);
    }
}

TEST(GumbelSoftmax, FixedSeedIsBitIdentical) {
    Tensor logits({4}, {0.1, -0.2, 0.7, 0.0});
    Rng a(42), b(42);
    const Tensor ya = ops::gumbel_softmax_sample(logits, 1.0, a);
    const Tensor yb = ops::gumbel_softmax_sample(logits, 1.0, b);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ya.values()[i], yb.values()[i]);
    EXPECT_EQ(a.position(), b.position());
}

TEST(GumbelSoftmax, NonPositiveTemperatureIsConfigError) {
    Rng rng(1);
    for (double tau : {0.0, -1.0}) {
        try {
            ops::gumbel_softmax_sample(Tensor::zeros({3}), tau, rng);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Config);
        }
    }
}

TEST(GumbelSoftmax, GradientsMatchFiniteDifferences) {
    Rng init(13);
    const Tensor logits = random_tensor({6}, init);
    const auto readout = random_readout(6, 3);
    for (double tau : {0.5, 1.0, 2.0}) {
        const auto r = check_gradients(
            [&] {
                Rng rng(77);
                return readout(ops::gumbel_softmax_sample(logits, tau, rng));
            },
            {logits});
        EXPECT_LT(r.max_relative_error, 1e-6);
    }
}

TEST(BinaryCrossEntropy, ReferenceValues) {
    EXPECT_NEAR(ops::binary_cross_entropy(Tensor::scalar(0.5), 1).item(), std::log(2.0), 1e-15);
    EXPECT_NEAR(ops::binary_cross_entropy(Tensor::scalar(1.0 - 1e-7), 1).item(), 0.0, 1e-6);
    EXPECT_NEAR(ops::binary_cross_entropy(Tensor::scalar(0.3), 0).item(), -std::log(0.7), 1e-15);
    EXPECT_NEAR(-std::log(0.7), 0.3567, 1e-4);
    // clamped at 0 and 1
    EXPECT_TRUE(std::isfinite(ops::binary_cross_entropy(Tensor::scalar(0.0), 1).item()));
    EXPECT_TRUE(std::isfinite(ops::binary_cross_entropy(Tensor::scalar(1.0), 0).item()));
}

TEST(BinaryCrossEntropy, LogitFormAgreesAndGradientsMatch) {
    for (double z : {-3.0, -0.2, 0.0, 1.5, 4.0}) {
        for (int label : {0, 1}) {
            const double p = 1.0 / (1.0 + std::exp(-z));
            EXPECT_NEAR(ops::bce_with_logits(Tensor::scalar(z), label).item(),
                        ops::binary_cross_entropy(Tensor::scalar(p), label).item(), 1e-12);
            const Tensor zt = Tensor::scalar(z, true);
            const Tensor pt = Tensor::scalar(p, true);
            EXPECT_LT(check_gradients([&] { return ops::bce_with_logits(zt, label); }, {zt})
                          .max_relative_error,
                      1e-6);
            EXPECT_LT(check_gradients([&] { return ops::binary_cross_entropy(pt, label); }, {pt})
                          .max_relative_error,
                      1e-6);
        }
    }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({3}, {1.0, -2.0, 0.5})}};
    AdamState state;
    adam_step(params, GradMap{{"w", {0.0, 0.0, 0.0}}}, state, AdamConfig{});
    EXPECT_EQ(params[0].second.values()[0], 1.0);
    EXPECT_EQ(params[0].second.values()[1], -2.0);
    EXPECT_EQ(params[0].second.values()[2], 0.5);
}

TEST(Adam, FirstStepIsBiasCorrected) {
    // m1 = 0.1, v1 = 0.001; corrected both are 1 so the step is lr / (1 + eps)
    std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor::scalar(0.0)}};
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(params, GradMap{{"w", {1.0}}}, state, cfg);
    EXPECT_NEAR(params[0].second.item(), -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, NanGradientNamesParameter) {
    std::vector<std::pair<std::string, Tensor>> params{{"decoder.w", Tensor::scalar(0.0)}};
    AdamState state;
    try {
        adam_step(params, GradMap{{"decoder.w", {std::nan("")}}}, state, AdamConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Numeric);
        EXPECT_NE(std::string(e.what()).find("decoder.w"), std::string::npos);
    }
    EXPECT_EQ(params[0].second.item(), 0.0);
}

TEST(Adam, RepeatedRunsAreBitIdentical) {
    auto run = [] {
        Rng rng(5);
        std::vector<std::pair<std::string, Tensor>> params{{"w", random_tensor({4}, rng, 1.0, false)}};
        AdamState state;
        for (int s = 0; s < 10; ++s) {
            std::vector<double> g(4);
            for (auto& e : g) e = rng.normal();
            adam_step(params, GradMap{{"w", g}}, state, AdamConfig{});
        }
        return std::vector<double>(params[0].second.values().begin(), params[0].second.values().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Rng, SeedAndPositionDetermineDraws) {
    Rng a(9), b(9);
    for (int i = 0; i < 5; ++i) a.next_u64();
    Rng c(9, 5);
    EXPECT_EQ(a.next_u64(), c.next_u64());
    EXPECT_NE(b.next_u64(), Rng(10).next_u64());
}
