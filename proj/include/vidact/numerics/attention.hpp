#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "vidact/numerics/ops.hpp"

namespace vidact {

/// Row-major Tq x Tk visibility matrix; nonzero entries may be attended.
struct AttentionMask {
    std::size_t queries = 0;
    std::size_t keys = 0;
    std::vector<char> allowed;

    /// Query i sees keys j <= i + (keys - queries), so the last query sees everything.
    static AttentionMask causal(std::size_t queries, std::size_t keys) {
        AttentionMask m{queries, keys, std::vector<char>(queries * keys, 0)};
        const std::size_t shift = keys >= queries ? keys - queries : 0;
        for (std::size_t i = 0; i < queries; ++i)
            for (std::size_t j = 0; j < keys && j <= i + shift; ++j) m.allowed[i * keys + j] = 1;
        return m;
    }
};

/// Projection weights of one multi-head attention block. The key bias may be
/// left undefined: it shifts every score of a query equally and so never
/// changes the output.
struct AttentionWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

namespace ops {

/// Scaled dot-product attention over `heads` column groups of already
/// projected queries, keys and values, with a hand-written backward pass.
inline Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                           std::size_t heads,
                                           const std::optional<AttentionMask>& mask = std::nullopt) {
    const std::size_t tq = q.rows(), tk = k.rows(), d = q.cols();
    require(heads >= 1 && d % heads == 0, ErrorKind::Config,
            "attention: model width " + std::to_string(d) + " not divisible by " +
                std::to_string(heads) + " heads");
    require(k.cols() == d && v.cols() == d && v.rows() == tk, ErrorKind::Dimension,
            "attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) + ", v " +
                shape_string(v.shape()));
    require(tk >= 1, ErrorKind::Dimension, "attention: no keys");
    if (mask) {
        require(mask->queries == tq && mask->keys == tk, ErrorKind::Dimension,
                "attention: mask " + std::to_string(mask->queries) + "x" + std::to_string(mask->keys) +
                    " does not cover " + std::to_string(tq) + "x" + std::to_string(tk));
        for (std::size_t i = 0; i < tq; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < tk; ++j) any = any || mask->allowed[i * tk + j];
            require(any, ErrorKind::Config, "attention: mask hides every key from query " + std::to_string(i));
        }
    }
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* qv = q.values().data();
    const double* kv = k.values().data();
    const double* vv = v.values().data();

    auto probs = std::make_shared<std::vector<double>>(heads * tq * tk);
    std::vector<double> out(tq * d, 0.0);
    std::vector<double> row(tk);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < tq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < tk; ++j) {
                if (mask && !mask->allowed[i * tk + j]) {
                    row[j] = -std::numeric_limits<double>::infinity();
                    continue;
                }
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += qv[i * d + off + c] * kv[j * d + off + c];
                row[j] = s * inv_sqrt;
                mx = std::max(mx, row[j]);
            }
            double total = 0.0;
            for (std::size_t j = 0; j < tk; ++j) {
                row[j] = std::exp(row[j] - mx);
                total += row[j];
            }
            double* p = probs->data() + (h * tq + i) * tk;
            for (std::size_t j = 0; j < tk; ++j) p[j] = row[j] / total;
            for (std::size_t j = 0; j < tk; ++j) {
                const double pj = p[j];
                for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += pj * vv[j * d + off + c];
            }
        }
    }

    return vidact::detail::make_result(
        {tq, d}, std::move(out), {q, k, v}, [q, k, v, probs, heads, tq, tk, d, dh, inv_sqrt](Node& node) {
            double* gq = detail::grad_of(q.node());
            double* gk = detail::grad_of(k.node());
            double* gv = detail::grad_of(v.node());
            const double* qv = q.values().data();
            const double* kv = k.values().data();
            const double* vv = v.values().data();
            const double* dout = node.grad.data();
            std::vector<double> dp(tk);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * dh;
                for (std::size_t i = 0; i < tq; ++i) {
                    const double* p = probs->data() + (h * tq + i) * tk;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < tk; ++j) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < dh; ++c) s += dout[i * d + off + c] * vv[j * d + off + c];
                        dp[j] = s;
                        dot += s * p[j];
                        if (gv)
                            for (std::size_t c = 0; c < dh; ++c) gv[j * d + off + c] += p[j] * dout[i * d + off + c];
                    }
                    for (std::size_t j = 0; j < tk; ++j) {
                        const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
                        if (ds == 0.0) continue;
                        if (gq)
                            for (std::size_t c = 0; c < dh; ++c) gq[i * d + off + c] += ds * kv[j * d + off + c];
                        if (gk)
                            for (std::size_t c = 0; c < dh; ++c) gk[j * d + off + c] += ds * qv[i * d + off + c];
                    }
                }
            }
        });
}

/// Projects queries, keys and values, attends per head, concatenates heads and
/// applies the output projection.
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const AttentionWeights& w, std::size_t heads,
                                   const std::optional<AttentionMask>& mask = std::nullopt) {
    require(w.wq.cols() % heads == 0, ErrorKind::Config,
            "multi_head_attention: width " + std::to_string(w.wq.cols()) + " not divisible by " +
                std::to_string(heads) + " heads");
    const Tensor qp = linear(q, w.wq, w.bq);
    const Tensor kp = w.bk.defined() ? linear(k, w.wk, w.bk) : matmul(k, w.wk);
    const Tensor vp = linear(v, w.wv, w.bv);
    return linear(scaled_dot_product_attention(qp, kp, vp, heads, mask), w.wo, w.bo);
}

}  // namespace ops
}  // namespace vidact
