#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "vidact/core/rng.hpp"
#include "vidact/numerics/tensor.hpp"

// Differentiable tensor operations. Every op computes its forward value
// eagerly and, when gradients are tracked, attaches a closure that
// accumulates exact gradients into its inputs.

namespace vidact::ops {

namespace detail {

inline double* grad_of(Node& n) { return n.requires_grad ? n.grad_buffer().data() : nullptr; }

inline Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), ErrorKind::Dimension,
            std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                shape_string(b.shape()) + " differ");
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += A[m x n] * B[k x n]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline double stable_sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace detail

inline Tensor reshape(const Tensor& x, Shape shape) {
    require(element_count(shape) == x.size(), ErrorKind::Dimension,
            "reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
    std::vector<double> v(x.values().begin(), x.values().end());
    return vidact::detail::make_result(std::move(shape), std::move(v), {x}, [x](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    require(b.rank() == 2 && b.rows() == k, ErrorKind::Dimension,
            "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    std::vector<double> c(m * n, 0.0);
    detail::gemm_nn(a.values().data(), b.values().data(), c.data(), m, k, n);
    return vidact::detail::make_result({m, n}, std::move(c), {a, b}, [a, b, m, k, n](Node& out) {
        if (double* ga = detail::grad_of(a.node()))
            detail::gemm_nt(out.grad.data(), b.values().data(), ga, m, n, k);
        if (double* gb = detail::grad_of(b.node()))
            detail::gemm_tn(a.values().data(), out.grad.data(), gb, m, k, n);
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
    return vidact::detail::make_result(a.shape(), std::move(v), {a, b}, [a, b](Node& out) {
        for (const Tensor* t : {&a, &b})
            if (double* g = detail::grad_of(t->node()))
                for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    return vidact::detail::make_result(a.shape(), std::move(v), {a, b}, [a, b](Node& out) {
        if (double* g = detail::grad_of(a.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
        if (double* g = detail::grad_of(b.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] -= out.grad[i];
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
    return vidact::detail::make_result(a.shape(), std::move(v), {a, b}, [a, b](Node& out) {
        if (double* g = detail::grad_of(a.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * b.values()[i];
        if (double* g = detail::grad_of(b.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * a.values()[i];
    });
}

inline Tensor scale(const Tensor& x, double s) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] * s;
    return vidact::detail::make_result(x.shape(), std::move(v), {x}, [x, s](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * s;
    });
}

/// x + c where c is a constant array of the same size (masks, noise, encodings).
inline Tensor add_constant(const Tensor& x, std::span<const double> c) {
    require(c.size() == x.size(), ErrorKind::Dimension,
            "add_constant: constant has " + std::to_string(c.size()) + " values for " +
                shape_string(x.shape()));
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] + c[i];
    return vidact::detail::make_result(x.shape(), std::move(v), {x}, [x](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    });
}

/// x[m x n] + b[n] broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    const std::size_t m = x.rows(), n = x.cols();
    require(b.size() == n, ErrorKind::Dimension,
            "add_bias: " + shape_string(x.shape()) + " + " + shape_string(b.shape()));
    std::vector<double> v(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] += b.values()[j];
    return vidact::detail::make_result(x.shape(), std::move(v), {x, b}, [x, b, m, n](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
        if (double* g = detail::grad_of(b.node()))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += out.grad[i * n + j];
    });
}

/// y = x W + b. Shape errors name both operands.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(w.rank() == 2 && x.cols() == w.rows(), ErrorKind::Dimension,
            "linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                shape_string(w.shape()));
    require(b.size() == w.cols(), ErrorKind::Dimension,
            "linear: bias " + shape_string(b.shape()) + " incompatible with weight " +
                shape_string(w.shape()));
    return add_bias(matmul(x, w), b);
}

inline Tensor relu(const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] > 0 ? x.values()[i] : 0.0;
    return vidact::detail::make_result(x.shape(), std::move(v), {x}, [x](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                if (x.values()[i] > 0) g[i] += out.grad[i];
    });
}

inline Tensor sigmoid(const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::stable_sigmoid(x.values()[i]);
    auto y = std::make_shared<std::vector<double>>(v);
    return vidact::detail::make_result(x.shape(), std::move(v), {x}, [x, y](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                g[i] += out.grad[i] * (*y)[i] * (1.0 - (*y)[i]);
    });
}

inline Tensor tanh(const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(x.values()[i]);
    auto y = std::make_shared<std::vector<double>>(v);
    return vidact::detail::make_result(x.shape(), std::move(v), {x}, [x, y](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                g[i] += out.grad[i] * (1.0 - (*y)[i] * (*y)[i]);
    });
}

inline Tensor transpose(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = x.values()[i * n + j];
    return vidact::detail::make_result({n, m}, std::move(v), {x}, [x, m, n](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += out.grad[j * m + i];
    });
}

/// Softmax along `axis` of a rank-1 or rank-2 tensor, max-subtracted.
/// axis = -1 selects the last axis.
inline Tensor softmax(const Tensor& x, int axis = -1) {
    const std::size_t m = x.rows(), n = x.cols();
    const bool along_rows = axis == -1 || axis == static_cast<int>(x.rank()) - 1;
    require(along_rows || (axis == 0 && x.rank() == 2), ErrorKind::Dimension,
            "softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
    // slice geometry: `count` slices of `len` elements with element stride `stride`
    const std::size_t count = along_rows ? m : n;
    const std::size_t len = along_rows ? n : m;
    const std::size_t stride = along_rows ? 1 : n;
    const std::size_t step = along_rows ? n : 1;

    std::vector<double> v(x.size());
    const auto in = x.values();
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t base = s * step;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[base + i * stride]);
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double e = std::exp(in[base + i * stride] - mx);
            v[base + i * stride] = e;
            total += e;
        }
        for (std::size_t i = 0; i < len; ++i) v[base + i * stride] /= total;
    }
    auto y = std::make_shared<std::vector<double>>(v);
    return vidact::detail::make_result(
        x.shape(), std::move(v), {x}, [x, y, count, len, stride, step](Node& out) {
            double* g = detail::grad_of(x.node());
            if (!g) return;
            for (std::size_t s = 0; s < count; ++s) {
                const std::size_t base = s * step;
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i)
                    dot += out.grad[base + i * stride] * (*y)[base + i * stride];
                for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t k = base + i * stride;
                    g[k] += (*y)[k] * (out.grad[k] - dot);
                }
            }
        });
}

/// Row-wise log-softmax over the last axis.
inline Tensor log_softmax(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> v(x.size());
    const auto in = x.values();
    for (std::size_t r = 0; r < m; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[r * n + j]);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += std::exp(in[r * n + j] - mx);
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < n; ++j) v[r * n + j] = in[r * n + j] - lse;
    }
    auto y = std::make_shared<std::vector<double>>(v);
    return vidact::detail::make_result(x.shape(), std::move(v), {x}, [x, y, m, n](Node& out) {
        double* g = detail::grad_of(x.node());
        if (!g) return;
        for (std::size_t r = 0; r < m; ++r) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) total += out.grad[r * n + j];
            for (std::size_t j = 0; j < n; ++j)
                g[r * n + j] += out.grad[r * n + j] - std::exp((*y)[r * n + j]) * total;
        }
    });
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                         double eps = 1e-5) {
    const std::size_t m = x.rows(), d = x.cols();
    require(d >= 1 && gain.size() == d && shift.size() == d, ErrorKind::Dimension,
            "layer_norm: input " + shape_string(x.shape()) + ", gain " +
                shape_string(gain.shape()) + ", shift " + shape_string(shift.shape()));
    std::vector<double> v(x.size());
    auto normed = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    const auto in = x.values();
    for (std::size_t r = 0; r < m; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += in[r * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = in[r * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (in[r * d + j] - mean) * is;
            (*normed)[r * d + j] = xh;
            v[r * d + j] = xh * gain.values()[j] + shift.values()[j];
        }
    }
    return vidact::detail::make_result(
        x.shape(), std::move(v), {x, gain, shift},
        [x, gain, shift, normed, inv_std, m, d](Node& out) {
            const auto& dy = out.grad;
            if (double* gg = detail::grad_of(gain.node()))
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * (*normed)[r * d + j];
            if (double* gs = detail::grad_of(shift.node()))
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < d; ++j) gs[j] += dy[r * d + j];
            if (double* gx = detail::grad_of(x.node())) {
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < m; ++r) {
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = dy[r * d + j] * gain.values()[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * (*normed)[r * d + j];
                    }
                    mean_dxh *= inv_d;
                    mean_dxh_xh *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = dy[r * d + j] * gain.values()[j];
                        gx[r * d + j] += (*inv_std)[r] *
                                         (dxh - mean_dxh - (*normed)[r * d + j] * mean_dxh_xh);
                    }
                }
            }
        });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), ErrorKind::Dimension, "concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::size_t total_rows = 0;
    for (const auto& p : parts) {
        require(p.cols() == n, ErrorKind::Dimension,
                "concat_rows: column mismatch " + shape_string(parts.front().shape()) + " vs " +
                    shape_string(p.shape()));
        total_rows += p.rows();
    }
    std::vector<double> v;
    v.reserve(total_rows * n);
    for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
    return vidact::detail::make_result({total_rows, n}, std::move(v), parts, [parts](Node& out) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            if (double* g = detail::grad_of(p.node()))
                for (std::size_t i = 0; i < p.size(); ++i) g[i] += out.grad[offset + i];
            offset += p.size();
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), ErrorKind::Dimension, "concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::size_t total_cols = 0;
    for (const auto& p : parts) {
        require(p.rows() == m, ErrorKind::Dimension,
                "concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                    shape_string(p.shape()));
        total_cols += p.cols();
    }
    std::vector<double> v(m * total_cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t n = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) v[i * total_cols + offset + j] = p.values()[i * n + j];
        offset += n;
    }
    return vidact::detail::make_result(
        {m, total_cols}, std::move(v), parts, [parts, m, total_cols](Node& out) {
            std::size_t off = 0;
            for (const auto& p : parts) {
                const std::size_t n = p.cols();
                if (double* g = detail::grad_of(p.node()))
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            g[i * n + j] += out.grad[i * total_cols + off + j];
                off += n;
            }
        });
}

/// Rows [begin, end).
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t n = x.cols();
    require(begin <= end && end <= x.rows(), ErrorKind::Index,
            "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                shape_string(x.shape()));
    std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.values().begin() + static_cast<std::ptrdiff_t>(end * n));
    return vidact::detail::make_result({end - begin, n}, std::move(v), {x}, [x, begin, n](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < out.grad.size(); ++i) g[begin * n + i] += out.grad[i];
    });
}

/// Columns [begin, end).
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t m = x.rows(), n = x.cols();
    require(begin <= end && end <= n, ErrorKind::Index,
            "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                shape_string(x.shape()));
    const std::size_t w = end - begin;
    std::vector<double> v(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) v[i * w + j] = x.values()[i * n + begin + j];
    return vidact::detail::make_result({m, w}, std::move(v), {x}, [x, begin, m, n, w](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += out.grad[i * w + j];
    });
}

/// Mean over rows: [m x n] -> [1 x n].
inline Tensor mean_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    require(m > 0, ErrorKind::Data, "mean_rows: empty input");
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j] += x.values()[i * n + j];
    for (auto& e : v) e /= static_cast<double>(m);
    return vidact::detail::make_result({1, n}, std::move(v), {x}, [x, m, n](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += out.grad[j] / static_cast<double>(m);
    });
}

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double e : x.values()) total += e;
    return vidact::detail::make_result({1}, {total}, {x}, [x](Node& out) {
        if (double* g = detail::grad_of(x.node()))
            for (std::size_t i = 0; i < x.size(); ++i) g[i] += out.grad[0];
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Sum of a list of scalars.
inline Tensor add_all(const std::vector<Tensor>& terms) {
    require(!terms.empty(), ErrorKind::Dimension, "add_all: no terms");
    double total = 0.0;
    for (const auto& t : terms) total += t.item();
    return vidact::detail::make_result({1}, {total}, terms, [terms](Node& out) {
        for (const auto& t : terms)
            if (double* g = detail::grad_of(t.node())) g[0] += out.grad[0];
    });
}

/// Gathers rows of `table` [V x d] by id.
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    const std::size_t vocab = table.rows(), d = table.cols();
    std::vector<double> v(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < vocab, ErrorKind::Index,
                "embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                    std::to_string(vocab));
        std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    v.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return vidact::detail::make_result({ids.size(), d}, std::move(v), {table}, [table, ids, d](Node& out) {
        if (double* g = detail::grad_of(table.node()))
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    g[static_cast<std::size_t>(ids[i]) * d + j] += out.grad[i * d + j];
    });
}

/// Valid-mode temporal convolution. kernels has shape {k, d_in, d_out}.
inline Tensor conv1d_time(const Tensor& x, const Tensor& kernels, std::size_t stride = 1) {
    require(kernels.rank() == 3, ErrorKind::Dimension,
            "conv1d_time: kernels must be {k, d_in, d_out}, got " + shape_string(kernels.shape()));
    const std::size_t k = kernels.shape()[0], d = kernels.shape()[1], d_out = kernels.shape()[2];
    const std::size_t t_in = x.rows();
    require(x.cols() == d, ErrorKind::Dimension,
            "conv1d_time: input " + shape_string(x.shape()) + " vs kernels " +
                shape_string(kernels.shape()));
    require(stride >= 1, ErrorKind::Config, "conv1d_time: stride must be >= 1");
    require(t_in >= k, ErrorKind::Data,
            "conv1d_time: input too short (" + std::to_string(t_in) + " frames < kernel " +
                std::to_string(k) + ")");
    const std::size_t t_out = (t_in - k) / stride + 1;
    std::vector<double> v(t_out * d_out, 0.0);
    const double* xv = x.values().data();
    const double* kv = kernels.values().data();
    for (std::size_t t = 0; t < t_out; ++t)
        for (std::size_t j = 0; j < k; ++j)
            detail::gemm_nn(xv + (t * stride + j) * d, kv + j * d * d_out, v.data() + t * d_out, 1, d,
                            d_out);
    return vidact::detail::make_result(
        {t_out, d_out}, std::move(v), {x, kernels}, [x, kernels, k, d, d_out, t_out, stride](Node& out) {
            double* gx = detail::grad_of(x.node());
            double* gk = detail::grad_of(kernels.node());
            const double* xv = x.values().data();
            const double* kv = kernels.values().data();
            for (std::size_t t = 0; t < t_out; ++t)
                for (std::size_t j = 0; j < k; ++j) {
                    const double* dy = out.grad.data() + t * d_out;
                    if (gx) detail::gemm_nt(dy, kv + j * d * d_out, gx + (t * stride + j) * d, 1, d_out, d);
                    if (gk) detail::gemm_tn(xv + (t * stride + j) * d, dy, gk + j * d * d_out, 1, d, d_out);
                }
        });
}

enum class Reduction { Mean, Sum };

/// Token-level cross entropy. Rows whose target equals `ignore_id` contribute
/// neither loss nor gradient; with no counted rows the loss is exactly 0.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id,
                            Reduction reduction = Reduction::Mean) {
    const std::size_t m = logits.rows(), n = logits.cols();
    require(targets.size() == m, ErrorKind::Dimension,
            "cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                shape_string(logits.shape()));
    auto probs = std::make_shared<std::vector<double>>(logits.size(), 0.0);
    double loss = 0.0;
    std::size_t counted = 0;
    const auto in = logits.values();
    for (std::size_t r = 0; r < m; ++r) {
        const int t = targets[r];
        if (t == ignore_id) continue;
        require(t >= 0 && static_cast<std::size_t>(t) < n, ErrorKind::Index,
                "cross_entropy: target " + std::to_string(t) + " outside [0," + std::to_string(n) + ")");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[r * n + j]);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(in[r * n + j] - mx);
            (*probs)[r * n + j] = e;
            total += e;
        }
        for (std::size_t j = 0; j < n; ++j) (*probs)[r * n + j] /= total;
        loss += -(in[r * n + static_cast<std::size_t>(t)] - mx - std::log(total));
        ++counted;
    }
    double norm = 1.0;
    if (reduction == Reduction::Mean && counted > 0) norm = 1.0 / static_cast<double>(counted);
    loss *= norm;
    return vidact::detail::make_result(
        {1}, {loss}, {logits}, [logits, targets, ignore_id, probs, norm, m, n](Node& out) {
            double* g = detail::grad_of(logits.node());
            if (!g) return;
            const double s = out.grad[0] * norm;
            for (std::size_t r = 0; r < m; ++r) {
                const int t = targets[r];
                if (t == ignore_id) continue;
                for (std::size_t j = 0; j < n; ++j) g[r * n + j] += s * (*probs)[r * n + j];
                g[r * n + static_cast<std::size_t>(t)] -= s;
            }
        });
}

inline constexpr double kBceEps = 1e-7;

/// -label log p - (1-label) log(1-p) with p clamped to [eps, 1-eps]. The
/// clamp has zero derivative outside the band.
inline Tensor binary_cross_entropy(const Tensor& p, int label) {
    require(p.size() == 1, ErrorKind::Dimension, "binary_cross_entropy expects a scalar");
    require(label == 0 || label == 1, ErrorKind::Data, "binary_cross_entropy: label must be 0 or 1");
    const double raw = p.item();
    const double pc = std::clamp(raw, kBceEps, 1.0 - kBceEps);
    const double y = label;
    const double loss = -y * std::log(pc) - (1.0 - y) * std::log(1.0 - pc);
    const bool inside = raw >= kBceEps && raw <= 1.0 - kBceEps;
    return vidact::detail::make_result({1}, {loss}, {p}, [p, pc, y, inside](Node& out) {
        if (double* g = detail::grad_of(p.node()))
            if (inside) g[0] += out.grad[0] * (-y / pc + (1.0 - y) / (1.0 - pc));
    });
}

/// BCE evaluated from the pre-sigmoid logit; equals binary_cross_entropy(sigmoid(z))
/// away from the clamp band and keeps gradients when the sigmoid saturates.
inline Tensor bce_with_logits(const Tensor& z, int label) {
    require(z.size() == 1, ErrorKind::Dimension, "bce_with_logits expects a scalar");
    require(label == 0 || label == 1, ErrorKind::Data, "bce_with_logits: label must be 0 or 1");
    const double x = z.item();
    const double y = label;
    const double loss = std::max(x, 0.0) - y * x + std::log1p(std::exp(-std::abs(x)));
    return vidact::detail::make_result({1}, {loss}, {z}, [z, x, y](Node& out) {
        if (double* g = detail::grad_of(z.node())) g[0] += out.grad[0] * (detail::stable_sigmoid(x) - y);
    });
}

/// Soft Gumbel-softmax relaxation of a categorical draw over the last axis:
/// softmax((logits + g) / tau) with g = -log(-log u), u drawn from `rng`.
inline Tensor gumbel_softmax_sample(const Tensor& logits, double temperature, Rng& rng) {
    require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::Config,
            "gumbel_softmax_sample: temperature must be positive, got " + std::to_string(temperature));
    std::vector<double> noise(logits.size());
    for (auto& g : noise) g = rng.gumbel();
    return softmax(scale(add_constant(logits, noise), 1.0 / temperature));
}

}  // namespace vidact::ops
