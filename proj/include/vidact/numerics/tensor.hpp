#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "vidact/core/error.hpp"

namespace vidact {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    out << ']';
    return out.str();
}

namespace detail {

inline std::atomic<std::uint64_t>& node_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// A vertex of the computation graph. Children hold their parents alive; the
/// graph is released when the last handle to its root goes away.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something is accumulated
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;
    std::uint64_t id = detail::node_counter()++;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

/// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Handle to a graph node holding a dense row-major array of doubles.
///
/// Rank-1 tensors of extent n behave as 1 x n matrices for every 2-D op.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        require(element_count(shape) == values.size(), ErrorKind::Dimension,
                "value count " + std::to_string(values.size()) + " does not match shape " +
                    shape_string(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor filled(Shape shape, double v) {
        const std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false) {
        return Tensor({rows, cols}, std::move(values), requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }

    std::size_t rows() const {
        const auto& s = node_->shape;
        return s.size() >= 2 ? s[s.size() - 2] : 1;
    }
    std::size_t cols() const {
        const auto& s = node_->shape;
        return s.empty() ? 1 : s.back();
    }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() const { return node_->value; }
    double item() const {
        require(size() == 1, ErrorKind::Dimension,
                "item() on tensor of shape " + shape_string(shape()));
        return node_->value[0];
    }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    /// Gradient as a dense copy, zeros if nothing was accumulated.
    std::vector<double> grad_or_zeros() const {
        return node_->grad.empty() ? std::vector<double>(size(), 0.0) : node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    std::uint64_t node_id() const { return node_->id; }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    /// Copy of the values detached from the graph.
    Tensor detach() const { return Tensor(shape(), node_->value); }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

/// Builds the output node of an op. The backward closure is attached only when
/// gradient mode is on and at least one input participates in the graph.
inline Tensor make_result(Shape shape, std::vector<double> values,
                          std::initializer_list<Tensor> inputs,
                          std::function<void(Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    Node& node = out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node_ptr());
    node.backward_fn = std::move(backward_fn);
    return out;
}

inline Tensor make_result(Shape shape, std::vector<double> values,
                          const std::vector<Tensor>& inputs,
                          std::function<void(Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    Node& node = out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node_ptr());
    node.backward_fn = std::move(backward_fn);
    return out;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node with requires_grad set; frozen leaves receive nothing.
inline void backward(const Tensor& root, double seed = 1.0) {
    require(root.size() == 1, ErrorKind::Dimension,
            "backward() needs a scalar root, got " + shape_string(root.shape()));
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
    visited.insert(&root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node().grad_buffer()[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
    // Interior gradients are not needed after the sweep.
    for (Node* node : order) {
        if (node->backward_fn) node->grad.clear();
    }
}

}  // namespace vidact
