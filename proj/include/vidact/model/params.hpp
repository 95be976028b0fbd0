#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vidact/core/rng.hpp"
#include "vidact/numerics/adam.hpp"
#include "vidact/numerics/tensor.hpp"

namespace vidact {

/// Owning submodule of a parameter. Weak supervision freezes S; the
/// partition must therefore be total and disjoint.
enum class Submodule { E, T, D, DPrime, G, S };

inline std::string to_string(Submodule s) {
    switch (s) {
        case Submodule::E: return "E";
        case Submodule::T: return "T";
        case Submodule::D: return "D";
        case Submodule::DPrime: return "D'";
        case Submodule::G: return "G";
        case Submodule::S: return "S";
    }
    return "?";
}

inline Submodule submodule_from_string(const std::string& s) {
    for (auto m : {Submodule::E, Submodule::T, Submodule::D, Submodule::DPrime, Submodule::G, Submodule::S})
        if (to_string(m) == s) return m;
    fail(ErrorKind::Parse, "unknown submodule tag '" + s + "'");
}

/// Named trainable tensors, each tagged with its owning submodule. Iteration
/// order is the lexicographic order of names.
class ParamStore {
public:
    struct Entry {
        Tensor tensor;
        Submodule owner;
    };

    ParamStore() = default;

    /// Deep copy: the clone shares no storage with the source.
    ParamStore(const ParamStore& other) { copy_from(other); }
    ParamStore& operator=(const ParamStore& other) {
        if (this != &other) copy_from(other);
        return *this;
    }
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;

    Tensor add(const std::string& name, Submodule owner, Tensor tensor) {
        require(!entries_.count(name), ErrorKind::Config, "duplicate parameter '" + name + "'");
        tensor.set_requires_grad(true);
        entries_.emplace(name, Entry{tensor, owner});
        return tensor;
    }

    const Tensor& get(const std::string& name) const {
        auto it = entries_.find(name);
        require(it != entries_.end(), ErrorKind::Config, "unknown parameter '" + name + "'");
        return it->second.tensor;
    }

    Submodule owner(const std::string& name) const {
        auto it = entries_.find(name);
        require(it != entries_.end(), ErrorKind::Config, "unknown parameter '" + name + "'");
        return it->second.owner;
    }

    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_) n += e.tensor.size();
        return n;
    }

    std::vector<std::pair<std::string, Tensor>> named_tensors() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& [name, e] : entries_) out.emplace_back(name, e.tensor);
        return out;
    }

    std::vector<std::pair<std::string, Tensor>> named_tensors(Submodule owner) const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& [name, e] : entries_)
            if (e.owner == owner) out.emplace_back(name, e.tensor);
        return out;
    }

    void zero_grad() {
        for (auto& [_, e] : entries_) e.tensor.zero_grad();
    }

    /// Frozen parameters stop participating in the graph: no gradient reaches them.
    void set_frozen(Submodule owner, bool frozen) {
        for (auto& [_, e] : entries_)
            if (e.owner == owner) e.tensor.set_requires_grad(!frozen);
    }

    bool is_frozen(Submodule owner) const {
        for (const auto& [_, e] : entries_)
            if (e.owner == owner && e.tensor.requires_grad()) return false;
        return true;
    }

    /// Accumulated gradients of all non-frozen parameters (zeros where nothing arrived).
    GradMap gradients() const {
        GradMap out;
        for (const auto& [name, e] : entries_)
            if (e.tensor.requires_grad()) out.emplace(name, e.tensor.grad_or_zeros());
        return out;
    }

    bool all_finite() const {
        for (const auto& [_, e] : entries_)
            for (double v : e.tensor.values())
                if (!std::isfinite(v)) return false;
        return true;
    }

    /// Copies values from `other`; names and shapes must agree.
    void assign_values(const ParamStore& other) {
        require(other.entries_.size() == entries_.size(), ErrorKind::Config,
                "assign_values: parameter sets differ in size");
        for (auto& [name, e] : entries_) {
            const Tensor& src = other.get(name);
            require(src.shape() == e.tensor.shape(), ErrorKind::Dimension,
                    "assign_values: shape mismatch for '" + name + "'");
            std::copy(src.values().begin(), src.values().end(), e.tensor.mutable_values().begin());
        }
    }

private:
    void copy_from(const ParamStore& other) {
        entries_.clear();
        for (const auto& [name, e] : other.entries_) {
            Tensor copy(e.tensor.shape(), std::vector<double>(e.tensor.values().begin(), e.tensor.values().end()),
                        e.tensor.requires_grad());
            entries_.emplace(name, Entry{copy, e.owner});
        }
    }

    std::map<std::string, Entry> entries_;
};

}  // namespace vidact
