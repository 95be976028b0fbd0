#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidact/numerics/tensor.hpp"

namespace vidact {

using GradMap = std::map<std::string, std::vector<double>>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

struct AdamState {
    struct Slot {
        std::vector<double> m, v;
    };
    std::uint64_t step = 0;
    std::map<std::string, Slot> slots;
};

/// One bias-corrected Adam update. Parameters without an entry in `grads` are
/// left untouched (frozen submodules). Throws a numeric error naming the first
/// parameter with a non-finite gradient, before anything is modified.
template <typename ParamRange>
void adam_step(ParamRange&& params, const GradMap& grads, AdamState& state, const AdamConfig& cfg) {
    double norm_sq = 0.0;
    for (auto&& [name, tensor] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        require(it->second.size() == tensor.size(), ErrorKind::Dimension,
                "adam_step: gradient for '" + name + "' has " + std::to_string(it->second.size()) +
                    " values, parameter has " + std::to_string(tensor.size()));
        for (double g : it->second) {
            require(std::isfinite(g), ErrorKind::Numeric,
                    "training diverged: non-finite gradient in parameter '" + name + "'");
            norm_sq += g * g;
        }
    }
    double clip = 1.0;
    if (cfg.clip_norm > 0.0) {
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.clip_norm) clip = cfg.clip_norm / norm;
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto&& [name, tensor] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        auto& slot = state.slots[name];
        if (slot.m.empty()) {
            slot.m.assign(tensor.size(), 0.0);
            slot.v.assign(tensor.size(), 0.0);
        }
        auto values = tensor.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = it->second[i] * clip;
            slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
            slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace vidact
