// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "samdeblur/errors.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.9;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState zeros_like(const std::vector<Tensor>& params) {
        AdamState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.shape());
            s.v.emplace_back(p.shape());
        }
        return s;
    }
};

/// One Adam step with bias correction and decoupled weight decay:
///   p -= lr*wd*p
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, long t,
                      double lr, const AdamConfig& cfg) {
    if (t < 1) throw ContractError("adam_step: t must be >= 1");
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and state counts differ");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        const auto& g = grads[k];
        require_same_shape(p, g, "adam_step");
        auto& m = state.m[k];
        auto& v = state.v[k];
        require_same_shape(p, m, "adam_step state");
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] -= lr * cfg.weight_decay * p[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
        }
    }
}

/// lr_min + (lr0 - lr_min) * (1 + cos(pi t / T)) / 2, for t in [0, T].
inline double cosine_lr(double t, double total, double lr0, double lr_min) {
    if (!(total > 0.0)) throw ParameterError("cosine_lr: total steps must be positive");
    if (t < 0.0 || t > total) throw ParameterError("cosine_lr: t outside [0, T]");
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t / total));
}

}  // namespace samdeblur
