// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference verification suite for every differentiable op, the
// pooling unit, and the full prior + network + L1 chain.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "samdeblur/autodiff.hpp"
#include "samdeblur/map_unit.hpp"
#include "samdeblur/mask.hpp"
#include "samdeblur/net.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/synth.hpp"
#include "samdeblur/train.hpp"

namespace samdeblur {

/// sum_i x_i * w_i against a constant weight tensor. Projects a tensor output
/// onto a scalar with a generic (non-constant) upstream gradient.
inline Var inner_product(Graph& g, Var x, const Tensor& weights) {
    const auto& xv = g.value(x);
    require_same_shape(xv, weights, "inner_product");
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
    return g.record(Tensor(Shape{1}, acc), g.requires_grad(x), [x, weights](Graph& gr, const Tensor& gout) {
        auto& gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[0] * weights[i];
    });
}

inline Tensor random_tensor(Shape shape, Xoshiro256ss& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

/// Random stack of possibly overlapping planes, then the uncovered plane.
inline MaskStack random_mask_stack(std::size_t h, std::size_t w, std::size_t n, Xoshiro256ss& rng) {
    MaskStack m{h, w, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const double density = rng.uniform(0.1, 0.6);
        MaskPlane p(h * w);
        for (auto& v : p) v = rng.uniform() < density ? 1 : 0;
        m.push(std::move(p));
    }
    return append_uncovered(m);
}

struct GradCase {
    std::string name;
    std::uint64_t seed = 0;
    GradCheckResult result;
    double tolerance = 1e-6;

    bool passed() const { return result.max_rel_error <= tolerance; }
};

using ScalarFn = std::function<Var(Graph&, Var)>;

namespace detail {

inline void add_case(std::vector<GradCase>& out, std::string name, std::uint64_t seed, const ScalarFn& f,
                     const Tensor& x, double eps, double tol) {
    out.push_back({std::move(name), seed, grad_check<double>(f, x, eps), tol});
}

inline void conv_cases(std::vector<GradCase>& out, std::uint64_t seed, double eps, double tol) {
    Xoshiro256ss rng(seed);
    const std::size_t H = 3 + rng.below(5), W = 3 + rng.below(5);
    const std::size_t Cin = 1 + rng.below(4), Cout = 1 + rng.below(4);
    const std::size_t K = 1 + 2 * rng.below(3);
    const Tensor x = random_tensor({H, W, Cin}, rng), k = random_tensor({K, K, Cin, Cout}, rng),
                 b = random_tensor({Cout}, rng), w = random_tensor({H, W, Cout}, rng);
    add_case(out, "conv2d/input", seed,
             [&](Graph& g, Var v) { return inner_product(g, conv2d(g, v, g.constant(k), g.constant(b)), w); }, x, eps, tol);
    add_case(out, "conv2d/kernel", seed,
             [&](Graph& g, Var v) { return inner_product(g, conv2d(g, g.constant(x), v, g.constant(b)), w); }, k, eps, tol);
    add_case(out, "conv2d/bias", seed,
             [&](Graph& g, Var v) { return inner_product(g, conv2d(g, g.constant(x), g.constant(k), v), w); }, b, eps, tol);
}

inline void elementwise_cases(std::vector<GradCase>& out, std::uint64_t seed, double eps, double tol) {
    Xoshiro256ss rng(seed ^ 0x5bd1e995ULL);
    const std::size_t H = 2 * (1 + rng.below(3)), W = 2 * (1 + rng.below(3)), C = 1 + rng.below(3);
    const Tensor x = random_tensor({H, W, C}, rng), y = random_tensor({H, W, C}, rng), w = random_tensor({H, W, C}, rng);
    const Tensor extra = random_tensor({H, W, 2}, rng), wc = random_tensor({H, W, C + 2}, rng);
    const Tensor wp = random_tensor({H / 2, W / 2, C}, rng), wu = random_tensor({2 * H, 2 * W, C}, rng);
    add_case(out, "relu", seed, [&](Graph& g, Var v) { return inner_product(g, relu(g, v), w); }, x, eps, tol);
    add_case(out, "add", seed, [&](Graph& g, Var v) { return inner_product(g, add(g, v, g.constant(y)), w); }, x, eps, tol);
    add_case(out, "add/fan-out", seed, [&](Graph& g, Var v) { return inner_product(g, add(g, v, v), w); }, x, eps, tol);
    add_case(out, "mul_scalar", seed, [&](Graph& g, Var v) { return inner_product(g, mul_scalar(g, v, -1.75), w); }, x,
             eps, tol);
    add_case(out, "concat_channels/a", seed,
             [&](Graph& g, Var v) { return inner_product(g, concat_channels(g, v, g.constant(extra)), wc); }, x, eps, tol);
    add_case(out, "avg_pool2", seed, [&](Graph& g, Var v) { return inner_product(g, avg_pool2(g, v), wp); }, x, eps, tol);
    add_case(out, "upsample_nearest", seed,
             [&](Graph& g, Var v) { return inner_product(g, upsample_nearest(g, v), wu); }, x, eps, tol);
    add_case(out, "l1_loss", seed, [&](Graph& g, Var v) { return l1_loss(g, v, g.constant(y)); }, x, eps, tol);
}

inline void pooling_cases(std::vector<GradCase>& out, std::uint64_t seed, double eps, double tol) {
    Xoshiro256ss rng(seed ^ 0x9e3779b9ULL);
    const std::size_t H = 3 + rng.below(6), W = 3 + rng.below(6), S = 1 + rng.below(4);
    const MaskStack masks = random_mask_stack(H, W, rng.below(5), rng);
    const Tensor enc = random_tensor({H, W, S}, rng), w = random_tensor({H, W, S}, rng);
    add_case(out, "masked_average_pool", seed,
             [&](Graph& g, Var v) { return inner_product(g, masked_average_pool(g, v, masks), w); }, enc, eps, tol);
}

/// Smallest distance of any relu input to its kink at which the chain case
/// is accepted; central differences are meaningless across a kink.
inline constexpr double kChainReluMargin = 1e-3;

inline void chain_cases(std::vector<GradCase>& out, std::uint64_t seed, double eps, double tol) {
    TrainConfig cfg;
    cfg.use_map_prior = true;
    cfg.s_channels = 4;
    cfg.net_width = 4;
    cfg.net_levels = 1;
    cfg.patch = 16;
    cfg.seed = seed;
    const std::size_t H = 8, W = 8;
    Xoshiro256ss rng(seed ^ 0x2545f4914f6cdd1dULL);
    const MaskStack masks = gen_regions(H, W, 3, rng);

    // Draw a random point; redraw while some relu input sits near its kink.
    Model model;
    Tensor image, sharp;
    for (int attempt = 0;; ++attempt) {
        model = init_model(cfg);
        // The output conv starts at zero; randomise it so gradients reach every
        // layer. Zero biases would leave relu inputs exactly on the kink
        // wherever an upstream activation is dead, so biases are random too.
        for (const char* name : {"out.k", "out.b"})
            model.params[name] = random_tensor(model.params[name].shape(), rng, -0.3, 0.3);
        for (auto& t : model.params.tensors)
            if (t.rank() == 1) t = random_tensor(t.shape(), rng, -0.2, 0.2);
        image = random_tensor({H, W, 3}, rng, 0.0, 1.0);
        Graph g;
        Xoshiro256ss unused(0);
        sharp = g.value(model_forward(g, model, bind(g, model.params, false), g.constant(image), masks, false, unused));
        if (g.relu_margin() >= kChainReluMargin) break;
        if (attempt == 100) throw ContractError("chain gradient case: no kink-free point found");
        cfg.seed = derive_seed(cfg.seed, 0);
    }
    // Target sits 0.005..0.01 away from the prediction in every entry: no L1
    // residual is within eps of its kink, and the small loss value keeps the
    // rounding noise of the difference quotient below small gradients.
    for (auto& v : sharp.storage()) v += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.005, 0.01);

    auto chain = [&](std::size_t wrt) -> ScalarFn {
        return [&, wrt](Graph& g, Var v) {
            std::vector<Var> vars;
            for (std::size_t i = 0; i < model.params.size(); ++i)
                vars.push_back(i == wrt ? v : g.constant(model.params.tensors[i]));
            const Var img = wrt == model.params.size() ? v : g.constant(image);
            Xoshiro256ss unused(0);
            return l1_loss(g, model_forward(g, model, vars, img, masks, /*training=*/false, unused), g.constant(sharp));
        };
    };
    add_case(out, "chain/image", seed, chain(model.params.size()), image, eps, tol);
    for (const char* name : {"map.k3", "map.b3", "map.k1", "in.k", "mid.k", "out.k"}) {
        const std::size_t idx = model.params.index_of(name);
        add_case(out, std::string("chain/") + name, seed, chain(idx), model.params.tensors[idx], eps, tol);
    }
}

}  // namespace detail

/// Runs every gradient case for each seed. Central differences use `eps`;
/// a case passes when its maximum relative error is <= `tol`.
inline std::vector<GradCase> run_gradient_suite(const std::vector<std::uint64_t>& seeds, double eps = 1e-5,
                                                double tol = 1e-6) {
    std::vector<GradCase> out;
    for (auto seed : seeds) {
        detail::conv_cases(out, seed, eps, tol);
        detail::elementwise_cases(out, seed, eps, tol);
        detail::pooling_cases(out, seed, eps, tol);
        detail::chain_cases(out, seed, eps, tol);
    }
    return out;
}

}  // namespace samdeblur
