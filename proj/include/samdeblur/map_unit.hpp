// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Mask Average Pooling unit.
//
// Given an image I (H x W x C_in) and a mask stack, the unit
//   1. encodes I with a 3x3 convolution followed by a 1x1 convolution
//      (S output channels, no nonlinearity in between),
//   2. in training mode drops masks at random,
//   3. appends the plane of pixels left uncovered by the surviving masks,
//   4. for every plane M_i replaces the encoding inside M_i with its mean over
//      M_i and accumulates these per-plane maps (overlaps receive a sum),
//   5. concatenates the pooled map in front of I, giving H x W x (S + C_in).

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "samdeblur/autodiff.hpp"
#include "samdeblur/errors.hpp"
#include "samdeblur/mask.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

/// Which image feeds the encoder and the output concatenation.
enum class MapInput {
    Blurred,       // the degraded input itself
    PreDeblurred,  // an externally restored estimate supplied by the caller
};

struct MapUnitConfig {
    std::size_t s_channels = 8;
    double dropout_p = 0.0;
    bool training = false;
    MapInput input = MapInput::Blurred;

    void check() const {
        if (s_channels < 1) throw ParameterError("s_channels must be >= 1");
        if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) throw ParameterError("dropout_p must lie in [0, 1]");
    }
};

template <class Real>
struct BasicEncoderParams {
    BasicTensor<Real> k3;  // 3 x 3 x C_in x S
    BasicTensor<Real> b3;  // S
    BasicTensor<Real> k1;  // 1 x 1 x S x S
    BasicTensor<Real> b1;  // S

    std::size_t in_channels() const { return k3.dim(2); }
    std::size_t s_channels() const { return k3.dim(3); }

    static BasicEncoderParams zeros(std::size_t c_in, std::size_t s) {
        return {BasicTensor<Real>(Shape{3, 3, c_in, s}), BasicTensor<Real>(Shape{s}),
                BasicTensor<Real>(Shape{1, 1, s, s}), BasicTensor<Real>(Shape{s})};
    }

    void check() const {
        const std::size_t c = k3.dim(2), s = k3.dim(3);
        if (k3.shape() != Shape{3, 3, c, s} || b3.shape() != Shape{s} || k1.shape() != Shape{1, 1, s, s} ||
            b1.shape() != Shape{s})
            throw ShapeError("encoder parameter shapes are inconsistent");
    }
};

using EncoderParams = BasicEncoderParams<double>;

/// Kaiming-uniform fan-in initialisation: weights ~ U(-b, b), b = sqrt(6 / fan_in),
/// drawn in storage order; biases start at zero.
template <class Real>
void kaiming_uniform(BasicTensor<Real>& kernel, Xoshiro256ss& rng) {
    const std::size_t fan_in = kernel.dim(0) * kernel.dim(1) * kernel.dim(2);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : kernel.storage()) v = static_cast<Real>(rng.uniform(-bound, bound));
}

template <class Real = double>
BasicEncoderParams<Real> init_encoder(std::size_t c_in, std::size_t s, Xoshiro256ss& rng) {
    auto p = BasicEncoderParams<Real>::zeros(c_in, s);
    kaiming_uniform(p.k3, rng);
    kaiming_uniform(p.k1, rng);
    return p;
}

struct EncoderVars {
    Var k3, b3, k1, b1;
};

template <class Real>
EncoderVars bind(BasicGraph<Real>& g, const BasicEncoderParams<Real>& p, bool trainable = true) {
    return {g.leaf(p.k3, trainable), g.leaf(p.b3, trainable), g.leaf(p.k1, trainable), g.leaf(p.b1, trainable)};
}

template <class Real>
Var encode(BasicGraph<Real>& g, Var image, const EncoderVars& enc) {
    const Var hidden = conv2d(g, image, enc.k3, enc.b3);
    return conv2d(g, hidden, enc.k1, enc.b1);
}

template <class Real>
BasicTensor<Real> encode(const BasicTensor<Real>& image, const BasicEncoderParams<Real>& params) {
    BasicGraph<Real> g;
    return g.value(encode(g, g.constant(image), bind(g, params, false)));
}

// ---------------------------------------------------------------------------

namespace detail {

/// Row-major pixel indices of each plane. Empty planes yield empty lists.
inline std::vector<std::vector<std::size_t>> mask_pixel_lists(const MaskStack& stack) {
    std::vector<std::vector<std::size_t>> lists(stack.count());
    for (std::size_t i = 0; i < stack.count(); ++i)
        for (std::size_t p = 0; p < stack.pixels(); ++p)
            if (stack.masks[i][p]) lists[i].push_back(p);
    return lists;
}

template <class Real>
void pool_accumulate(const Real* src, Real* dst, std::size_t channels,
                     const std::vector<std::vector<std::size_t>>& regions) {
    std::vector<Real> mean(channels);
    for (const auto& region : regions) {
        if (region.empty()) continue;
        std::fill(mean.begin(), mean.end(), Real(0));
        for (std::size_t p : region)
            for (std::size_t c = 0; c < channels; ++c) mean[c] += src[p * channels + c];
        const Real inv = Real(1) / static_cast<Real>(region.size());
        for (auto& m : mean) m *= inv;
        for (std::size_t p : region)
            for (std::size_t c = 0; c < channels; ++c) dst[p * channels + c] += mean[c];
    }
}

}  // namespace detail

/// Region-mean pooling with additive accumulation over planes. The operator is
/// linear and self-adjoint, so backward applies the same pooling to the
/// upstream gradient.
template <class Real>
Var masked_average_pool(BasicGraph<Real>& g, Var enc, const MaskStack& stack) {
    const auto& e = g.value(enc);
    require_rank(e, 3, "masked_average_pool");
    require_valid(stack, e.dim(0), e.dim(1), "masked_average_pool");
    auto regions = detail::mask_pixel_lists(stack);
    const std::size_t C = e.dim(2);
    BasicTensor<Real> out(e.shape());
    detail::pool_accumulate(e.data().data(), out.data().data(), C, regions);
    return g.record(std::move(out), g.requires_grad(enc),
                    [enc, C, regions = std::move(regions)](BasicGraph<Real>& gr, const BasicTensor<Real>& gout) {
                        auto& ge = gr.grad_buffer(enc);
                        detail::pool_accumulate(gout.data().data(), ge.data().data(), C, regions);
                    });
}

template <class Real>
BasicTensor<Real> masked_average_pool(const BasicTensor<Real>& enc, const MaskStack& stack) {
    BasicGraph<Real> g;
    return g.value(masked_average_pool(g, g.constant(enc), stack));
}

/// Full unit on a graph. `rng` is only consumed in training mode.
/// With MapInput::PreDeblurred the restored estimate must be supplied and
/// replaces `image` both in the encoder and in the concatenation.
template <class Real>
Var map_unit_forward(BasicGraph<Real>& g, Var image, const MaskStack& masks, const EncoderVars& enc,
                     const MapUnitConfig& cfg, Xoshiro256ss& rng, std::optional<Var> pre_deblurred = std::nullopt) {
    cfg.check();
    Var source = image;
    if (cfg.input == MapInput::PreDeblurred) {
        if (!pre_deblurred) throw ContractError("MapInput::PreDeblurred requires a pre-deblurred image");
        source = *pre_deblurred;
    }
    const auto& img = g.value(source);
    require_rank(img, 3, "map_unit_forward");
    require_valid(masks, img.dim(0), img.dim(1), "map_unit_forward");
    if (g.value(enc.k3).dim(2) != img.dim(2)) throw ShapeError("map_unit_forward: encoder expects " +
                                                               std::to_string(g.value(enc.k3).dim(2)) +
                                                               " channels, image has " + std::to_string(img.dim(2)));
    if (g.value(enc.k3).dim(3) != cfg.s_channels) throw ShapeError("map_unit_forward: encoder width != s_channels");

    const Var encoded = encode(g, source, enc);
    const MaskStack kept = cfg.training ? mask_dropout(masks, cfg.dropout_p, rng) : masks;
    const Var pooled = masked_average_pool(g, encoded, append_uncovered(kept));
    return concat_channels(g, pooled, source);
}

template <class Real>
BasicTensor<Real> map_unit_forward(const BasicTensor<Real>& image, const MaskStack& masks,
                                   const BasicEncoderParams<Real>& params, const MapUnitConfig& cfg, Xoshiro256ss& rng) {
    BasicGraph<Real> g;
    return g.value(map_unit_forward(g, g.constant(image), masks, bind(g, params, false), cfg, rng));
}

}  // namespace samdeblur
