// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Small U-shaped restoration network: input conv, `levels` encoder stages
// with 2x average-pool downsampling, a bottleneck, decoder stages with
// nearest upsampling + 1x1 projection + additive skips, and an output conv
// whose result is added to the input image (global residual). The output
// conv starts at zero, so an untrained network is the identity map.
//
// The network only sees an H x W x C tensor. With a prior attached, that
// tensor is concat(prior, image) and the input conv is simply wider.

#pragma once

#include <string>
#include <vector>

#include "samdeblur/autodiff.hpp"
#include "samdeblur/map_unit.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

/// Ordered, named parameter tensors.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t size() const noexcept { return tensors.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    void add(std::string name, Tensor t) {
        names.push_back(std::move(name));
        tensors.push_back(std::move(t));
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ContractError("no parameter named " + name);
    }

    Tensor& operator[](const std::string& name) { return tensors[index_of(name)]; }
    const Tensor& operator[](const std::string& name) const { return tensors[index_of(name)]; }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

struct NetConfig {
    std::size_t image_channels = 3;
    std::size_t prior_channels = 0;  // S when the pooling unit is attached
    std::size_t width = 8;
    std::size_t levels = 2;

    std::size_t input_channels() const { return image_channels + prior_channels; }
    /// Spatial dimensions must be multiples of this.
    std::size_t alignment() const { return std::size_t{1} << levels; }
};

namespace detail {

inline void add_conv(ParamSet& p, const std::string& name, std::size_t k, std::size_t cin, std::size_t cout,
                     Xoshiro256ss& rng, bool zero = false) {
    Tensor kernel(Shape{k, k, cin, cout});
    if (!zero) kaiming_uniform(kernel, rng);
    p.add(name + ".k", std::move(kernel));
    p.add(name + ".b", Tensor(Shape{cout}));
}

}  // namespace detail

inline ParamSet init_net(const NetConfig& cfg, Xoshiro256ss& rng) {
    if (cfg.width < 1) throw ParameterError("net width must be >= 1");
    ParamSet p;
    const std::size_t w = cfg.width;
    detail::add_conv(p, "in", 3, cfg.input_channels(), w, rng);
    for (std::size_t l = 0; l < cfg.levels; ++l) {
        const std::size_t c = w << l;
        detail::add_conv(p, "enc" + std::to_string(l), 3, c, c, rng);
        detail::add_conv(p, "down" + std::to_string(l), 3, c, 2 * c, rng);
    }
    detail::add_conv(p, "mid", 3, w << cfg.levels, w << cfg.levels, rng);
    for (std::size_t l = cfg.levels; l-- > 0;) {
        const std::size_t c = w << l;
        detail::add_conv(p, "up" + std::to_string(l), 1, 2 * c, c, rng);
        detail::add_conv(p, "dec" + std::to_string(l), 3, c, c, rng);
    }
    detail::add_conv(p, "out", 3, w, cfg.image_channels, rng, /*zero=*/true);
    return p;
}

inline std::vector<Var> bind(Graph& g, const ParamSet& p, bool trainable = true) {
    std::vector<Var> vars;
    vars.reserve(p.size());
    for (const auto& t : p.tensors) vars.push_back(g.leaf(t, trainable));
    return vars;
}

/// `vars` must come from bind() on a ParamSet built by init_net(cfg, ...).
/// `input` is what the network consumes (the image itself, or the pooling
/// unit's concat(prior, image)); `image` feeds the global residual.
inline Var net_forward(Graph& g, const NetConfig& cfg, const std::vector<Var>& vars, Var input, Var image) {
    const auto& img = g.value(image);
    const auto& in = g.value(input);
    require_rank(img, 3, "net_forward");
    require_rank(in, 3, "net_forward");
    if (img.dim(2) != cfg.image_channels) throw ShapeError("net_forward: wrong image channel count");
    if (in.dim(2) != cfg.input_channels())
        throw ShapeError("net_forward: network expects " + std::to_string(cfg.input_channels()) +
                         " input channels, got " + std::to_string(in.dim(2)));
    if (in.dim(0) != img.dim(0) || in.dim(1) != img.dim(1)) throw ShapeError("net_forward: input/image size mismatch");
    if (img.dim(0) % cfg.alignment() || img.dim(1) % cfg.alignment())
        throw ShapeError("net_forward: spatial size must be a multiple of " + std::to_string(cfg.alignment()));

    std::size_t next = 0;
    auto conv = [&](Var x) {
        const Var k = vars.at(next++);
        const Var b = vars.at(next++);
        return conv2d(g, x, k, b);
    };

    // Width-changing convs are linear; every relu sits on a residual branch
    // h + relu(conv(h)), so a dead unit never cuts the path to the output.
    auto branch = [&](Var x) { return add(g, x, relu(g, conv(x))); };

    Var h = conv(input);
    std::vector<Var> skips;
    for (std::size_t l = 0; l < cfg.levels; ++l) {
        h = branch(h);
        skips.push_back(h);
        h = conv(avg_pool2(g, h));
    }
    h = branch(h);
    for (std::size_t l = cfg.levels; l-- > 0;) {
        h = add(g, conv(upsample_nearest(g, h)), skips[l]);
        h = branch(h);
    }
    return add(g, conv(h), image);
}

}  // namespace samdeblur
