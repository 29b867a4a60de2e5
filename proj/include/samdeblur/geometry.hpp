// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "samdeblur/errors.hpp"

namespace samdeblur {

/// One of the eight symmetries of the square: optional horizontal flip
/// followed by `k % 4` clockwise quarter turns. Code 0 is the identity.
struct Dihedral {
    int code = 0;

    bool flips() const noexcept { return (code / 4) % 2 == 1; }
    int turns() const noexcept { return code % 4; }

    std::pair<std::size_t, std::size_t> output_dims(std::size_t h, std::size_t w) const noexcept {
        return turns() % 2 ? std::pair{w, h} : std::pair{h, w};
    }

    /// Destination coordinate of source pixel (y, x) in an h-by-w grid.
    std::pair<std::size_t, std::size_t> map(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const noexcept {
        if (flips()) x = w - 1 - x;
        for (int t = 0; t < turns(); ++t) {
            const std::size_t ny = x, nx = h - 1 - y;
            y = ny;
            x = nx;
            std::swap(h, w);
        }
        return {y, x};
    }
};

/// Applies `d` to an interleaved h x w x c buffer.
template <class T>
std::vector<T> dihedral_apply(const std::vector<T>& src, std::size_t h, std::size_t w, std::size_t c, Dihedral d) {
    if (src.size() != h * w * c) throw ShapeError("dihedral_apply: buffer size mismatch");
    const auto [oh, ow] = d.output_dims(h, w);
    std::vector<T> dst(src.size());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto [ny, nx] = d.map(y, x, h, w);
            for (std::size_t k = 0; k < c; ++k) dst[(ny * ow + nx) * c + k] = src[(y * w + x) * c + k];
        }
    (void)oh;
    return dst;
}

/// Copies the rectangle [y0, y0+ch) x [x0, x0+cw) out of an interleaved buffer.
template <class T>
std::vector<T> crop_buffer(const std::vector<T>& src, std::size_t h, std::size_t w, std::size_t c, std::size_t y0,
                           std::size_t x0, std::size_t ch, std::size_t cw) {
    if (y0 + ch > h || x0 + cw > w) throw ShapeError("crop window exceeds image");
    std::vector<T> dst(ch * cw * c);
    for (std::size_t y = 0; y < ch; ++y)
        for (std::size_t x = 0; x < cw * c; ++x) dst[y * cw * c + x] = src[((y0 + y) * w + x0) * c + x];
    return dst;
}

}  // namespace samdeblur
