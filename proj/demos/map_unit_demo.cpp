// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the pooling unit on one synthetic sample and prints per-region means
// of the pooled encoding.

#include <cstdio>

#include "samdeblur/samdeblur.hpp"

int main() {
    using namespace samdeblur;
    const SegmentedSample s = generate_sample(train_spec(), 7);
    Xoshiro256ss rng(1);
    const EncoderParams enc = init_encoder(3, 4, rng);
    const MapUnitConfig cfg{4, 0.0, false};
    const Tensor out = map_unit_forward(s.blurred, s.masks, enc, cfg, rng);
    std::printf("input %zux%zux%zu -> output %zux%zux%zu\n", s.blurred.dim(0), s.blurred.dim(1), s.blurred.dim(2),
                out.dim(0), out.dim(1), out.dim(2));
    for (std::size_t i = 0; i < s.masks.count(); ++i) {
        const auto& plane = s.masks.masks[i];
        std::size_t first = 0;
        while (!plane[first]) ++first;
        std::printf("%s (%s kernel): pooled =", s.masks.label(i).c_str(), to_string(s.kernels[i].spec.kind).c_str());
        for (std::size_t c = 0; c < 4; ++c) std::printf(" %+.4f", out[first * out.dim(2) + c]);
        std::printf("\n");
    }
    std::printf("psnr(blurred, sharp) = %.2f dB\n", psnr(s.blurred, s.sharp));
}
