// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Portable random streams. Every random decision in the library is drawn from
// Xoshiro256ss seeded through SplitMix64, so traces can be reproduced by any
// implementation that follows the reference algorithms:
//
//   state[0..3] = four successive SplitMix64 outputs starting from `seed`
//   uniform()   = (next() >> 11) * 2^-53              in [0, 1)
//   normal()    = Box-Muller on two uniforms, cosine branch only
//                 sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
//
// Per-item streams (dataset samples, training iterations) are derived with
// derive_seed(master, index) = first SplitMix64 output from state master+index.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace samdeblur {

class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return SplitMix64(master + index).next();
}

/// xoshiro256** 1.0. Satisfies UniformRandomBitGenerator, but the library
/// never routes it through <random> distributions since those are not
/// portable across standard library implementations.
class Xoshiro256ss {
public:
    using result_type = std::uint64_t;

    explicit constexpr Xoshiro256ss(std::uint64_t seed) noexcept {
        SplitMix64 sm(seed);
        for (auto& word : s_) word = sm.next();
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return next(); }

    constexpr std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Uses the multiply-high reduction; n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
};

}  // namespace samdeblur
