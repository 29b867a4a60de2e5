// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic non-uniform blur: Y = H_i * X + noise, where the kernel H_i is
// constant on each region of a Voronoi partition. `*` here is true
// convolution (kernel flipped relative to conv2d) with reflect padding.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "samdeblur/errors.hpp"
#include "samdeblur/image_io.hpp"
#include "samdeblur/mask.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

enum class KernelKind { Identity, Gaussian, Motion };

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::Identity: return "identity";
        case KernelKind::Gaussian: return "gaussian";
        case KernelKind::Motion: return "motion";
    }
    return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "identity") return KernelKind::Identity;
    if (s == "gaussian") return KernelKind::Gaussian;
    if (s == "motion") return KernelKind::Motion;
    throw FormatError("unknown kernel kind '" + s + "'");
}

struct KernelSpec {
    KernelKind kind = KernelKind::Identity;
    double sigma = 0.0;   // gaussian
    double angle = 0.0;   // motion, radians
    double length = 0.0;  // motion, pixels
};

struct BlurKernel {
    KernelSpec spec;
    std::size_t size = 1;         // odd
    std::vector<double> weights;  // size x size, row-major, sums to 1

    double at(std::size_t y, std::size_t x) const { return weights[y * size + x]; }
};

inline BlurKernel make_kernel(const KernelSpec& spec) {
    BlurKernel k{spec, 1, {1.0}};
    switch (spec.kind) {
        case KernelKind::Identity:
            return k;
        case KernelKind::Gaussian: {
            if (!(spec.sigma > 0.0)) throw ParameterError("gaussian sigma must be positive");
            const std::size_t r = static_cast<std::size_t>(std::ceil(3.0 * spec.sigma));
            k.size = 2 * r + 1;
            k.weights.assign(k.size * k.size, 0.0);
            for (std::size_t y = 0; y < k.size; ++y)
                for (std::size_t x = 0; x < k.size; ++x) {
                    const double dy = static_cast<double>(y) - static_cast<double>(r);
                    const double dx = static_cast<double>(x) - static_cast<double>(r);
                    k.weights[y * k.size + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * spec.sigma * spec.sigma));
                }
            break;
        }
        case KernelKind::Motion: {
            if (!(spec.length > 0.0)) throw ParameterError("motion length must be positive");
            // Segment centred on the kernel centre, sampled every quarter pixel
            // and splatted with bilinear weights.
            const std::size_t r = static_cast<std::size_t>(std::ceil(spec.length / 2.0)) + 1;
            k.size = 2 * r + 1;
            k.weights.assign(k.size * k.size, 0.0);
            const std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(4.0 * spec.length)) + 1);
            const double c = static_cast<double>(r);
            for (std::size_t s = 0; s < n; ++s) {
                const double t = spec.length * (static_cast<double>(s) / static_cast<double>(n - 1) - 0.5);
                const double px = c + t * std::cos(spec.angle);
                const double py = c + t * std::sin(spec.angle);
                const double fx = std::floor(px), fy = std::floor(py);
                const double ax = px - fx, ay = py - fy;
                const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
                k.weights[iy * k.size + ix] += (1 - ax) * (1 - ay);
                k.weights[iy * k.size + ix + 1] += ax * (1 - ay);
                k.weights[(iy + 1) * k.size + ix] += (1 - ax) * ay;
                k.weights[(iy + 1) * k.size + ix + 1] += ax * ay;
            }
            break;
        }
    }
    double sum = 0.0;
    for (double w : k.weights) sum += w;
    for (double& w : k.weights) w /= sum;
    return k;
}

/// numpy-style "reflect" index (edge sample not repeated): -1 -> 1, n -> n-2.
inline std::size_t reflect_index(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * (static_cast<long>(n) - 1);
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

// ---------------------------------------------------------------------------

/// Voronoi partition from k distinct random sites. Distances are squared
/// Euclidean between integer pixel positions; ties go to the lower site index.
inline MaskStack gen_regions(std::size_t height, std::size_t width, std::size_t k, Xoshiro256ss& rng) {
    if (k < 1 || k > height * width) throw ParameterError("region count must lie in [1, H*W]");
    std::vector<std::pair<std::size_t, std::size_t>> sites;
    while (sites.size() < k) {
        const std::size_t y = rng.below(height), x = rng.below(width);
        if (std::find(sites.begin(), sites.end(), std::pair{y, x}) == sites.end()) sites.emplace_back(y, x);
    }
    MaskStack stack{height, width, {}, {}};
    for (std::size_t i = 0; i < k; ++i) stack.push(MaskPlane(height * width, 0), "region_" + std::to_string(i));
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t best = 0;
            long best_d = -1;
            for (std::size_t i = 0; i < k; ++i) {
                const long dy = static_cast<long>(y) - static_cast<long>(sites[i].first);
                const long dx = static_cast<long>(x) - static_cast<long>(sites[i].second);
                const long d = dy * dy + dx * dx;
                if (best_d < 0 || d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            stack.masks[best][y * width + x] = 1;
        }
    return stack;
}

struct TextureSpec {
    std::size_t rectangles = 6;
    std::size_t checker_patches = 2;
    std::size_t checker_period = 2;  // pixels per checker cell
    double checker_amplitude = 0.25;
    double gradient_strength = 0.4;
};

/// Mean absolute 4-neighbour Laplacian over interior pixels and channels.
inline double mean_abs_laplacian(const Tensor& img) {
    const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
    if (H < 3 || W < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t y = 1; y + 1 < H; ++y)
        for (std::size_t x = 1; x + 1 < W; ++x)
            for (std::size_t c = 0; c < C; ++c)
                acc += std::abs(4.0 * img.at(y, x, c) - img.at(y - 1, x, c) - img.at(y + 1, x, c) -
                                img.at(y, x - 1, c) - img.at(y, x + 1, c));
    return acc / static_cast<double>((H - 2) * (W - 2) * C);
}

/// Lower bound on mean_abs_laplacian that every generated texture satisfies
/// for images of at least 32x32 with the stock texture specs.
inline constexpr double kTextureLaplacianFloor = 0.05;

/// Smooth colour gradients and a low-frequency wave, overlaid with random
/// flat rectangles and patches of fine checkerboard; clamped to [0, 1].
inline Tensor gen_texture(std::size_t height, std::size_t width, Xoshiro256ss& rng, const TextureSpec& spec = {}) {
    Tensor img(Shape{height, width, 3});
    const double fh = static_cast<double>(height), fw = static_cast<double>(width);
    for (std::size_t c = 0; c < 3; ++c) {
        const double base = rng.uniform(0.2, 0.8);
        const double gx = rng.uniform(-1.0, 1.0) * spec.gradient_strength;
        const double gy = rng.uniform(-1.0, 1.0) * spec.gradient_strength;
        const double amp = rng.uniform(0.0, 0.15);
        const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double u = static_cast<double>(x) / fw - 0.5, v = static_cast<double>(y) / fh - 0.5;
                img.at(y, x, c) = base + gx * u + gy * v +
                                  amp * std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
            }
    }
    auto random_rect = [&](double min_frac, double max_frac) {
        const auto rh = static_cast<std::size_t>(std::max(2.0, fh * rng.uniform(min_frac, max_frac)));
        const auto rw = static_cast<std::size_t>(std::max(2.0, fw * rng.uniform(min_frac, max_frac)));
        const std::size_t y0 = rng.below(height - std::min(rh, height) + 1);
        const std::size_t x0 = rng.below(width - std::min(rw, width) + 1);
        return std::array<std::size_t, 4>{y0, x0, std::min(y0 + rh, height), std::min(x0 + rw, width)};
    };
    for (std::size_t r = 0; r < spec.rectangles; ++r) {
        const auto box = random_rect(0.1, 0.45);
        const double col[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
        for (std::size_t y = box[0]; y < box[2]; ++y)
            for (std::size_t x = box[1]; x < box[3]; ++x)
                for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
    }
    const std::size_t period = std::max<std::size_t>(1, spec.checker_period);
    for (std::size_t r = 0; r < spec.checker_patches; ++r) {
        const auto box = random_rect(0.2, 0.5);
        const double amp = spec.checker_amplitude * rng.uniform(0.6, 1.0);
        for (std::size_t y = box[0]; y < box[2]; ++y)
            for (std::size_t x = box[1]; x < box[3]; ++x) {
                const double s = ((y / period + x / period) % 2 == 0) ? amp : -amp;
                for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) += s;
            }
    }
    for (auto& v : img.storage()) v = std::clamp(v, 0.0, 1.0);
    return img;
}

/// Y[p] = (H_region(p) conv X)[p] + N(0, noise_sigma^2), clamped to [0, 1].
/// Noise is drawn pixel-major, channel-minor, only when noise_sigma > 0.
inline Tensor apply_regional_blur(const Tensor& sharp, const MaskStack& masks, const std::vector<BlurKernel>& kernels,
                                  double noise_sigma, Xoshiro256ss& rng) {
    require_rank(sharp, 3, "apply_regional_blur");
    const std::size_t H = sharp.dim(0), W = sharp.dim(1), C = sharp.dim(2);
    require_valid(masks, H, W, "apply_regional_blur");
    if (kernels.size() != masks.count())
        throw ContractError("apply_regional_blur: " + std::to_string(kernels.size()) + " kernels for " +
                            std::to_string(masks.count()) + " regions");
    if (!is_partition(masks)) throw ContractError("apply_regional_blur: masks must partition the image");
    if (noise_sigma < 0.0) throw ParameterError("noise_sigma must be non-negative");

    std::vector<std::size_t> region(H * W);
    for (std::size_t i = 0; i < masks.count(); ++i)
        for (std::size_t p = 0; p < H * W; ++p)
            if (masks.masks[i][p]) region[p] = i;

    Tensor out(sharp.shape());
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const BlurKernel& k = kernels[region[y * W + x]];
            const long r = static_cast<long>(k.size / 2);
            for (std::size_t c = 0; c < C; ++c) {
                double acc = 0.0;
                for (std::size_t a = 0; a < k.size; ++a) {
                    const std::size_t sy = reflect_index(static_cast<long>(y) - (static_cast<long>(a) - r), H);
                    for (std::size_t b = 0; b < k.size; ++b) {
                        const std::size_t sx = reflect_index(static_cast<long>(x) - (static_cast<long>(b) - r), W);
                        acc += k.at(a, b) * sharp.at(sy, sx, c);
                    }
                }
                out.at(y, x, c) = acc;
            }
        }
    if (noise_sigma > 0.0)
        for (auto& v : out.storage()) v += noise_sigma * rng.normal();
    for (auto& v : out.storage()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetSpec {
    std::string name = "train";
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t min_regions = 2;
    std::size_t max_regions = 4;
    double p_identity = 0.1;
    double p_gaussian = 0.45;  // remainder is motion
    double sigma_min = 0.5, sigma_max = 1.5;
    double length_min = 3.0, length_max = 7.0;
    double noise_min = 0.0, noise_max = 0.01;
    double mask_corruption = 0.2;
    TextureSpec texture{};
};

/// Desk-scale training distribution.
inline DatasetSpec train_spec() { return DatasetSpec{}; }

/// Shifted distribution: stronger kernels, more regions, busier texture,
/// noisier masks.
inline DatasetSpec ood_spec() {
    DatasetSpec s;
    s.name = "ood";
    s.min_regions = 4;
    s.max_regions = 8;
    s.p_identity = 0.05;
    s.p_gaussian = 0.45;
    s.sigma_min = 1.5;
    s.sigma_max = 2.5;
    s.length_min = 7.0;
    s.length_max = 11.0;
    s.noise_min = 0.005;
    s.noise_max = 0.02;
    s.mask_corruption = 0.35;
    s.texture = TextureSpec{10, 3, 1, 0.2, 0.6};
    return s;
}

inline nlohmann::json to_json(const DatasetSpec& s) {
    return {{"name", s.name},
            {"height", s.height},
            {"width", s.width},
            {"min_regions", s.min_regions},
            {"max_regions", s.max_regions},
            {"p_identity", s.p_identity},
            {"p_gaussian", s.p_gaussian},
            {"sigma", {s.sigma_min, s.sigma_max}},
            {"length", {s.length_min, s.length_max}},
            {"noise", {s.noise_min, s.noise_max}},
            {"mask_corruption", s.mask_corruption},
            {"texture",
             {{"rectangles", s.texture.rectangles},
              {"checker_patches", s.texture.checker_patches},
              {"checker_period", s.texture.checker_period},
              {"checker_amplitude", s.texture.checker_amplitude},
              {"gradient_strength", s.texture.gradient_strength}}}};
}

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    try {
        DatasetSpec s;
        s.name = j.at("name").get<std::string>();
        s.height = j.at("height").get<std::size_t>();
        s.width = j.at("width").get<std::size_t>();
        s.min_regions = j.at("min_regions").get<std::size_t>();
        s.max_regions = j.at("max_regions").get<std::size_t>();
        s.p_identity = j.at("p_identity").get<double>();
        s.p_gaussian = j.at("p_gaussian").get<double>();
        s.sigma_min = j.at("sigma").at(0).get<double>();
        s.sigma_max = j.at("sigma").at(1).get<double>();
        s.length_min = j.at("length").at(0).get<double>();
        s.length_max = j.at("length").at(1).get<double>();
        s.noise_min = j.at("noise").at(0).get<double>();
        s.noise_max = j.at("noise").at(1).get<double>();
        s.mask_corruption = j.at("mask_corruption").get<double>();
        const auto& t = j.at("texture");
        s.texture.rectangles = t.at("rectangles").get<std::size_t>();
        s.texture.checker_patches = t.at("checker_patches").get<std::size_t>();
        s.texture.checker_period = t.at("checker_period").get<std::size_t>();
        s.texture.checker_amplitude = t.at("checker_amplitude").get<double>();
        s.texture.gradient_strength = t.at("gradient_strength").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset spec: ") + e.what());
    }
}

struct SegmentedSample {
    Tensor sharp;
    Tensor blurred;
    MaskStack masks;           // true regions, a partition
    MaskStack observed_masks;  // what a segmenter would hand over (possibly corrupted)
    std::vector<BlurKernel> kernels;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

inline SegmentedSample generate_sample(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.min_regions < 1 || spec.min_regions > spec.max_regions) throw ParameterError("bad region range");
    Xoshiro256ss rng(seed);
    SegmentedSample s;
    s.seed = seed;
    const std::size_t k = spec.min_regions + rng.below(spec.max_regions - spec.min_regions + 1);
    s.masks = gen_regions(spec.height, spec.width, k, rng);
    s.sharp = gen_texture(spec.height, spec.width, rng, spec.texture);
    for (std::size_t i = 0; i < k; ++i) {
        const double pick = rng.uniform();
        KernelSpec ks;
        if (pick < spec.p_identity) {
            ks.kind = KernelKind::Identity;
        } else if (pick < spec.p_identity + spec.p_gaussian) {
            ks.kind = KernelKind::Gaussian;
            ks.sigma = rng.uniform(spec.sigma_min, spec.sigma_max);
        } else {
            ks.kind = KernelKind::Motion;
            ks.angle = rng.uniform(0.0, std::numbers::pi);
            ks.length = rng.uniform(spec.length_min, spec.length_max);
        }
        s.kernels.push_back(make_kernel(ks));
    }
    s.noise_sigma = rng.uniform(spec.noise_min, spec.noise_max);
    s.blurred = apply_regional_blur(s.sharp, s.masks, s.kernels, s.noise_sigma, rng);
    s.observed_masks = corrupt_masks(s.masks, spec.mask_corruption, rng);
    return s;
}

inline nlohmann::json kernel_to_json(const BlurKernel& k) {
    return {{"kind", to_string(k.spec.kind)},
            {"size", k.size},
            {"sigma", k.spec.sigma},
            {"angle", k.spec.angle},
            {"length", k.spec.length}};
}

struct ManifestEntry {
    std::string id;
    std::uint64_t seed = 0;
    std::string sharp, blurred, sharp_raw, blurred_raw, masks, regions;
};

struct DatasetManifest {
    DatasetSpec spec;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> samples;
};

/// Writes `count` samples plus manifest.json into `dir`. Sample i uses seed
/// derive_seed(seed, i), so samples can be regenerated independently.
inline DatasetManifest generate_dataset(const std::filesystem::path& dir, std::size_t count, const DatasetSpec& spec,
                                        std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    DatasetManifest m{spec, seed, {}};
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "sample_%05zu", i);
        const std::uint64_t sseed = derive_seed(seed, i);
        const SegmentedSample s = generate_sample(spec, sseed);
        const std::string base(id);
        ManifestEntry e{base, sseed, base + "_sharp.ppm", base + "_blurred.ppm", base + "_sharp.tnsr",
                        base + "_blurred.tnsr", base + "_masks.json", base + "_regions.json"};
        save_ppm(dir / e.sharp, s.sharp);
        save_ppm(dir / e.blurred, s.blurred);
        save_raw_tensor(dir / e.sharp_raw, s.sharp);
        save_raw_tensor(dir / e.blurred_raw, s.blurred);
        save_mask_stack(dir / e.masks, s.observed_masks);
        save_mask_stack(dir / e.regions, s.masks);
        nlohmann::json kernels = nlohmann::json::array();
        for (const auto& k : s.kernels) kernels.push_back(kernel_to_json(k));
        samples.push_back({{"id", e.id},
                           {"seed", e.seed},
                           {"sharp", e.sharp},
                           {"blurred", e.blurred},
                           {"sharp_raw", e.sharp_raw},
                           {"blurred_raw", e.blurred_raw},
                           {"masks", e.masks},
                           {"regions", e.regions},
                           {"noise_sigma", s.noise_sigma},
                           {"kernels", std::move(kernels)}});
        m.samples.push_back(std::move(e));
    }
    const nlohmann::json manifest = {
        {"format", "samdeblur-dataset/1"}, {"spec", to_json(spec)}, {"seed", seed}, {"count", count},
        {"samples", std::move(samples)}};
    write_file_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
    return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) throw FormatError("no manifest.json in " + dir.string());
    try {
        const auto j = nlohmann::json::parse(read_file_bytes(path));
        DatasetManifest m;
        m.spec = dataset_spec_from_json(j.at("spec"));
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("samples"))
            m.samples.push_back({s.at("id").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                                 s.at("sharp").get<std::string>(), s.at("blurred").get<std::string>(),
                                 s.at("sharp_raw").get<std::string>(), s.at("blurred_raw").get<std::string>(),
                                 s.at("masks").get<std::string>(), s.at("regions").get<std::string>()});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// One sample as consumed by training and evaluation.
struct LoadedSample {
    std::string id;
    Tensor sharp;
    Tensor blurred;
    MaskStack masks;
};

inline std::vector<LoadedSample> load_dataset(const std::filesystem::path& dir) {
    const DatasetManifest m = load_manifest(dir);
    std::vector<LoadedSample> out;
    out.reserve(m.samples.size());
    for (const auto& e : m.samples)
        out.push_back({e.id, load_raw_tensor(dir / e.sharp_raw), load_raw_tensor(dir / e.blurred_raw),
                       load_mask_stack(dir / e.masks)});
    return out;
}

}  // namespace samdeblur
