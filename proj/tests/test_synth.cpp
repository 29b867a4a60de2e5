// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "samdeblur/metrics.hpp"
#include "samdeblur/synth.hpp"

using namespace samdeblur;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("samdeblur_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Regions, SingleRegionCoversEverything) {
    Xoshiro256ss rng(1);
    const auto m = gen_regions(7, 9, 1, rng);
    ASSERT_EQ(m.count(), 1u);
    EXPECT_EQ(m.masks[0], MaskPlane(63, 1));
    EXPECT_EQ(m.labels[0], "region_0");
}

TEST(Regions, MatchVoronoiReplay) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const std::size_t H = 5 + seed % 11, W = 6 + seed % 7, k = 1 + seed % 6;
        Xoshiro256ss rng(seed);
        const auto m = gen_regions(H, W, k, rng);
        // Replay the site draws and label each pixel by brute force.
        oracle::Prng o(seed);
        std::vector<std::pair<long, long>> sites;
        while (sites.size() < k) {
            const long y = static_cast<long>(o.below(H)), x = static_cast<long>(o.below(W));
            bool dup = false;
            for (auto& s : sites) dup = dup || (s.first == y && s.second == x);
            if (!dup) sites.emplace_back(y, x);
        }
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                std::size_t best = 0;
                for (std::size_t i = 1; i < k; ++i) {
                    auto d = [&](std::size_t j) {
                        const long dy = static_cast<long>(y) - sites[j].first, dx = static_cast<long>(x) - sites[j].second;
                        return dy * dy + dx * dx;
                    };
                    if (d(i) < d(best)) best = i;
                }
                ASSERT_EQ(m.masks[best][y * W + x], 1) << "seed " << seed;
            }
        ASSERT_TRUE(is_partition(m));
    }
}

TEST(Regions, RejectsBadCount) {
    Xoshiro256ss rng(1);
    EXPECT_THROW(gen_regions(2, 2, 0, rng), ParameterError);
    EXPECT_THROW(gen_regions(2, 2, 5, rng), ParameterError);
}

TEST(Texture, DeterministicInRangeAndBusy) {
    for (const auto& spec : {train_spec(), ood_spec()})
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Xoshiro256ss a(seed), b(seed);
            const Tensor t = gen_texture(32, 32, a, spec.texture);
            ASSERT_EQ(t, gen_texture(32, 32, b, spec.texture));
            for (double v : t.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
            ASSERT_GE(mean_abs_laplacian(t), kTextureLaplacianFloor) << spec.name << " seed " << seed;
        }
}

TEST(Texture, FlatImageHasNoLaplacian) { EXPECT_NEAR(mean_abs_laplacian(Tensor::image(8, 8, 3, 0.4)), 0.0, 1e-15); }

TEST(Kernels, NormalisedAndOddSized) {
    Xoshiro256ss rng(5);
    for (int t = 0; t < 200; ++t) {
        KernelSpec s;
        s.kind = static_cast<KernelKind>(rng.below(3));
        s.sigma = rng.uniform(0.3, 3.0);
        s.angle = rng.uniform(0.0, 3.2);
        s.length = rng.uniform(1.0, 12.0);
        const auto k = make_kernel(s);
        ASSERT_EQ(k.size % 2, 1u);
        double sum = 0;
        for (double w : k.weights) {
            ASSERT_GE(w, 0.0);
            sum += w;
        }
        ASSERT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Kernels, TinyGaussianIsNearlyIdentity) {
    const auto k = make_kernel({KernelKind::Gaussian, 1e-3, 0, 0});
    EXPECT_EQ(k.size, 3u);
    EXPECT_GT(k.at(1, 1), 0.999);
}

TEST(Kernels, GaussianSizeRule) {
    EXPECT_EQ(make_kernel({KernelKind::Gaussian, 1.0, 0, 0}).size, 7u);
    EXPECT_EQ(make_kernel({KernelKind::Gaussian, 1.5, 0, 0}).size, 11u);
}

TEST(Kernels, HorizontalMotionStaysOnCentreRow) {
    const auto k = make_kernel({KernelKind::Motion, 0, 0.0, 4.0});
    const std::size_t c = k.size / 2;
    double row = 0;
    for (std::size_t x = 0; x < k.size; ++x) row += k.at(c, x);
    EXPECT_NEAR(row, 1.0, 1e-12);
}

TEST(Kernels, RejectInvalidParameters) {
    EXPECT_THROW(make_kernel({KernelKind::Gaussian, 0.0, 0, 0}), ParameterError);
    EXPECT_THROW(make_kernel({KernelKind::Motion, 0, 0, -1.0}), ParameterError);
    EXPECT_THROW(kernel_kind_from_string("box"), FormatError);
}

TEST(Reflect, NumpyConvention) {
    EXPECT_EQ(reflect_index(-1, 5), 1u);
    EXPECT_EQ(reflect_index(-2, 5), 2u);
    EXPECT_EQ(reflect_index(5, 5), 3u);
    EXPECT_EQ(reflect_index(9, 5), 1u);
    EXPECT_EQ(reflect_index(-3, 1), 0u);
}

TEST(Formation, IdentityKernelsReproduceSharp) {
    Xoshiro256ss rng(6);
    const auto m = gen_regions(16, 16, 3, rng);
    const Tensor x = gen_texture(16, 16, rng);
    const std::vector<BlurKernel> ks(3, make_kernel({}));
    EXPECT_EQ(apply_regional_blur(x, m, ks, 0.0, rng), x);
}

TEST(Formation, SingleRegionMatchesDenseConvolution) {
    Xoshiro256ss rng(7);
    const Tensor x = gen_texture(20, 17, rng);
    const MaskStack m{20, 17, {MaskPlane(340, 1)}, {}};
    for (const KernelSpec& s : {KernelSpec{KernelKind::Gaussian, 1.3, 0, 0}, KernelSpec{KernelKind::Motion, 0, 0.7, 6.0}}) {
        const auto k = make_kernel(s);
        const Tensor got = apply_regional_blur(x, m, {k}, 0.0, rng);
        const Tensor want = oracle::dense_convolve_reflect(x, k.weights, k.size);
        for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], std::clamp(want[i], 0.0, 1.0), 1e-12);
    }
}

TEST(Formation, NoiseFreeRunDrawsNothing) {
    Xoshiro256ss rng(8), probe(8);
    const Tensor x = Tensor::image(6, 6, 3, 0.5);
    apply_regional_blur(x, MaskStack{6, 6, {MaskPlane(36, 1)}, {}}, {make_kernel({})}, 0.0, rng);
    EXPECT_EQ(rng.next(), probe.next());
}

TEST(Formation, RejectsNonPartitionAndKernelCountMismatch) {
    Xoshiro256ss rng(9);
    const Tensor x = Tensor::image(4, 4, 3, 0.5);
    const auto id = make_kernel({});
    EXPECT_THROW(apply_regional_blur(x, MaskStack{4, 4, {MaskPlane(16, 1), MaskPlane(16, 1)}, {}}, {id, id}, 0, rng),
                 ContractError);
    EXPECT_THROW(apply_regional_blur(x, MaskStack{4, 4, {MaskPlane(16, 1)}, {}}, {id, id}, 0, rng), ContractError);
    EXPECT_THROW(apply_regional_blur(x, MaskStack{4, 4, {MaskPlane(16, 1)}, {}}, {id}, -1.0, rng), ParameterError);
}

TEST(Formation, StrongerBlurLowersPsnr) {
    Xoshiro256ss rng(10);
    const Tensor x = gen_texture(48, 48, rng);
    const MaskStack m{48, 48, {MaskPlane(48 * 48, 1)}, {}};
    double prev = std::numeric_limits<double>::infinity();
    for (double sigma : {0.5, 1.0, 1.5, 2.0, 2.5}) {
        const double p = psnr(apply_regional_blur(x, m, {make_kernel({KernelKind::Gaussian, sigma, 0, 0})}, 0.0, rng), x);
        EXPECT_LT(p, prev) << sigma;
        prev = p;
    }
}

TEST(Dataset, ByteIdenticalAcrossRuns) {
    const auto a = scratch("ds_a"), b = scratch("ds_b");
    generate_dataset(a, 4, train_spec(), 123);
    generate_dataset(b, 4, train_spec(), 123);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ASSERT_EQ(read_file_bytes(e.path()), read_file_bytes(b / e.path().filename())) << e.path();
        ++files;
    }
    EXPECT_EQ(files, 1u + 4u * 6u);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Dataset, ZeroCountWritesEmptyManifest) {
    const auto d = scratch("ds_empty");
    generate_dataset(d, 0, train_spec(), 1);
    EXPECT_TRUE(load_manifest(d).samples.empty());
    EXPECT_TRUE(load_dataset(d).empty());
    fs::remove_all(d);
}

TEST(Dataset, SamplesRegenerateFromManifestSeeds) {
    const auto d = scratch("ds_regen");
    generate_dataset(d, 3, ood_spec(), 77);
    const auto m = load_manifest(d);
    EXPECT_EQ(m.spec.name, "ood");
    const auto loaded = load_dataset(d);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto s = generate_sample(m.spec, m.samples[i].seed);
        EXPECT_EQ(s.sharp, loaded[i].sharp);
        EXPECT_EQ(s.blurred, loaded[i].blurred);
        EXPECT_EQ(s.observed_masks.masks, loaded[i].masks.masks);
        EXPECT_EQ(load_mask_stack(d / m.samples[i].regions).masks, s.masks.masks);
        EXPECT_TRUE(is_partition(s.masks));
    }
    fs::remove_all(d);
}

TEST(Dataset, SpecJsonRoundTrip) {
    const auto s = ood_spec();
    EXPECT_EQ(to_json(dataset_spec_from_json(to_json(s))), to_json(s));
}

TEST(Dataset, MissingManifestIsFormatError) {
    const auto d = scratch("ds_missing");
    fs::create_directories(d);
    EXPECT_THROW(load_manifest(d), FormatError);
    fs::remove_all(d);
}
