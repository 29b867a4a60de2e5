// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "samdeblur/samdeblur.hpp"

using namespace samdeblur;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("samdeblur_test_" + name);
    fs::remove_all(p);
    return p;
}

DatasetSpec small_spec() {
    DatasetSpec s = train_spec();
    s.height = 24;
    s.width = 20;
    return s;
}

std::vector<LoadedSample> small_data(std::size_t n, std::uint64_t seed) {
    std::vector<LoadedSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = generate_sample(small_spec(), derive_seed(seed, i));
        out.push_back({"s" + std::to_string(i), s.sharp, s.blurred, s.observed_masks});
    }
    return out;
}

TrainConfig tiny(bool prior) {
    TrainConfig c;
    c.use_map_prior = prior;
    c.s_channels = 3;
    c.net_width = 4;
    c.net_levels = 1;
    c.iterations = 3;
    c.batch_size = 2;
    c.patch = 16;
    c.seed = 17;
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SAMDEBLUR_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Adam, ZeroGradientWithoutDecayIsNoOp) {
    std::vector<Tensor> p{Tensor(Shape{3}, 0.7)};
    auto st = AdamState::zeros_like(p);
    adam_step(p, {Tensor(Shape{3})}, st, 1, 1e-3, AdamConfig{0.9, 0.9, 1e-8, 0.0});
    EXPECT_EQ(p[0], Tensor(Shape{3}, 0.7));
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<Tensor> p{Tensor(Shape{1}, 0.0)};
    auto st = AdamState::zeros_like(p);
    adam_step(p, {Tensor(Shape{1}, 1.0)}, st, 1, 1e-3, AdamConfig{0.9, 0.9, 1e-8, 0.0});
    EXPECT_NEAR(p[0][0], -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, DecoupledDecayShrinksTowardZero) {
    std::vector<Tensor> p{Tensor(Shape{1}, 2.0)};
    auto st = AdamState::zeros_like(p);
    adam_step(p, {Tensor(Shape{1})}, st, 1, 0.1, AdamConfig{0.9, 0.9, 1e-8, 0.5});
    EXPECT_NEAR(p[0][0], 2.0 * (1.0 - 0.05), 1e-15);
}

TEST(Adam, RejectsStepZero) {
    std::vector<Tensor> p{Tensor(Shape{1})};
    auto st = AdamState::zeros_like(p);
    EXPECT_THROW(adam_step(p, {Tensor(Shape{1})}, st, 0, 1e-3, {}), ContractError);
}

TEST(CosineLr, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 2000, 1e-3, 1e-6), 1e-3);
    EXPECT_DOUBLE_EQ(cosine_lr(2000, 2000, 1e-3, 1e-6), 1e-6);
    EXPECT_NEAR(cosine_lr(1000, 2000, 1e-3, 1e-6), 5.005e-4, 1e-15);
    EXPECT_THROW(cosine_lr(1, 0, 1e-3, 1e-6), ParameterError);
    EXPECT_THROW(cosine_lr(3, 2, 1e-3, 1e-6), ParameterError);
}

TEST(TrainConfig, JsonRoundTripAndChecks) {
    auto c = tiny(true);
    c.dropout_p = 0.25;
    EXPECT_EQ(to_json(train_config_from_json(to_json(c))), to_json(c));
    c.patch = 18;  // not a multiple of 4 with two levels
    c.net_levels = 2;
    EXPECT_THROW(c.check(), ParameterError);
    c = tiny(false);
    c.loss = "l2";
    EXPECT_THROW(c.check(), ParameterError);
}

TEST(Model, UntrainedNetworkIsIdentity) {
    const Model m = init_model(tiny(true));
    const auto data = small_data(2, 3);
    const auto r = evaluate(m, data);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(r.per_image[i].psnr, r.per_image[i].psnr_blur);
        EXPECT_FALSE(r.per_image[i].collapsed);
    }
}

TEST(Model, PriorOnlyWidensFirstLayer) {
    const Model base = init_model(tiny(false)), map = init_model(tiny(true));
    ASSERT_EQ(map.params.size(), base.params.size() + 4);
    for (std::size_t i = 0; i < base.params.size(); ++i) {
        EXPECT_EQ(base.params.names[i], map.params.names[i + 4]);
        if (base.params.names[i] != "in.k") EXPECT_EQ(base.params.tensors[i].shape(), map.params.tensors[i + 4].shape());
    }
    EXPECT_EQ(map.params["in.k"].dim(2), 3u + 3u);
}

TEST(Model, DegenerateOutputCollapses) {
    Model m = init_model(tiny(false));
    m.params["out.b"].fill(5.0);
    const auto r = evaluate(m, small_data(4, 5));
    EXPECT_GE(r.aggregate.mcr, 0.75);
}

TEST(Model, EvaluationIgnoresDropoutSetting) {
    auto c = tiny(true);
    c.dropout_p = 0.0;
    Model a = init_model(c);
    a.params["out.k"].fill(0.01);
    Model b = a;
    b.config.dropout_p = 0.9;
    const auto data = small_data(1, 6);
    EXPECT_EQ(restore(a, data[0].blurred, data[0].masks), restore(b, data[0].blurred, data[0].masks));
}

TEST(Model, RestoreHandlesUnalignedSizes) {
    auto c = tiny(false);
    c.net_levels = 2;
    Model m = init_model(c);
    const Tensor img = Tensor::image(13, 11, 3, 0.3);
    EXPECT_EQ(restore(m, img, MaskStack{13, 11, {}, {}}), img);
}

TEST(Training, DeterministicAndLossFinite) {
    const auto data = small_data(3, 7);
    for (bool prior : {false, true}) {
        const auto a = train(tiny(prior), data), b = train(tiny(prior), data);
        ASSERT_EQ(a.log.size(), 3u);
        EXPECT_EQ(log_to_csv(a.log), log_to_csv(b.log));
        for (std::size_t i = 0; i < a.model.params.size(); ++i) EXPECT_EQ(a.model.params.tensors[i], b.model.params.tensors[i]);
        for (const auto& r : a.log) EXPECT_TRUE(std::isfinite(r.loss));
        EXPECT_DOUBLE_EQ(a.log[0].lr, 1e-3);
    }
}

TEST(Training, RejectsPatchLargerThanImages) {
    auto c = tiny(false);
    c.patch = 32;
    EXPECT_THROW(train(c, small_data(1, 1)), ContractError);
    EXPECT_THROW(train(tiny(false), {}), ContractError);
}

TEST(Training, LossDecreasesOverShortRun) {
    auto c = tiny(false);
    c.iterations = 60;
    c.batch_size = 4;
    c.lr0 = 3e-3;
    const auto r = train(c, small_data(6, 8));
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += r.log[static_cast<std::size_t>(i)].loss;
        last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    EXPECT_LT(last, first);
}

TEST(Checkpoint, ReloadIsBitExact) {
    const auto dir = scratch("ckpt");
    const auto res = train(tiny(true), small_data(2, 9));
    save_checkpoint(dir, res.model);
    const Model back = load_checkpoint(dir);
    EXPECT_EQ(to_json(back.config), to_json(res.model.config));
    ASSERT_EQ(back.params.names, res.model.params.names);
    for (std::size_t i = 0; i < back.params.size(); ++i) EXPECT_EQ(back.params.tensors[i], res.model.params.tensors[i]);
    const auto data = small_data(1, 10);
    EXPECT_EQ(restore(back, data[0].blurred, data[0].masks), restore(res.model, data[0].blurred, data[0].masks));
    fs::remove_all(dir);
}

TEST(Checkpoint, RejectsShapeTampering) {
    const auto dir = scratch("ckpt_bad");
    save_checkpoint(dir, init_model(tiny(false)));
    save_raw_tensor(dir / "in.k.tnsr", Tensor(Shape{3, 3, 3, 2}));
    EXPECT_THROW(load_checkpoint(dir), FormatError);
    fs::remove_all(dir);
    EXPECT_THROW(load_checkpoint(dir), FormatError);
}

TEST(Cli, ContractErrors) {
    const auto data = scratch("cli_data"), ckpt = scratch("cli_ckpt");
    ASSERT_EQ(run_cli("gen --out " + data.string() + " --count 2 --seed 1"), 0);
    ASSERT_EQ(run_cli("train --data " + data.string() + " --out " + ckpt.string() +
                      " --seed 1 --iters 1 --batch 1 --patch 16 --net-width 2 --net-levels 1 --quiet"),
              0);
    const auto report = (ckpt / "r.json").string();
    EXPECT_EQ(run_cli("eval --data " + data.string() + " --ckpt " + ckpt.string() + " --report " + report), 0);
    EXPECT_TRUE(fs::exists(report));
    // Prior flag must match the checkpoint.
    EXPECT_EQ(run_cli("eval --data " + data.string() + " --ckpt " + ckpt.string() + " --map-prior --report " + report), 2);
    EXPECT_NE(run_cli("eval --data " + data.string() + " --ckpt " + ckpt.string() + " --report " + report +
                      " --transform 9"),
              0);
    EXPECT_NE(run_cli("gen --count 2 --seed 1"), 0);
    EXPECT_EQ(run_cli("train --data " + data.string() + " --out " + ckpt.string() + " --seed 1 --dropout-p 2 --quiet"), 2);
    EXPECT_EQ(run_cli("eval --data /nonexistent --ckpt " + ckpt.string() + " --report " + report), 2);
    fs::remove_all(data);
    fs::remove_all(ckpt);
}
