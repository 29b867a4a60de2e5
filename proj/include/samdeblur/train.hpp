// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Training and evaluation harness for the restoration network, with or
// without the mask-average-pooling prior in front of it.
//
// Random streams (see rng.hpp for derive_seed):
//   parameter init     Xoshiro256ss(derive_seed(seed, 1))
//   epoch shuffles     Xoshiro256ss(derive_seed(derive_seed(seed, 2), epoch))
//   iteration t        Xoshiro256ss(derive_seed(derive_seed(seed, 3), t))
//                      crop offsets, dihedral augmentation, mask dropout

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "samdeblur/autodiff.hpp"
#include "samdeblur/errors.hpp"
#include "samdeblur/geometry.hpp"
#include "samdeblur/map_unit.hpp"
#include "samdeblur/mask.hpp"
#include "samdeblur/metrics.hpp"
#include "samdeblur/net.hpp"
#include "samdeblur/optim.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/synth.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

struct TrainConfig {
    bool use_map_prior = false;
    double dropout_p = 0.3;
    std::size_t s_channels = 8;
    std::size_t net_width = 8;
    std::size_t net_levels = 2;
    double lr0 = 1e-3;
    double lr_min = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double weight_decay = 1e-3;
    long iterations = 2000;
    std::size_t batch_size = 8;
    std::size_t patch = 64;
    std::uint64_t seed = 0;
    std::string loss = "l1";
    bool augment = true;

    void check() const {
        if (!(lr_min <= lr0)) throw ParameterError("lr_min must not exceed lr0");
        if (iterations < 1) throw ParameterError("iterations must be >= 1");
        if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
        if (patch < 16 || patch % 2) throw ParameterError("patch must be even and >= 16");
        if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) throw ParameterError("dropout_p must lie in [0, 1]");
        if (s_channels < 1) throw ParameterError("s_channels must be >= 1");
        if (net_width < 1) throw ParameterError("net_width must be >= 1");
        if (loss != "l1") throw ParameterError("unsupported loss '" + loss + "'");
        if (patch % (std::size_t{1} << net_levels))
            throw ParameterError("patch must be a multiple of 2^net_levels");
    }

    NetConfig net() const {
        return NetConfig{3, use_map_prior ? s_channels : 0, net_width, net_levels};
    }

    MapUnitConfig map_unit(bool training) const { return MapUnitConfig{s_channels, dropout_p, training}; }

    AdamConfig adam() const { return AdamConfig{beta1, beta2, 1e-8, weight_decay}; }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"use_map_prior", c.use_map_prior}, {"dropout_p", c.dropout_p}, {"s_channels", c.s_channels},
            {"net_width", c.net_width},         {"net_levels", c.net_levels}, {"lr0", c.lr0},
            {"lr_min", c.lr_min},               {"beta1", c.beta1},           {"beta2", c.beta2},
            {"weight_decay", c.weight_decay},   {"iterations", c.iterations}, {"batch_size", c.batch_size},
            {"patch", c.patch},                 {"seed", c.seed},             {"loss", c.loss},
            {"augment", c.augment}};
}

/// Missing keys keep their current values in `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    try {
        base.use_map_prior = j.value("use_map_prior", base.use_map_prior);
        base.dropout_p = j.value("dropout_p", base.dropout_p);
        base.s_channels = j.value("s_channels", base.s_channels);
        base.net_width = j.value("net_width", base.net_width);
        base.net_levels = j.value("net_levels", base.net_levels);
        base.lr0 = j.value("lr0", base.lr0);
        base.lr_min = j.value("lr_min", base.lr_min);
        base.beta1 = j.value("beta1", base.beta1);
        base.beta2 = j.value("beta2", base.beta2);
        base.weight_decay = j.value("weight_decay", base.weight_decay);
        base.iterations = j.value("iterations", base.iterations);
        base.batch_size = j.value("batch_size", base.batch_size);
        base.patch = j.value("patch", base.patch);
        base.seed = j.value("seed", base.seed);
        base.loss = j.value("loss", base.loss);
        base.augment = j.value("augment", base.augment);
        return base;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

/// Trained (or freshly initialised) model: encoder parameters first (prefixed
/// "map."), then the network's.
struct Model {
    TrainConfig config;
    ParamSet params;

    std::size_t encoder_param_count() const { return config.use_map_prior ? 4 : 0; }
};

inline Model init_model(const TrainConfig& cfg) {
    cfg.check();
    Xoshiro256ss rng(derive_seed(cfg.seed, 1));
    Model m{cfg, {}};
    if (cfg.use_map_prior) {
        auto enc = init_encoder(3, cfg.s_channels, rng);
        m.params.add("map.k3", std::move(enc.k3));
        m.params.add("map.b3", std::move(enc.b3));
        m.params.add("map.k1", std::move(enc.k1));
        m.params.add("map.b1", std::move(enc.b1));
    }
    ParamSet net = init_net(cfg.net(), rng);
    for (std::size_t i = 0; i < net.size(); ++i) m.params.add(net.names[i], std::move(net.tensors[i]));
    return m;
}

/// Records the model on `g`. Returns the restored image node.
inline Var model_forward(Graph& g, const Model& model, const std::vector<Var>& vars, Var image, const MaskStack& masks,
                         bool training, Xoshiro256ss& rng) {
    const std::size_t ne = model.encoder_param_count();
    Var input = image;
    if (model.config.use_map_prior) {
        const EncoderVars enc{vars[0], vars[1], vars[2], vars[3]};
        input = map_unit_forward(g, image, masks, enc, model.config.map_unit(training), rng);
    }
    const std::vector<Var> net_vars(vars.begin() + static_cast<std::ptrdiff_t>(ne), vars.end());
    return net_forward(g, model.config.net(), net_vars, input, image);
}

// ---------------------------------------------------------------------------
// Checkpoints: one raw tensor file per parameter plus checkpoint.json.

inline void save_checkpoint(const std::filesystem::path& dir, const Model& model) {
    std::filesystem::create_directories(dir);
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const std::string file = model.params.names[i] + ".tnsr";
        save_raw_tensor(dir / file, model.params.tensors[i]);
        params.push_back({{"name", model.params.names[i]}, {"file", file}, {"shape", model.params.tensors[i].shape()}});
    }
    const nlohmann::json manifest = {{"format", "samdeblur-checkpoint/1"},
                                     {"config", to_json(model.config)},
                                     {"parameter_count", model.params.scalar_count()},
                                     {"params", std::move(params)}};
    write_file_bytes(dir / "checkpoint.json", manifest.dump(2) + "\n");
}

inline Model load_checkpoint(const std::filesystem::path& dir) {
    const auto path = dir / "checkpoint.json";
    if (!std::filesystem::exists(path)) throw FormatError("no checkpoint.json in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    Model m{train_config_from_json(j.at("config")), {}};
    const Model reference = init_model(m.config);
    try {
        for (const auto& p : j.at("params")) {
            Tensor t = load_raw_tensor(dir / p.at("file").get<std::string>());
            if (t.shape() != p.at("shape").get<Shape>())
                throw FormatError("parameter " + p.at("name").get<std::string>() + " shape differs from manifest");
            m.params.add(p.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (m.params.names != reference.params.names) throw FormatError("checkpoint parameter list does not match its config");
    for (std::size_t i = 0; i < m.params.size(); ++i)
        if (m.params.tensors[i].shape() != reference.params.tensors[i].shape())
            throw FormatError("parameter " + m.params.names[i] + " has shape " +
                              shape_string(m.params.tensors[i].shape()) + ", config implies " +
                              shape_string(reference.params.tensors[i].shape()));
    return m;
}

// ---------------------------------------------------------------------------
// Training

struct LogRow {
    long iter = 0;
    double loss = 0.0;
    double lr = 0.0;
};

inline std::string log_to_csv(const std::vector<LogRow>& rows) {
    std::string out = "iter,loss,lr\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g\n", r.iter, r.loss, r.lr);
        out += buf;
    }
    return out;
}

struct TrainResult {
    Model model;
    std::vector<LogRow> log;
};

namespace detail {

inline Tensor crop_and_transform(const Tensor& img, std::size_t y0, std::size_t x0, std::size_t patch, Dihedral d) {
    const std::size_t C = img.dim(2);
    auto buf = crop_buffer(img.storage(), img.dim(0), img.dim(1), C, y0, x0, patch, patch);
    return Tensor(Shape{patch, patch, C}, dihedral_apply(buf, patch, patch, C, d));
}

}  // namespace detail

using ProgressFn = std::function<void(const LogRow&)>;

inline TrainResult train(const TrainConfig& cfg, const std::vector<LoadedSample>& data, const ProgressFn& progress = {}) {
    cfg.check();
    if (data.empty()) throw ContractError("train: dataset is empty");
    for (const auto& s : data) {
        if (s.blurred.dim(0) < cfg.patch || s.blurred.dim(1) < cfg.patch)
            throw ContractError("train: patch " + std::to_string(cfg.patch) + " exceeds image " + s.id);
        require_same_shape(s.blurred, s.sharp, "train sample");
    }

    TrainResult res{init_model(cfg), {}};
    Model& model = res.model;
    AdamState adam = AdamState::zeros_like(model.params.tensors);
    const AdamConfig adam_cfg = cfg.adam();

    const std::uint64_t shuffle_root = derive_seed(cfg.seed, 2);
    const std::uint64_t iter_root = derive_seed(cfg.seed, 3);
    std::vector<std::size_t> order(data.size());
    std::size_t cursor = data.size();
    std::uint64_t epoch = 0;
    auto next_index = [&] {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            Xoshiro256ss shuf(derive_seed(shuffle_root, epoch++));
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuf.below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    std::vector<Tensor> grads;
    for (long t = 1; t <= cfg.iterations; ++t) {
        Xoshiro256ss rng(derive_seed(iter_root, static_cast<std::uint64_t>(t)));
        for (auto& g : grads) g.fill(0.0);
        if (grads.empty())
            for (const auto& p : model.params.tensors) grads.emplace_back(p.shape());

        double batch_loss = 0.0;
        const double scale = 1.0 / static_cast<double>(cfg.batch_size);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const LoadedSample& s = data[next_index()];
            const std::size_t y0 = rng.below(s.blurred.dim(0) - cfg.patch + 1);
            const std::size_t x0 = rng.below(s.blurred.dim(1) - cfg.patch + 1);
            const Dihedral d{cfg.augment ? static_cast<int>(rng.below(8)) : 0};

            Graph g;
            const auto vars = bind(g, model.params);
            const Var blurred = g.constant(detail::crop_and_transform(s.blurred, y0, x0, cfg.patch, d));
            const Var sharp = g.constant(detail::crop_and_transform(s.sharp, y0, x0, cfg.patch, d));
            MaskStack masks;
            if (cfg.use_map_prior) masks = transform(crop(s.masks, y0, x0, cfg.patch, cfg.patch), d);
            const Var out = model_forward(g, model, vars, blurred, masks, /*training=*/true, rng);
            const Var loss = mul_scalar(g, l1_loss(g, out, sharp), scale);
            batch_loss += g.value(loss)[0];
            g.backward(loss);
            for (std::size_t k = 0; k < vars.size(); ++k) {
                const Tensor gk = g.grad(vars[k]);
                for (std::size_t i = 0; i < gk.size(); ++i) grads[k][i] += gk[i];
            }
        }
        if (!std::isfinite(batch_loss))
            throw DivergenceError("non-finite loss at iteration " + std::to_string(t));

        const double lr = cosine_lr(static_cast<double>(t - 1), static_cast<double>(cfg.iterations), cfg.lr0, cfg.lr_min);
        adam_step(model.params.tensors, grads, adam, t, lr, adam_cfg);
        res.log.push_back({t, batch_loss, lr});
        if (progress) progress(res.log.back());
    }
    return res;
}

/// Trains on the dataset in `data_dir`, writing the checkpoint,
/// train_log.csv and config.json into `out_dir`.
inline TrainResult train_to_dir(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                                const std::filesystem::path& out_dir, const ProgressFn& progress = {}) {
    const auto data = load_dataset(data_dir);
    TrainResult res = train(cfg, data, progress);
    save_checkpoint(out_dir, res.model);
    write_file_bytes(out_dir / "train_log.csv", log_to_csv(res.log));
    write_file_bytes(out_dir / "config.json", to_json(cfg).dump(2) + "\n");
    return res;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
    Dihedral transform{};  // applied to image, target and masks before inference
};

namespace detail {

inline Tensor pad_replicate(const Tensor& img, std::size_t h, std::size_t w) {
    const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
    Tensor out(Shape{h, w, C});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < C; ++c) out.at(y, x, c) = img.at(std::min(y, H - 1), std::min(x, W - 1), c);
    return out;
}

inline MaskStack pad_replicate(const MaskStack& m, std::size_t h, std::size_t w) {
    MaskStack out{h, w, {}, m.labels};
    for (const auto& plane : m.masks) {
        MaskPlane p(h * w);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                p[y * w + x] = plane[std::min(y, m.height - 1) * m.width + std::min(x, m.width - 1)];
        out.masks.push_back(std::move(p));
    }
    return out;
}

}  // namespace detail

/// Full-image inference in evaluation mode (no mask dropout). Images whose
/// sides are not multiples of the network alignment are edge-padded and the
/// output cropped back.
inline Tensor restore(const Model& model, const Tensor& blurred, const MaskStack& masks) {
    const std::size_t H = blurred.dim(0), W = blurred.dim(1), a = model.config.net().alignment();
    const std::size_t PH = (H + a - 1) / a * a, PW = (W + a - 1) / a * a;
    Graph g;
    const auto vars = bind(g, model.params, false);
    const Var img = g.constant(PH == H && PW == W ? blurred : detail::pad_replicate(blurred, PH, PW));
    MaskStack m;
    if (model.config.use_map_prior) m = (PH == H && PW == W) ? masks : detail::pad_replicate(masks, PH, PW);
    Xoshiro256ss unused(0);
    const Tensor& out = g.value(model_forward(g, model, vars, img, m, /*training=*/false, unused));
    if (PH == H && PW == W) return out;
    return Tensor(Shape{H, W, out.dim(2)}, crop_buffer(out.storage(), PH, PW, out.dim(2), 0, 0, H, W));
}

inline MetricsReport evaluate(const Model& model, const std::vector<LoadedSample>& data, const EvalOptions& opt = {}) {
    if (data.empty()) throw ContractError("evaluate: dataset is empty");
    std::vector<ImageMetrics> entries;
    for (const auto& s : data) {
        const std::size_t H = s.blurred.dim(0), W = s.blurred.dim(1), C = s.blurred.dim(2);
        const auto [th, tw] = opt.transform.output_dims(H, W);
        const Tensor blurred(Shape{th, tw, C}, dihedral_apply(s.blurred.storage(), H, W, C, opt.transform));
        const Tensor sharp(Shape{th, tw, C}, dihedral_apply(s.sharp.storage(), H, W, C, opt.transform));
        const MaskStack masks = transform(s.masks, opt.transform);
        Tensor restored = restore(model, blurred, masks);
        for (auto& v : restored.storage()) v = std::clamp(v, 0.0, 1.0);
        entries.push_back(measure(s.id, restored, blurred, sharp));
    }
    return aggregate(std::move(entries));
}

}  // namespace samdeblur
