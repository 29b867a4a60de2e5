// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// samdeblur: synthetic data generation, training, evaluation, gradient
// verification and report merging.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "samdeblur/samdeblur.hpp"
#include "samdeblur/verify.hpp"

namespace fs = std::filesystem;
using namespace samdeblur;

namespace {

int run_gen(const fs::path& out, std::size_t count, std::uint64_t seed, bool ood) {
    const DatasetSpec spec = ood ? ood_spec() : train_spec();
    generate_dataset(out, count, spec, seed);
    std::cout << "wrote " << count << " " << spec.name << " samples to " << out.string() << "\n";
    return 0;
}

int run_train(const TrainConfig& cfg, const fs::path& data, const fs::path& out, bool quiet) {
    const auto start = std::chrono::steady_clock::now();
    const long every = std::max<long>(1, cfg.iterations / 20);
    const auto res = train_to_dir(cfg, data, out, [&](const LogRow& r) {
        if (!quiet && (r.iter == 1 || r.iter % every == 0 || r.iter == cfg.iterations))
            std::cout << "iter " << r.iter << "  loss " << r.loss << "  lr " << r.lr << "\n";
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "trained " << res.model.params.scalar_count() << " parameters in " << secs << " s; checkpoint in "
              << out.string() << "\n";
    return 0;
}

int run_eval(const fs::path& data, const fs::path& ckpt, bool map_prior, const fs::path& report, int transform) {
    const Model model = load_checkpoint(ckpt);
    if (model.config.use_map_prior != map_prior)
        throw ContractError(std::string("checkpoint was trained ") + (model.config.use_map_prior ? "with" : "without") +
                            " the mask prior; pass --map-prior accordingly");
    const MetricsReport r = evaluate(model, load_dataset(data), EvalOptions{Dihedral{transform}});
    write_file_bytes(report, report_to_json(r).dump(2) + "\n");
    std::cout << comparison_table({{fs::path(report).stem().string(), r.aggregate}});
    return 0;
}

int run_gradcheck(std::size_t seeds, bool verbose) {
    std::vector<std::uint64_t> list;
    for (std::size_t i = 0; i < seeds; ++i) list.push_back(i + 1);
    const auto cases = run_gradient_suite(list);
    std::size_t failed = 0;
    for (const auto& c : cases) {
        failed += c.passed() ? 0 : 1;
        if (verbose || !c.passed())
            std::cout << (c.passed() ? "PASS " : "FAIL ") << c.name << " seed=" << c.seed
                      << " max_rel_err=" << c.result.max_rel_error << "\n";
    }
    std::cout << cases.size() - failed << "/" << cases.size() << " gradient checks passed\n";
    return failed ? 1 : 0;
}

int run_report(const std::vector<std::string>& files, const std::string& out) {
    std::vector<ComparisonRow> rows;
    for (const auto& f : files) {
        const auto j = nlohmann::json::parse(read_file_bytes(f));
        rows.push_back({fs::path(f).stem().string(), report_from_json(j).aggregate});
    }
    const std::string table = comparison_table(rows);
    if (!out.empty()) write_file_bytes(out, table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mask-average-pooling prior for image deblurring: data, training, evaluation"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic non-uniform blur dataset");
    fs::path gen_out;
    std::size_t gen_count = 0;
    std::uint64_t gen_seed = 0;
    bool gen_ood = false;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of samples")->required();
    gen->add_option("--seed", gen_seed, "Master seed")->required();
    gen->add_flag("--ood", gen_ood, "Use the shifted (out-of-distribution) spec");

    // train
    auto* tr = app.add_subcommand("train", "Train the restoration network");
    fs::path tr_data, tr_out, tr_config;
    TrainConfig cfg;
    bool quiet = false;
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--out", tr_out, "Checkpoint directory")->required();
    auto* seed_opt = tr->add_option("--seed", cfg.seed, "Seed")->required();
    tr->add_option("--config", tr_config, "JSON TrainConfig; command-line flags override it");
    auto* o_prior = tr->add_flag("--map-prior", cfg.use_map_prior, "Attach the mask-average-pooling prior");
    auto* o_drop = tr->add_option("--dropout-p", cfg.dropout_p, "Mask dropout probability");
    auto* o_s = tr->add_option("--s-channels", cfg.s_channels, "Encoder width S");
    auto* o_it = tr->add_option("--iters", cfg.iterations, "Training iterations");
    auto* o_b = tr->add_option("--batch", cfg.batch_size, "Batch size");
    auto* o_p = tr->add_option("--patch", cfg.patch, "Patch size");
    auto* o_w = tr->add_option("--net-width", cfg.net_width, "Network base width");
    auto* o_l = tr->add_option("--net-levels", cfg.net_levels, "Network down/up levels");
    auto* o_lr = tr->add_option("--lr0", cfg.lr0, "Initial learning rate");
    auto* o_lrm = tr->add_option("--lr-min", cfg.lr_min, "Final learning rate");
    auto* o_wd = tr->add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay");
    bool no_augment = false;
    tr->add_flag("--no-augment", no_augment, "Disable flips/rotations");
    tr->add_flag("--quiet", quiet, "Only print the summary line");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    fs::path ev_data, ev_ckpt, ev_report;
    bool ev_prior = false;
    int ev_transform = 0;
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint directory")->required();
    ev->add_flag("--map-prior", ev_prior, "Checkpoint uses the mask prior");
    ev->add_option("--report", ev_report, "Report JSON path")->required();
    ev->add_option("--transform", ev_transform, "Dihedral transform 0-7 applied before inference")
        ->check(CLI::Range(0, 7));

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference verification suite");
    std::size_t gc_seeds = 5;
    bool gc_verbose = false;
    gc->add_option("--seeds", gc_seeds, "Number of random seeds");
    gc->add_flag("-v,--verbose", gc_verbose, "Print every case");

    // report
    auto* rp = app.add_subcommand("report", "Merge eval reports into a comparison table");
    std::vector<std::string> rp_files;
    std::string rp_out;
    rp->add_option("files", rp_files, "Report JSON files")->required();
    rp->add_option("--out", rp_out, "Also write the table to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return run_gen(gen_out, gen_count, gen_seed, gen_ood);
        if (*tr) {
            TrainConfig merged = cfg;
            if (!tr_config.empty()) {
                merged = train_config_from_json(nlohmann::json::parse(read_file_bytes(tr_config)));
                // Flags given on the command line win over the file.
                auto take = [](CLI::Option* o, auto& dst, const auto& src) {
                    if (o->count()) dst = src;
                };
                take(seed_opt, merged.seed, cfg.seed);
                take(o_prior, merged.use_map_prior, cfg.use_map_prior);
                take(o_drop, merged.dropout_p, cfg.dropout_p);
                take(o_s, merged.s_channels, cfg.s_channels);
                take(o_it, merged.iterations, cfg.iterations);
                take(o_b, merged.batch_size, cfg.batch_size);
                take(o_p, merged.patch, cfg.patch);
                take(o_w, merged.net_width, cfg.net_width);
                take(o_l, merged.net_levels, cfg.net_levels);
                take(o_lr, merged.lr0, cfg.lr0);
                take(o_lrm, merged.lr_min, cfg.lr_min);
                take(o_wd, merged.weight_decay, cfg.weight_decay);
            }
            if (no_augment) merged.augment = false;
            return run_train(merged, tr_data, tr_out, quiet);
        }
        if (*ev) return run_eval(ev_data, ev_ckpt, ev_prior, ev_report, ev_transform);
        if (*gc) return run_gradcheck(gc_seeds, gc_verbose);
        if (*rp) return run_report(rp_files, rp_out);
    } catch (const std::exception& e) {
        std::cerr << "samdeblur: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
