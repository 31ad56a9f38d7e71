// sade_cli: training, ablation, noise sweeps and diagnostics for SADE-GCN.
//
//   sade_cli train --dataset data/texas --model-config texas.cfg --out runs/texas
//   sade_cli ablate --synthetic hom=0.15,signal=0.4 --seeds 10 --out runs/ablate
//   sade_cli info --dataset data/texas
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sade/experiments.hpp"

namespace {

struct CommonArgs {
    std::string dataset;
    std::string synthetic;
    std::string model_config;
    std::string train_config;
    std::vector<std::string> overrides;
    std::string out;
    std::size_t seeds = 1;
    std::string splits = "all";
    int precision = 64;
    std::size_t workers = 1;
    bool quiet = false;
};

void add_common(CLI::App* app, CommonArgs& a, bool training) {
    app->add_option("--dataset", a.dataset, "dataset directory (edges.tsv, features.csv, labels.txt, splits/)");
    app->add_option("--synthetic", a.synthetic,
                    "synthetic recipe, e.g. nodes=1000,classes=5,degree=10,hom=0.15,signal=0.4,mixing=0.7,seed=0");
    app->add_option("--out", a.out, "output directory");
    if (!training) return;
    app->add_option("--model-config", a.model_config, "model config file (key = value lines)");
    app->add_option("--train-config", a.train_config, "training config file (key = value lines)");
    app->add_option("--set", a.overrides, "config override key=value (repeatable)");
    app->add_option("--seeds", a.seeds, "training seeds per split (synthetic: number of generated graphs)");
    app->add_option("--splits", a.splits, "'all' or a split index");
    app->add_option("--precision", a.precision, "floating point width")->check(CLI::IsMember({32, 64}));
    app->add_option("--workers", a.workers, "concurrent runs");
    app->add_flag("--quiet", a.quiet, "no per-run progress lines");
}

sade::ExperimentSpec make_spec(const CommonArgs& a) {
    sade::ExperimentSpec spec;
    if (!a.dataset.empty()) spec.dataset = a.dataset;
    if (!a.synthetic.empty()) spec.synthetic = sade::parse_synthetic_recipe(a.synthetic);
    if (!a.model_config.empty()) sade::parse_config_file(spec.config, a.model_config);
    if (!a.train_config.empty()) sade::parse_config_file(spec.config, a.train_config);
    for (const auto& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw sade::UsageError("--set expects key=value, got '" + kv + "'");
        sade::apply_config_key(spec.config, sade::detail::trim(kv.substr(0, eq)), sade::detail::trim(kv.substr(eq + 1)));
    }
    spec.out = a.out;
    spec.seeds = a.seeds;
    if (a.splits != "all") {
        try {
            spec.split = std::stoul(a.splits);
        } catch (const std::exception&) {
            throw sade::UsageError("--splits expects 'all' or an index, got '" + a.splits + "'");
        }
    }
    spec.precision = a.precision == 32 ? sade::Precision::f32 : sade::Precision::f64;
    spec.workers = a.workers;
    spec.log = a.quiet ? nullptr : &std::cerr;
    return spec;
}

std::vector<double> parse_levels(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!sade::detail::trim(tok).empty()) out.push_back(sade::detail::to_double("level", sade::detail::trim(tok)));
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"SADE-GCN experiments"};
    app.require_subcommand(1);

    CommonArgs train_args;
    bool checkpoints = false;
    auto* train = app.add_subcommand("train", "train over every split/seed and aggregate test accuracy");
    add_common(train, train_args, true);
    train->add_flag("--checkpoints", checkpoints, "write runs/run_<i>.ckpt with parameters and final embeddings");

    CommonArgs ablate_args;
    std::vector<std::string> variants;
    auto* ablate = app.add_subcommand("ablate", "full model against path, scaling and symmetry ablations");
    add_common(ablate, ablate_args, true);
    ablate->add_option("--variants", variants, "subset of full,no_feature_path,no_topology_path,"
                                               "no_feature_scaling,no_topology_scaling,sym")
        ->delimiter(',');

    CommonArgs noise_args;
    std::string feature_levels = "0,0.1,0.2,0.3";
    std::string edge_levels = "0,0.1,0.2,0.3";
    std::vector<std::string> noise_models{"sade", "gcn", "linkx"};
    auto* noise = app.add_subcommand("noise-sweep", "accuracy under feature and edge noise");
    add_common(noise, noise_args, true);
    noise->add_option("--feature-levels", feature_levels, "comma-separated noise coefficients");
    noise->add_option("--edge-levels", edge_levels, "comma-separated edge fractions in [0, 0.3]");
    noise->add_option("--models", noise_models, "models to compare")->delimiter(',');

    CommonArgs khop_args;
    std::string checkpoint;
    std::size_t kmax = 5;
    auto* khop = app.add_subcommand("khop", "k-hop homophily and embedding distances from a checkpoint");
    add_common(khop, khop_args, false);
    khop->add_option("--checkpoint", checkpoint, "checkpoint written by train --checkpoints")->required();
    khop->add_option("--kmax", kmax, "largest k");

    CommonArgs info_args;
    auto* info = app.add_subcommand("info", "dataset card: nodes, edges, features, classes, homophily");
    add_common(info, info_args, false);

    std::string bench_out;
    sade::BenchOptions bench_opt;
    auto* bench = app.add_subcommand("kernel-bench", "edge attention and spmm scaling in E, dense oracle in N");
    bench->add_option("--out", bench_out, "output directory");
    bench->add_option("--hidden", bench_opt.hidden, "embedding width H");
    bench->add_option("--degree", bench_opt.degree, "average degree");
    bench->add_option("--trials", bench_opt.trials, "timing trials per point");

    std::string gen_recipe, gen_out;
    std::size_t gen_splits = 10;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset directory");
    gen->add_option("--synthetic", gen_recipe, "synthetic recipe")->required();
    gen->add_option("--out", gen_out, "dataset directory")->required();
    gen->add_option("--num-splits", gen_splits, "random 48/32/20 splits to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (train->parsed()) {
        auto spec = make_spec(train_args);
        spec.checkpoints = checkpoints;
        const auto outcome = sade::cmd_train(spec);
        if (outcome.stats) {
            std::cout << sade::to_string(spec.config.model.kind) << " test accuracy " << sade::format_row(*outcome.stats)
                      << " over " << outcome.stats->count << " runs\n";
        }
        if (outcome.failures) {
            std::cerr << outcome.failures << " run(s) failed; see summary.json\n";
            return 1;
        }
    } else if (ablate->parsed()) {
        const auto rows = sade::cmd_ablate(make_spec(ablate_args), variants);
        for (const auto& r : rows) {
            std::cout << r.variant << '\t' << sade::format_row(r.stats) << "\tasymmetry "
                      << sade::format_optional(r.asymmetry_mean) << '\n';
        }
    } else if (noise->parsed()) {
        sade::NoiseGrid grid;
        grid.feature_levels = parse_levels(feature_levels);
        grid.edge_levels = parse_levels(edge_levels);
        grid.models = noise_models;
        const auto rows = sade::cmd_noise_sweep(make_spec(noise_args), grid);
        for (const auto& r : rows) {
            std::cout << r.kind << '\t' << r.level << '\t' << r.model << '\t' << sade::format_row(r.stats) << '\n';
        }
    } else if (khop->parsed()) {
        const auto rows = sade::cmd_khop(make_spec(khop_args), checkpoint, kmax);
        std::cout << "k,homophily,feature_distance,topology_distance\n";
        for (const auto& r : rows) {
            std::cout << r.k << ',' << sade::format_optional(r.homophily) << ','
                      << sade::format_optional(r.feature_distance) << ','
                      << sade::format_optional(r.topology_distance) << '\n';
        }
    } else if (info->parsed()) {
        sade::cmd_info(make_spec(info_args), std::cout);
    } else if (bench->parsed()) {
        const auto rep = sade::cmd_kernel_bench(bench_out, bench_opt, &std::cerr);
        std::cout << "edge_attention slope " << rep.attention_slope << "\nspmm slope " << rep.spmm_slope
                  << "\ndense_oracle slope " << rep.dense_slope << "\npeak RSS " << rep.peak_rss_kb << " KiB\n";
    } else if (gen->parsed()) {
        sade::cmd_generate(sade::parse_synthetic_recipe(gen_recipe), gen_out, gen_splits);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sade::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const sade::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
