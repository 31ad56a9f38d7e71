#pragma once

// Experiment commands behind sade_cli. Each command returns its results and
// writes files under ExperimentSpec::out; the CLI maps exceptions to exit
// codes (ConfigError/UsageError -> 2, anything else -> 1).

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sade/attention.hpp"
#include "sade/config.hpp"
#include "sade/dataset.hpp"
#include "sade/metrics.hpp"
#include "sade/model.hpp"
#include "sade/params.hpp"
#include "sade/synthetic.hpp"
#include "sade/trainer.hpp"

namespace sade {

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Precision { f32, f64 };

struct ExperimentSpec {
    std::optional<fs::path> dataset;
    std::optional<SyntheticSpec> synthetic;
    RunConfig config;
    fs::path out;
    std::size_t seeds = 1;
    std::optional<std::size_t> split;  // nullopt: every split
    std::size_t workers = 1;
    Precision precision = Precision::f64;
    bool checkpoints = false;
    std::ostream* log = nullptr;
};

// ---------------------------------------------------------------------------
// Helpers

/// Parses "nodes=1000,classes=5,degree=10,hom=0.15,signal=0.4,dim=16,mixing=0.7,seed=0".
inline SyntheticSpec parse_synthetic_recipe(const std::string& recipe) {
    SyntheticSpec s;
    std::stringstream ss(recipe);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("synthetic recipe: expected key=value, got '" + item + "'");
        const auto key = detail::trim(item.substr(0, eq));
        const auto val = detail::trim(item.substr(eq + 1));
        if (key == "nodes" || key == "n") s.num_nodes = detail::to_count(key, val);
        else if (key == "classes") s.num_classes = detail::to_count(key, val);
        else if (key == "degree") s.avg_degree = detail::to_double(key, val);
        else if (key == "hom" || key == "homophily") s.edge_homophily = detail::to_double(key, val);
        else if (key == "signal") s.feature_signal = detail::to_double(key, val);
        else if (key == "dim") s.feature_dim = detail::to_count(key, val);
        else if (key == "mixing") s.mixing_structure = detail::to_double(key, val);
        else if (key == "seed") s.seed = detail::to_count(key, val);
        else throw ConfigError("synthetic recipe: unknown key '" + key + "'");
    }
    if (s.edge_homophily < 0.0 || s.edge_homophily > 1.0) throw ConfigError("synthetic recipe: hom must lie in [0,1]");
    if (s.mixing_structure < 0.0 || s.mixing_structure > 1.0) {
        throw ConfigError("synthetic recipe: mixing must lie in [0,1]");
    }
    return s;
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
    return nlohmann::json{{"nodes", s.num_nodes},         {"classes", s.num_classes},
                          {"degree", s.avg_degree},       {"hom", s.edge_homophily},
                          {"signal", s.feature_signal},   {"dim", s.feature_dim},
                          {"mixing", s.mixing_structure}, {"seed", s.seed}};
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string format_number(double v, int precision = 10) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

/// "86.49±5.12" from fractions in [0,1].
inline std::string format_row(const RunStats& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << s.mean * 100.0 << "±" << s.stddev * 100.0;
    return os.str();
}

inline void require_source(const ExperimentSpec& spec) {
    if (spec.dataset.has_value() == spec.synthetic.has_value()) {
        throw UsageError("exactly one of --dataset or --synthetic is required");
    }
    if (spec.seeds < 1) throw UsageError("--seeds must be >= 1");
    if (spec.workers < 1) throw UsageError("--workers must be >= 1");
}

// ---------------------------------------------------------------------------
// Run planning

/// One training run: which split, which seed, and the data it uses.
struct RunPlan {
    std::size_t index = 0;
    std::size_t split = 0;
    std::uint64_t seed = 0;
    std::shared_ptr<const Dataset<double>> data;
    Split partition;
};

/// File datasets: every selected split times `seeds` training seeds
/// (seed = base + r); a directory without splits/ gets 10 generated splits.
/// Synthetic recipes: run r regenerates the graph with recipe seed + r and
/// draws one split from the same seed.
inline std::vector<RunPlan> plan_runs(const ExperimentSpec& spec) {
    require_source(spec);
    std::vector<RunPlan> plans;
    const std::uint64_t base = spec.config.train.seed;
    if (spec.dataset) {
        auto ds = std::make_shared<Dataset<double>>(load_graph<double>(*spec.dataset));
        if (ds->splits.empty()) ds->splits = make_splits(ds->graph.num_nodes(), {}, 10, base);
        std::vector<std::size_t> which;
        if (spec.split) {
            if (*spec.split >= ds->splits.size()) {
                throw UsageError("--splits " + std::to_string(*spec.split) + ": dataset has " +
                                 std::to_string(ds->splits.size()) + " splits");
            }
            which.push_back(*spec.split);
        } else {
            for (std::size_t k = 0; k < ds->splits.size(); ++k) which.push_back(k);
        }
        for (auto k : which) {
            for (std::size_t r = 0; r < spec.seeds; ++r) {
                plans.push_back(RunPlan{plans.size(), k, base + r, ds, ds->splits[k]});
            }
        }
    } else {
        for (std::size_t r = 0; r < spec.seeds; ++r) {
            auto recipe = *spec.synthetic;
            recipe.seed += r;
            auto ds = std::make_shared<Dataset<double>>(generate_synthetic<double>(recipe));
            auto split = make_splits(ds->graph.num_nodes(), {}, 1, recipe.seed).front();
            plans.push_back(RunPlan{r, 0, base + r, ds, std::move(split)});
        }
    }
    return plans;
}

/// Optional per-run rewrite of the data (noise injection).
using DataTransform = std::function<Dataset<double>(const Dataset<double>&, const RunPlan&)>;

struct RunResult {
    std::optional<TrainReport> report;
    std::string error;
    NamedBlobs checkpoint;
};

template <typename T>
RunResult run_plan_as(const RunPlan& plan, const RunConfig& cfg, const DataTransform& transform, bool want_blobs) {
    std::optional<Dataset<double>> rewritten;
    if (transform) rewritten = transform(*plan.data, plan);
    const Dataset<double>& ds = rewritten ? *rewritten : *plan.data;
    const auto in = make_inputs<T>(ds.graph, ds.features.template cast<T>(), cfg.model.self_loops);
    auto model = make_model<T>(cfg.model, ds.features.cols(), ds.graph.num_nodes(), ds.labels.num_classes, plan.seed);
    TrainConfig tc = cfg.train;
    tc.seed = plan.seed;
    TrainArtifacts<T> art;
    RunResult res;
    res.report = train(*model, in, ds.labels, plan.partition, tc, want_blobs ? &art : nullptr);
    res.report->split = plan.split;
    res.report->config = to_json(cfg);
    res.report->config["seed"] = plan.seed;
    if (want_blobs) {
        res.checkpoint = std::move(art.parameters);
        if (!art.feature_embedding.empty()) res.checkpoint.emplace_back("H_f", art.feature_embedding.template cast<double>());
        if (!art.topology_embedding.empty()) {
            res.checkpoint.emplace_back("H_t", art.topology_embedding.template cast<double>());
        }
    }
    return res;
}

/// Runs every plan, `workers` at a time. Results keep plan order; a failing
/// run records its error and the others continue.
inline std::vector<RunResult> execute_runs(const std::vector<RunPlan>& plans, const RunConfig& cfg,
                                           const ExperimentSpec& spec, const DataTransform& transform = {},
                                           const std::string& label = "") {
    cfg.validate();
    std::vector<RunResult> results(plans.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < plans.size(); i = next++) {
            const auto& plan = plans[i];
            try {
                results[i] = spec.precision == Precision::f32
                                 ? run_plan_as<float>(plan, cfg, transform, spec.checkpoints)
                                 : run_plan_as<double>(plan, cfg, transform, spec.checkpoints);
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                results[i].error = e.what();
            }
            if (spec.log) {
                std::lock_guard<std::mutex> lock(log_mutex);
                auto& os = *spec.log;
                os << (label.empty() ? "" : label + " ") << "run " << (i + 1) << "/" << plans.size() << " split "
                   << plan.split << " seed " << plan.seed << ": ";
                if (results[i].report) {
                    const auto& r = *results[i].report;
                    os << "test " << std::fixed << std::setprecision(4) << r.test_acc << " (epoch " << r.selected_epoch
                       << ", " << std::setprecision(1) << r.wall_time_s << " s)" << std::defaultfloat << '\n';
                } else {
                    os << "FAILED: " << results[i].error << '\n';
                }
            }
        }
    };
    const std::size_t n_threads = std::min(spec.workers, std::max<std::size_t>(plans.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

inline std::vector<TrainReport> successful(const std::vector<RunResult>& results) {
    std::vector<TrainReport> out;
    for (const auto& r : results) {
        if (r.report) out.push_back(*r.report);
    }
    return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
    std::vector<RunResult> runs;
    std::optional<RunStats> stats;  // over successful runs
    nlohmann::json summary;
    std::size_t failures = 0;
};

/// Runs every planned split/seed, writes runs/run_<i>.json, runs/curve_<i>.csv
/// (and runs/run_<i>.ckpt with --checkpoints) plus summary.json. Nothing
/// written carries wall time, so reruns reproduce the files byte for byte.
inline TrainOutcome cmd_train(const ExperimentSpec& spec) {
    spec.config.validate();
    const auto plans = plan_runs(spec);
    TrainOutcome outcome;
    outcome.runs = execute_runs(plans, spec.config, spec);

    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < outcome.runs.size(); ++i) {
        const auto& res = outcome.runs[i];
        const auto& plan = plans[i];
        if (!res.report) {
            ++outcome.failures;
            runs.push_back({{"run", i}, {"split", plan.split}, {"seed", plan.seed}, {"status", "failed"},
                            {"error", res.error}});
            continue;
        }
        const auto& r = *res.report;
        runs.push_back({{"run", i},
                        {"split", plan.split},
                        {"seed", plan.seed},
                        {"status", "ok"},
                        {"selected_epoch", r.selected_epoch},
                        {"val_acc", r.val_acc},
                        {"test_acc", r.test_acc}});
        if (!spec.out.empty()) {
            const auto stem = spec.out / "runs" / ("run_" + std::to_string(i));
            write_file_atomic(stem.string() + ".json", to_json(r, true, false).dump(2) + "\n");
            std::ostringstream csv;
            write_curve_csv(csv, r);
            write_file_atomic(spec.out / "runs" / ("curve_" + std::to_string(i) + ".csv"), csv.str());
            if (spec.checkpoints) {
                const auto tmp = fs::path(stem.string() + ".ckpt.tmp");
                write_checkpoint(tmp, res.checkpoint);
                fs::rename(tmp, stem.string() + ".ckpt");
            }
        }
    }
    const auto ok = successful(outcome.runs);
    nlohmann::json summary{{"model", to_string(spec.config.model.kind)},
                           {"config", to_json(spec.config)},
                           {"runs", runs},
                           {"completed", ok.size()},
                           {"failed", outcome.failures}};
    if (spec.dataset) summary["dataset"] = spec.dataset->string();
    if (spec.synthetic) summary["synthetic"] = to_json(*spec.synthetic);
    if (!ok.empty()) {
        outcome.stats = aggregate_runs(ok);
        summary["test_acc"] = {{"mean", outcome.stats->mean}, {"std", outcome.stats->stddev},
                               {"count", outcome.stats->count}};
        summary["row"] = format_row(*outcome.stats);
    }
    outcome.summary = summary;
    if (!spec.out.empty()) write_file_atomic(spec.out / "summary.json", summary.dump(2) + "\n");
    return outcome;
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
    std::string variant;
    RunStats stats;
    std::optional<double> asymmetry_feature;   // first layer, averaged over runs
    std::optional<double> asymmetry_topology;
    std::optional<double> asymmetry_mean;
    std::size_t failures = 0;
};

inline std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base) {
    std::vector<std::pair<std::string, ModelConfig>> v;
    v.emplace_back("full", base);
    auto m = base;
    m.no_feature_path = true;
    v.emplace_back("no_feature_path", m);
    m = base;
    m.no_topology_path = true;
    v.emplace_back("no_topology_path", m);
    m = base;
    m.no_feature_scaling = true;
    v.emplace_back("no_feature_scaling", m);
    m = base;
    m.no_topology_scaling = true;
    v.emplace_back("no_topology_scaling", m);
    m = base;
    m.symmetric_attention = true;
    v.emplace_back("sym", m);
    return v;
}

inline std::optional<double> mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return std::nullopt;
    double s = 0;
    for (double x : xs) s += x;
    return s / double(xs.size());
}

/// Runs the six ablation variants on the same plans; writes ablation.csv
/// (variant,mean,std,asymmetry_feature,asymmetry_topology,asymmetry_mean)
/// and ablation.json. Every variant is validated before anything runs.
inline std::vector<AblationRow> cmd_ablate(const ExperimentSpec& spec,
                                           std::vector<std::string> only = {}) {
    if (spec.config.model.kind != ModelKind::sade) throw ConfigError("ablate needs model = sade");
    auto variants = ablation_variants(spec.config.model);
    if (!only.empty()) {
        std::erase_if(variants, [&](const auto& v) { return std::find(only.begin(), only.end(), v.first) == only.end(); });
        if (variants.empty()) throw UsageError("no ablation variant matches the requested names");
    }
    for (const auto& [name, m] : variants) {
        try {
            m.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("ablation variant '" + name + "': " + e.what());
        }
    }
    const auto plans = plan_runs(spec);
    std::vector<AblationRow> rows;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [name, m] : variants) {
        RunConfig cfg = spec.config;
        cfg.model = m;
        auto results = execute_runs(plans, cfg, spec, {}, name);
        const auto ok = successful(results);
        AblationRow row;
        row.variant = name;
        row.failures = results.size() - ok.size();
        if (ok.empty()) throw std::runtime_error("ablation variant '" + name + "': every run failed");
        row.stats = aggregate_runs(ok);
        std::vector<double> af, at, am;
        for (const auto& r : ok) {
            if (!r.attention) continue;
            if (!r.attention->feature_asymmetry.empty()) af.push_back(r.attention->feature_first_layer);
            if (!r.attention->topology_asymmetry.empty()) at.push_back(r.attention->topology_first_layer);
            am.push_back(r.attention->mean);
        }
        row.asymmetry_feature = mean_of(af);
        row.asymmetry_topology = mean_of(at);
        row.asymmetry_mean = mean_of(am);
        nlohmann::json jr{{"variant", name},        {"mean", row.stats.mean},   {"std", row.stats.stddev},
                          {"row", format_row(row.stats)}, {"count", row.stats.count}, {"failed", row.failures}};
        jr["asymmetry_feature"] = row.asymmetry_feature ? nlohmann::json(*row.asymmetry_feature) : nlohmann::json();
        jr["asymmetry_topology"] = row.asymmetry_topology ? nlohmann::json(*row.asymmetry_topology) : nlohmann::json();
        jr["asymmetry_mean"] = row.asymmetry_mean ? nlohmann::json(*row.asymmetry_mean) : nlohmann::json();
        j.push_back(jr);
        rows.push_back(row);
    }
    if (!spec.out.empty()) {
        std::ostringstream csv;
        csv << "variant,mean,std,asymmetry_feature,asymmetry_topology,asymmetry_mean\n";
        for (const auto& r : rows) {
            csv << r.variant << ',' << format_number(r.stats.mean) << ',' << format_number(r.stats.stddev) << ','
                << format_optional(r.asymmetry_feature) << ',' << format_optional(r.asymmetry_topology) << ','
                << format_optional(r.asymmetry_mean) << '\n';
        }
        write_file_atomic(spec.out / "ablation.csv", csv.str());
        nlohmann::json doc{{"config", to_json(spec.config)}, {"variants", j}};
        write_file_atomic(spec.out / "ablation.json", doc.dump(2) + "\n");
    }
    return rows;
}

// ---------------------------------------------------------------------------
// noise-sweep

struct NoiseGrid {
    std::vector<double> feature_levels{0.0, 0.1, 0.2, 0.3};
    std::vector<double> edge_levels{0.0, 0.1, 0.2, 0.3};
    std::vector<std::string> models{"sade", "gcn", "linkx"};
};

struct NoiseRow {
    std::string kind;  // feature | edge_add | edge_remove
    double level = 0;
    std::string model;
    RunStats stats;
};

inline const char* kLinkxNote =
    "linkx is an analog baseline (MLP on X plus a linear map on adjacency rows, summed), not a reproduction of "
    "LINKX or GloGNN";

/// Gaussian feature noise and random edge addition/removal, each applied to
/// the data before training. The noise seed depends on the run seed and the
/// grid point, so every model sees the same corrupted data.
inline std::vector<NoiseRow> cmd_noise_sweep(const ExperimentSpec& spec, const NoiseGrid& grid = {}) {
    const auto plans = plan_runs(spec);
    std::vector<std::pair<std::string, RunConfig>> models;
    for (const auto& name : grid.models) {
        RunConfig cfg = spec.config;
        cfg.model.kind = parse_model_kind(name);
        cfg.validate();
        models.emplace_back(name, cfg);
    }
    struct Point {
        std::string kind;
        double level;
    };
    std::vector<Point> points;
    for (double l : grid.feature_levels) points.push_back({"feature", l});
    for (double l : grid.edge_levels) points.push_back({"edge_add", l});
    for (double l : grid.edge_levels) points.push_back({"edge_remove", l});
    for (const auto& p : points) {
        if (p.level < 0.0) throw ConfigError("noise levels must be >= 0");
        if (p.kind != "feature" && p.level > 0.3 + 1e-12) throw ConfigError("edge noise levels must lie in [0, 0.3]");
    }

    std::vector<NoiseRow> rows;
    std::vector<std::pair<std::string, RunStats>> clean;  // level 0 is shared by all kinds
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const auto& p = points[pi];
        for (const auto& [name, cfg] : models) {
            if (p.level == 0.0) {
                auto it = std::find_if(clean.begin(), clean.end(), [&](const auto& c) { return c.first == name; });
                if (it != clean.end()) {
                    rows.push_back({p.kind, p.level, name, it->second});
                    continue;
                }
            }
            DataTransform transform;
            if (p.level > 0.0) {
                const auto kind = p.kind;
                const double level = p.level;
                const std::uint64_t salt = 0x9E3779B97F4A7C15ULL * (pi + 1);
                transform = [kind, level, salt](const Dataset<double>& ds, const RunPlan& plan) {
                    Dataset<double> out = ds;
                    if (kind == "feature") {
                        out.features = perturb_features(ds.features, level, plan.seed ^ salt);
                    } else {
                        out.graph = perturb_edges(ds.graph, level, kind == "edge_add" ? EdgeNoise::add : EdgeNoise::remove,
                                                  plan.seed ^ salt);
                    }
                    return out;
                };
            }
            std::ostringstream label;
            label << p.kind << '=' << p.level << ' ' << name;
            auto results = execute_runs(plans, cfg, spec, transform, label.str());
            const auto ok = successful(results);
            if (ok.empty()) throw std::runtime_error("noise sweep " + label.str() + ": every run failed");
            const auto stats = aggregate_runs(ok);
            if (p.level == 0.0) clean.emplace_back(name, stats);
            rows.push_back({p.kind, p.level, name, stats});
        }
    }
    if (!spec.out.empty()) {
        std::ostringstream csv;
        csv << "noise_kind,level,model,mean,std\n";
        nlohmann::json jrows = nlohmann::json::array();
        for (const auto& r : rows) {
            csv << r.kind << ',' << format_number(r.level) << ',' << r.model << ',' << format_number(r.stats.mean) << ','
                << format_number(r.stats.stddev) << '\n';
            jrows.push_back({{"noise_kind", r.kind}, {"level", r.level}, {"model", r.model},
                             {"mean", r.stats.mean}, {"std", r.stats.stddev}});
        }
        write_file_atomic(spec.out / "noise_sweep.csv", csv.str());
        nlohmann::json doc{{"config", to_json(spec.config)}, {"rows", jrows}};
        if (std::find(grid.models.begin(), grid.models.end(), "linkx") != grid.models.end()) doc["note"] = kLinkxNote;
        write_file_atomic(spec.out / "noise_sweep.json", doc.dump(2) + "\n");
    }
    if (spec.log && std::find(grid.models.begin(), grid.models.end(), "linkx") != grid.models.end()) {
        *spec.log << "note: " << kLinkxNote << '\n';
    }
    return rows;
}

// ---------------------------------------------------------------------------
// khop

struct KHopRow {
    std::size_t k = 0;
    std::optional<double> homophily;
    std::optional<double> feature_distance;
    std::optional<double> topology_distance;
};

inline const Matrix<double>* find_blob(const NamedBlobs& blobs, const std::string& name) {
    for (const auto& [n, m] : blobs) {
        if (n == name) return &m;
    }
    return nullptr;
}

/// K-hop homophily and mean cosine distance between final-layer embeddings
/// of strict k-hop pairs, k = 1..kmax. The graph comes from the spec (a
/// synthetic recipe means its first run); embeddings from the checkpoint.
inline std::vector<KHopRow> cmd_khop(const ExperimentSpec& spec, const fs::path& checkpoint, std::size_t kmax = 5) {
    require_source(spec);
    if (kmax < 1) throw UsageError("--kmax must be >= 1");
    if (!fs::exists(checkpoint)) throw std::runtime_error("missing checkpoint: " + checkpoint.string());
    const auto blobs = read_checkpoint(checkpoint);
    const Dataset<double> ds =
        spec.dataset ? load_graph<double>(*spec.dataset) : generate_synthetic<double>(*spec.synthetic);
    const auto* hf = find_blob(blobs, "H_f");
    const auto* ht = find_blob(blobs, "H_t");
    for (const auto* h : {hf, ht}) {
        if (h && h->rows() != ds.graph.num_nodes()) {
            throw std::runtime_error("checkpoint embeddings have " + std::to_string(h->rows()) + " rows, graph has " +
                                     std::to_string(ds.graph.num_nodes()) + " nodes");
        }
    }
    if (!hf && !ht) throw std::runtime_error("checkpoint has no H_f or H_t embedding");
    const auto pairs = k_hop_pairs(ds.graph, kmax);
    std::vector<KHopRow> rows;
    for (std::size_t k = 1; k <= kmax; ++k) {
        std::span<const std::pair<std::size_t, std::size_t>> pk(pairs[k]);
        KHopRow row;
        row.k = k;
        row.homophily = k_hop_homophily(pk, ds.labels);
        if (hf) row.feature_distance = k_hop_embedding_distance<double>(pk, *hf);
        if (ht) row.topology_distance = k_hop_embedding_distance<double>(pk, *ht);
        rows.push_back(row);
    }
    if (!spec.out.empty()) {
        std::ostringstream csv;
        csv << "k,homophily,feature_distance,topology_distance\n";
        for (const auto& r : rows) {
            csv << r.k << ',' << format_optional(r.homophily) << ',' << format_optional(r.feature_distance) << ','
                << format_optional(r.topology_distance) << '\n';
        }
        write_file_atomic(spec.out / "khop.csv", csv.str());
    }
    return rows;
}

// ---------------------------------------------------------------------------
// info

struct DatasetCard {
    std::size_t nodes = 0;
    std::size_t edges = 0;  // undirected
    std::size_t features = 0;
    std::size_t classes = 0;
    double homophily = 0;
    std::vector<std::optional<double>> khop_homophily;  // k = 1..5
};

inline DatasetCard dataset_card(const Dataset<double>& ds, std::size_t kmax = 5) {
    DatasetCard c;
    c.nodes = ds.graph.num_nodes();
    c.edges = undirected_edge_count(ds.graph);
    c.features = ds.features.cols();
    c.classes = ds.labels.num_classes;
    c.homophily = ds.graph.num_edges() ? edge_homophily(ds.graph, ds.labels) : 0.0;
    const auto pairs = k_hop_pairs(ds.graph, kmax);
    for (std::size_t k = 1; k <= kmax; ++k) {
        c.khop_homophily.push_back(k_hop_homophily(std::span<const std::pair<std::size_t, std::size_t>>(pairs[k]), ds.labels));
    }
    return c;
}

/// Prints the dataset card; with an output directory also writes info.json
/// and metrics.csv (metric,k,value).
inline DatasetCard cmd_info(const ExperimentSpec& spec, std::ostream& os) {
    require_source(spec);
    const Dataset<double> ds =
        spec.dataset ? load_graph<double>(*spec.dataset) : generate_synthetic<double>(*spec.synthetic);
    const auto c = dataset_card(ds);
    os << "nodes      " << c.nodes << '\n'
       << "edges      " << c.edges << '\n'
       << "features   " << c.features << '\n'
       << "classes    " << c.classes << '\n'
       << "homophily  " << std::fixed << std::setprecision(4) << c.homophily << std::defaultfloat << '\n';
    if (!spec.out.empty()) {
        nlohmann::json j{{"nodes", c.nodes},     {"edges", c.edges},        {"features", c.features},
                         {"classes", c.classes}, {"homophily", c.homophily}};
        write_file_atomic(spec.out / "info.json", j.dump(2) + "\n");
        std::ostringstream csv;
        csv << "metric,k,value\n";
        csv << "edge_homophily,1," << format_number(c.homophily) << '\n';
        for (std::size_t k = 0; k < c.khop_homophily.size(); ++k) {
            csv << "k_hop_homophily," << (k + 1) << ',' << format_optional(c.khop_homophily[k]) << '\n';
        }
        write_file_atomic(spec.out / "metrics.csv", csv.str());
    }
    return c;
}

// ---------------------------------------------------------------------------
// generate

/// Writes a synthetic dataset directory with `num_splits` random splits.
inline void cmd_generate(const SyntheticSpec& recipe, const fs::path& dir, std::size_t num_splits = 10) {
    auto ds = generate_synthetic<double>(recipe);
    ds.splits = make_splits(ds.graph.num_nodes(), {}, num_splits, recipe.seed);
    write_dataset(dir, ds);
}

// ---------------------------------------------------------------------------
// kernel-bench

struct BenchPoint {
    std::string arm;  // edge_attention | spmm | dense_oracle
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double seconds = 0;  // per call, best of several trials
    bool skipped = false;
};

struct BenchReport {
    std::vector<BenchPoint> points;
    double attention_slope = 0;  // log-log vs E
    double spmm_slope = 0;       // log-log vs E
    double dense_slope = 0;      // log-log vs N
    long peak_rss_kb = 0;
};

struct BenchOptions {
    std::vector<std::size_t> edge_counts{10000, 40000, 160000};
    std::vector<std::size_t> dense_nodes{512, 1024, 2048};
    double degree = 10.0;
    std::size_t hidden = 64;
    std::size_t trials = 5;
    double min_trial_seconds = 0.05;
    std::uint64_t seed = 0;
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= double(x.size());
    my /= double(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

/// Best per-call time over `trials`; each trial repeats `fn` until it has
/// run for at least `min_seconds`.
template <typename F>
double time_per_call(F&& fn, std::size_t trials, double min_seconds) {
    using clock = std::chrono::steady_clock;
    double best = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::size_t calls = 0;
        const auto start = clock::now();
        double elapsed = 0;
        do {
            fn();
            ++calls;
            elapsed = std::chrono::duration<double>(clock::now() - start).count();
        } while (elapsed < min_seconds);
        const double per = elapsed / double(calls);
        if (t == 0 || per < best) best = per;
    }
    return best;
}

inline Matrix<double> random_simplex_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix<double> m(rows, cols);
    for (auto& v : m.data()) v = nd(rng);
    return ad::row_softmax(m);
}

inline long peak_rss_kb() {
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return ru.ru_maxrss;
}

/// Uniform random graph with about `edges` directed entries at the given degree.
inline Graph bench_graph(std::size_t edges, double degree, std::uint64_t seed) {
    const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(double(edges) / degree)));
    const std::size_t m = edges / 2;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<Edge> pairs;
    pairs.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto u = static_cast<NodeId>(pick(rng));
        auto v = static_cast<NodeId>(pick(rng));
        if (u == v) v = static_cast<NodeId>((v + 1) % n);
        pairs.push_back({u, v});
    }
    return Graph(n, std::move(pairs), true);
}

inline BenchReport cmd_kernel_bench(const fs::path& out, const BenchOptions& opt = {}, std::ostream* log = nullptr) {
    BenchReport rep;
    std::vector<double> es, ta, ts;
    for (std::size_t i = 0; i < opt.edge_counts.size(); ++i) {
        const auto g = bench_graph(opt.edge_counts[i], opt.degree, opt.seed + i);
        const auto q = random_simplex_rows(g.num_nodes(), opt.hidden, opt.seed + 100 + i);
        const auto k = random_simplex_rows(g.num_nodes(), opt.hidden, opt.seed + 200 + i);
        const auto adj = row_normalize<double>(g);
        double sink = 0;
        const double t_att = time_per_call([&] { sink += edge_attention(q, k, g).values.size(); }, opt.trials,
                                           opt.min_trial_seconds);
        const double t_spmm = time_per_call(
            [&] { sink += spmm<double>(g, std::span<const double>(adj.weights), q)(0, 0); }, opt.trials,
            opt.min_trial_seconds);
        (void)sink;
        rep.points.push_back({"edge_attention", g.num_nodes(), g.num_edges(), t_att, false});
        rep.points.push_back({"spmm", g.num_nodes(), g.num_edges(), t_spmm, false});
        if (g.num_edges() > 0) {
            es.push_back(double(g.num_edges()));
            ta.push_back(t_att);
            ts.push_back(t_spmm);
        }
        if (log) *log << "E=" << g.num_edges() << " edge_attention " << t_att << " s, spmm " << t_spmm << " s\n";
    }
    if (es.size() >= 2) {
        rep.attention_slope = loglog_slope(es, ta);
        rep.spmm_slope = loglog_slope(es, ts);
    }
    std::vector<double> ns, td;
    for (std::size_t i = 0; i < opt.dense_nodes.size(); ++i) {
        const std::size_t n = opt.dense_nodes[i];
        BenchPoint p{"dense_oracle", n, 0, 0, false};
        if (n > kDenseOracleMaxNodes) {
            p.skipped = true;
            if (log) *log << "N=" << n << " dense_oracle skipped (guard " << kDenseOracleMaxNodes << ")\n";
        } else {
            const auto g = bench_graph(static_cast<std::size_t>(double(n) * opt.degree), opt.degree, opt.seed + 300 + i);
            const auto q = random_simplex_rows(g.num_nodes(), opt.hidden, opt.seed + 400 + i);
            const auto adj = row_normalize<double>(g);
            p.nodes = g.num_nodes();
            p.edges = g.num_edges();
            double sink = 0;
            p.seconds = time_per_call([&] { sink += dense_oracle(q, q, adj)(0, 0); }, std::max<std::size_t>(1, opt.trials / 2),
                                      opt.min_trial_seconds);
            (void)sink;
            ns.push_back(double(g.num_nodes()));
            td.push_back(p.seconds);
            if (log) *log << "N=" << g.num_nodes() << " dense_oracle " << p.seconds << " s\n";
        }
        rep.points.push_back(p);
    }
    if (ns.size() >= 2) rep.dense_slope = loglog_slope(ns, td);
    rep.peak_rss_kb = peak_rss_kb();
    if (!out.empty()) {
        std::ostringstream csv;
        csv << "arm,nodes,edges,seconds\n";
        for (const auto& p : rep.points) {
            csv << p.arm << ',' << p.nodes << ',' << p.edges << ',' << (p.skipped ? "NA" : format_number(p.seconds))
                << '\n';
        }
        write_file_atomic(out / "kernel_bench.csv", csv.str());
        nlohmann::json j{{"edge_attention_slope", rep.attention_slope},
                         {"spmm_slope", rep.spmm_slope},
                         {"dense_oracle_slope", rep.dense_slope},
                         {"peak_rss_kb", rep.peak_rss_kb},
                         {"hidden", opt.hidden},
                         {"degree", opt.degree}};
        write_file_atomic(out / "kernel_bench.json", j.dump(2) + "\n");
    }
    return rep;
}

}  // namespace sade
