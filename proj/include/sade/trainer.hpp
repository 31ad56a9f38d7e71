#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sade/autodiff.hpp"
#include "sade/config.hpp"
#include "sade/model.hpp"
#include "sade/params.hpp"

namespace sade {

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AdamOptions {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One Adam step with bias correction. Weight decay is decoupled: lr*wd*theta
/// is subtracted alongside the adaptive update. `step` counts from 1.
template <typename T>
void adam_step(ParamStore<T>& store, const AdamOptions& o, std::size_t step) {
    if (step == 0) throw std::invalid_argument("adam_step: step counter starts at 1");
    const double c1 = 1.0 - std::pow(o.beta1, double(step));
    const double c2 = 1.0 - std::pow(o.beta2, double(step));
    for (auto& p : store.params()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            const double m = o.beta1 * double(p.m[i]) + (1.0 - o.beta1) * g;
            const double v = o.beta2 * double(p.v[i]) + (1.0 - o.beta2) * g * g;
            p.m[i] = static_cast<T>(m);
            p.v[i] = static_cast<T>(v);
            const double theta = p.value[i];
            const double update = o.learning_rate * (m / c1) / (std::sqrt(v / c2) + o.eps);
            p.value[i] = static_cast<T>(theta - update - o.learning_rate * o.weight_decay * theta);
        }
    }
}

/// Argmax class per row; ties go to the lowest class index.
template <typename T>
std::vector<std::uint32_t> predict(const Matrix<T>& logits) {
    std::vector<std::uint32_t> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < r.size(); ++j) {
            if (r[j] > r[best]) best = j;
        }
        out[i] = static_cast<std::uint32_t>(best);
    }
    return out;
}

/// Fraction of masked nodes whose argmax equals the label.
template <typename T>
double evaluate(const Matrix<T>& logits, const LabelVector& y, const std::vector<std::size_t>& mask) {
    if (mask.empty()) throw std::invalid_argument("evaluate: empty mask");
    const auto pred = predict(logits);
    std::size_t hit = 0;
    for (auto i : mask) hit += (pred[i] == y[i]);
    return double(hit) / double(mask.size());
}

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    double train_acc = 0;
    double val_loss = 0;
    double val_acc = 0;
    double test_acc = 0;
};

struct TrainReport {
    std::string model;
    std::uint64_t seed = 0;
    std::size_t split = 0;
    std::vector<EpochRecord> epochs;
    std::size_t selected_epoch = 0;
    double val_acc = 0;
    double val_loss = 0;
    double test_acc = 0;
    double wall_time_s = 0;
    std::optional<AttentionDiagnostics> attention;  // SADE models, at the selected epoch
    nlohmann::json config;
};

/// Extra outputs a caller may want besides the report.
template <typename T>
struct TrainArtifacts {
    Matrix<T> feature_embedding;   // H_f^(L) at the selected epoch (empty if path off)
    Matrix<T> topology_embedding;  // H_t^(L)
    NamedBlobs parameters;         // parameters at the selected epoch
};

/// Called after gradients are collected and before the optimizer step.
template <typename T>
using GradientHook = std::function<void(std::size_t epoch, bool refreshed, const ParamStore<T>&)>;

/// Full-graph training. Attention is recomputed at epoch 1 and whenever
/// epoch % U == 0; in between it is a constant, so W_Q and W_K receive no
/// gradient. Model selection: highest validation accuracy, then lowest
/// validation loss, then earliest epoch.
template <typename T>
TrainReport train(Model<T>& model, const GraphInputs<T>& in, const LabelVector& y, const Split& split,
                  const TrainConfig& cfg, TrainArtifacts<T>* artifacts = nullptr,
                  const GradientHook<T>& hook = {}) {
    cfg.validate();
    if (split.train.empty() || split.val.empty() || split.test.empty()) {
        throw std::invalid_argument("train: split has an empty train/val/test set");
    }
    validate_split(split, in.num_nodes());
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
    auto& store = model.params();
    const AdamOptions adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};
    auto* sade = dynamic_cast<SadeModel<T>*>(&model);

    TrainReport report;
    report.model = model.name();
    report.seed = cfg.seed;
    bool have_best = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const bool refresh = model.uses_attention() && (epoch == 1 || epoch % cfg.update_interval == 0);
        store.zero_grad();
        EpochRecord rec;
        rec.epoch = epoch;
        {
            ad::Tape<T> tape;
            ParamBinder<T> bind(store, tape);
            ForwardOptions opts{true, refresh || !model.uses_attention(), &rng};
            auto fw = model.forward(tape, bind, in, opts);
            auto loss = ad::cross_entropy(tape, fw.logits, y, split.train);
            rec.train_loss = double(tape.value(loss)(0, 0));
            if (!std::isfinite(rec.train_loss)) {
                throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            }
            tape.backward(loss);
            bind.collect();
        }
        if (hook) hook(epoch, refresh, store);
        adam_step(store, adam, epoch);

        ad::Tape<T> tape;
        ParamBinder<T> bind(store, tape);
        auto fw = model.forward(tape, bind, in, ForwardOptions{false, !model.uses_attention(), nullptr});
        rec.val_loss = double(tape.value(ad::cross_entropy(tape, fw.logits, y, split.val))(0, 0));
        const auto& logits = tape.value(fw.logits);
        if (!std::isfinite(rec.val_loss)) {
            throw DivergenceError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        rec.train_acc = evaluate(logits, y, split.train);
        rec.val_acc = evaluate(logits, y, split.val);
        rec.test_acc = evaluate(logits, y, split.test);
        report.epochs.push_back(rec);

        const bool better = !have_best || rec.val_acc > report.val_acc ||
                            (rec.val_acc == report.val_acc && rec.val_loss < report.val_loss);
        if (better) {
            have_best = true;
            report.selected_epoch = epoch;
            report.val_acc = rec.val_acc;
            report.val_loss = rec.val_loss;
            report.test_acc = rec.test_acc;
            if (sade) report.attention = sade->diagnostics();
            if (artifacts) {
                artifacts->feature_embedding =
                    fw.feature_embedding.valid() ? tape.value(fw.feature_embedding) : Matrix<T>();
                artifacts->topology_embedding =
                    fw.topology_embedding.valid() ? tape.value(fw.topology_embedding) : Matrix<T>();
                artifacts->parameters = to_blobs(store);
            }
        }
    }
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

struct RunStats {
    double mean = 0;
    double stddev = 0;
    std::size_t count = 0;
};

/// Mean and sample (n-1) standard deviation; a single value has stddev 0.
inline RunStats aggregate_runs(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("aggregate_runs: no runs");
    RunStats s;
    s.count = values.size();
    for (double v : values) s.mean += v;
    s.mean /= double(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / double(values.size() - 1));
    }
    return s;
}

inline RunStats aggregate_runs(const std::vector<TrainReport>& reports) {
    std::vector<double> acc;
    for (const auto& r : reports) acc.push_back(r.test_acc);
    return aggregate_runs(acc);
}

inline nlohmann::json to_json(const AttentionDiagnostics& d) {
    return nlohmann::json{{"feature", d.feature_asymmetry},
                          {"topology", d.topology_asymmetry},
                          {"feature_first_layer", d.feature_first_layer},
                          {"topology_first_layer", d.topology_first_layer},
                          {"mean", d.mean}};
}

/// Report as JSON. Leave out timing when the file must be reproducible.
inline nlohmann::json to_json(const TrainReport& r, bool with_curves = true, bool with_timing = true) {
    nlohmann::json j{{"model", r.model},       {"seed", r.seed},       {"split", r.split},
                     {"selected_epoch", r.selected_epoch}, {"val_acc", r.val_acc}, {"val_loss", r.val_loss},
                     {"test_acc", r.test_acc}, {"config", r.config}};
    if (with_timing) j["wall_time_s"] = r.wall_time_s;
    if (r.attention) j["graph_asymmetry"] = to_json(*r.attention);
    if (with_curves) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& e : r.epochs) {
            curve.push_back({{"epoch", e.epoch},
                             {"train_loss", e.train_loss},
                             {"train_acc", e.train_acc},
                             {"val_loss", e.val_loss},
                             {"val_acc", e.val_acc},
                             {"test_acc", e.test_acc}});
        }
        j["epochs"] = std::move(curve);
    }
    return j;
}

/// Per-epoch curve CSV: epoch,train_loss,val_loss,val_acc,test_acc
inline void write_curve_csv(std::ostream& os, const TrainReport& r) {
    os << "epoch,train_loss,val_loss,val_acc,test_acc\n";
    os.precision(10);
    for (const auto& e : r.epochs) {
        os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_acc << ',' << e.test_acc << '\n';
    }
}

}  // namespace sade
