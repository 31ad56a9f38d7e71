#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sade/attention.hpp"
#include "sade/autodiff.hpp"
#include "sade/config.hpp"
#include "sade/dataset.hpp"
#include "sade/graph.hpp"
#include "sade/metrics.hpp"
#include "sade/params.hpp"

namespace sade {

/// Graph-derived tensors shared by every model and every epoch.
template <typename T>
struct GraphInputs {
    Graph graph;                   // propagation graph (self-loops added when configured)
    NormalizedAdjacency<T> adj;    // D^-1 A over `graph`
    Graph topology;                // raw adjacency whose rows feed the topology path and LINK
    Matrix<T> features;

    [[nodiscard]] std::size_t num_nodes() const { return topology.num_nodes(); }
};

template <typename T>
GraphInputs<T> make_inputs(const Graph& g, const Matrix<T>& features, bool self_loops) {
    if (features.rows() != g.num_nodes()) throw std::invalid_argument("make_inputs: feature rows != node count");
    GraphInputs<T> in;
    in.graph = self_loops ? with_self_loops(g) : g;
    in.adj = row_normalize<T>(in.graph);
    in.topology = g;
    in.features = features;
    return in;
}

struct ForwardOptions {
    bool train = false;
    bool refresh_attention = true;
    std::mt19937_64* rng = nullptr;  // required when train && dropout > 0
};

template <typename T>
struct ForwardResult {
    ad::Var logits;
    ad::Var feature_embedding;   // H_f^(L), invalid when the path is off
    ad::Var topology_embedding;  // H_t^(L)
};

/// Runtime-polymorphic model so the harness can pick baselines by name.
template <typename T>
class Model {
public:
    virtual ~Model() = default;
    virtual ParamStore<T>& params() = 0;
    virtual ForwardResult<T> forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in,
                                     const ForwardOptions& opts) = 0;
    [[nodiscard]] virtual bool uses_attention() const { return false; }
    [[nodiscard]] virtual std::string name() const = 0;
};

namespace detail {

inline std::uint64_t param_seed(std::uint64_t base, std::size_t index) {
    // splitmix64 step so neighbouring parameters get unrelated streams
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename T>
ad::Var ones_column(ad::Tape<T>& tape, std::size_t rows) {
    return tape.constant(Matrix<T>(rows, 1, T(1)));
}

}  // namespace detail

/// A layer input is either a dense matrix or the binary adjacency (topology
/// path, first layer). Projections against the adjacency run as sparse
/// products so the N x N matrix is never formed.
template <typename T>
struct LayerInput {
    ad::Var dense;
    const Graph* adjacency = nullptr;
    ad::Var adjacency_ones;  // E x 1 of ones for the binary adjacency

    [[nodiscard]] bool is_sparse() const { return adjacency != nullptr; }
};

template <typename T>
ad::Var project(ad::Tape<T>& tape, const LayerInput<T>& in, ad::Var weight) {
    if (in.is_sparse()) return ad::spmm(tape, *in.adjacency, in.adjacency_ones, weight);
    return ad::matmul(tape, in.dense, weight);
}

/// Per-node mixing weights for two branches.
template <typename T>
struct ChannelGates {
    ad::Var a;
    ad::Var b;
};

/// type1: softmax(sigmoid(a G_a), sigmoid(b G_b)); type2: softmax(a G_a, b G_b);
/// type3: both gates are 1. The two-way softmax is sigmoid(s_a - s_b) and its
/// complement.
template <typename T>
ChannelGates<T> compute_gates(ad::Tape<T>& tape, ad::Var branch_a, ad::Var branch_b, ad::Var gate_a,
                              ad::Var gate_b, CombineType kind) {
    require_same_shape(tape.value(branch_a), tape.value(branch_b), "compute_gates");
    const std::size_t n = tape.value(branch_a).rows();
    if (kind == CombineType::type3) {
        auto one = detail::ones_column(tape, n);
        return {one, one};
    }
    auto sa = ad::matmul(tape, branch_a, gate_a);
    auto sb = ad::matmul(tape, branch_b, gate_b);
    if (kind == CombineType::type1) {
        sa = ad::sigmoid(tape, sa);
        sb = ad::sigmoid(tape, sb);
    }
    auto ca = ad::sigmoid(tape, ad::sub(tape, sa, sb));
    auto cb = ad::affine(tape, ca, T(-1), T(1));
    return {ca, cb};
}

/// Parameter names of one SAGC layer.
struct LayerParams {
    std::string w_q, w_k, w_v, w_i, g_v, g_i, b_i;

    static LayerParams named(const std::string& path, std::size_t layer) {
        const std::string p = path + "." + std::to_string(layer) + ".";
        return {p + "W_Q", p + "W_K", p + "W_V", p + "W_I", p + "G_V", p + "G_I", p + "b_I"};
    }
};

/// Attention produced at one layer of one path during the last refresh.
template <typename T>
struct LayerAttention {
    EdgeAttention<T> raw;
    EdgeAttention<T> used;        // scaled, or raw when scaling is ablated
    EdgeAttention<T> reweighted;  // used * normalized adjacency
};

struct SagcSettings {
    double alpha_v = 1.0;
    double alpha_i = 1.0;
    CombineType combine = CombineType::type1;
    bool scaling = true;
    bool symmetric = false;
    bool non_linear = false;
    bool bias = false;
};

/// One self-attention graph convolution layer.
///
/// On refresh: Q = softmax(H W_Q), K = softmax(H W_K), R = <Q_src, K_dst> per
/// edge, R_hat = 2R - 1, A_l = R_hat * A_norm. Otherwise A_l comes from
/// `cached` as a constant. Output:
///   alpha_V c_V ReLU(A_l H W_V) + alpha_I c_I (H W_I)
/// with (c_V, c_I) from compute_gates over the two branch outputs.
template <typename T>
ad::Var sagc_forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const LayerInput<T>& h, const GraphInputs<T>& in,
                     const LayerParams& names, const SagcSettings& s, LayerAttention<T>& cached, bool refresh) {
    const Graph& g = in.graph;
    ad::Var a_l;
    if (refresh) {
        auto q = ad::row_softmax(tape, project(tape, h, bind(names.w_q)));
        auto k = s.symmetric ? q : ad::row_softmax(tape, project(tape, h, bind(names.w_k)));
        auto r = ad::edge_dot(tape, g, q, k);
        auto used = s.scaling ? ad::affine(tape, r, T(2), T(-1)) : r;
        auto adj = tape.constant(Matrix<T>(g.num_edges(), 1, in.adj.weights));
        a_l = ad::hadamard(tape, used, adj);
        cached.raw = EdgeAttention<T>{g, tape.value(r).data(), AttentionStage::raw};
        cached.used = EdgeAttention<T>{g, tape.value(used).data(),
                                       s.scaling ? AttentionStage::scaled : AttentionStage::raw};
        cached.reweighted = EdgeAttention<T>{g, tape.value(a_l).data(), AttentionStage::reweighted};
    } else {
        if (cached.reweighted.values.size() != g.num_edges()) {
            throw std::logic_error("sagc_forward: no cached attention; refresh first");
        }
        a_l = tape.constant(Matrix<T>(g.num_edges(), 1, cached.reweighted.values));
    }
    auto value = ad::relu(tape, ad::spmm(tape, g, a_l, project(tape, h, bind(names.w_v))));
    auto resid = project(tape, h, bind(names.w_i));
    if (s.bias) resid = ad::add_row_bias(tape, resid, bind(names.b_i));
    if (s.non_linear) resid = ad::relu(tape, resid);
    auto gates = compute_gates(tape, value, resid, bind(names.g_v), bind(names.g_i), s.combine);
    auto v_term = ad::affine(tape, ad::scale_rows(tape, gates.a, value), static_cast<T>(s.alpha_v));
    auto i_term = ad::affine(tape, ad::scale_rows(tape, gates.b, resid), static_cast<T>(s.alpha_i));
    return ad::add(tape, v_term, i_term);
}

/// Per-path, per-layer asymmetry of the attention actually used.
struct AttentionDiagnostics {
    std::vector<double> feature_asymmetry;
    std::vector<double> topology_asymmetry;
    double feature_first_layer = 0.0;
    double topology_first_layer = 0.0;
    double mean = 0.0;
};

/// Dual-path self-attention model: a feature path over X and a topology path
/// over adjacency rows, each a stack of SAGC layers, combined at the output.
template <typename T>
class SadeModel final : public Model<T> {
public:
    SadeModel(const ModelConfig& cfg, std::size_t num_features, std::size_t num_nodes, std::size_t num_classes,
              std::uint64_t seed)
        : cfg_(cfg), num_classes_(num_classes) {
        cfg_.validate();
        std::size_t counter = 0;
        auto init = [&](const std::string& name, std::size_t r, std::size_t c) {
            params_.add(name, glorot_init<T>(r, c, detail::param_seed(seed, counter++)));
        };
        auto build_path = [&](const std::string& path, std::size_t in_dim) {
            std::size_t d_in = in_dim;
            for (std::size_t l = 0; l < cfg_.layers; ++l) {
                const std::size_t d_out = (l + 1 == cfg_.layers) ? num_classes : cfg_.hidden;
                const std::size_t d_key = cfg_.key_dim ? cfg_.key_dim : d_out;
                const auto n = LayerParams::named(path, l);
                init(n.w_q, d_in, d_key);
                init(n.w_k, d_in, d_key);
                init(n.w_v, d_in, d_out);
                init(n.w_i, d_in, d_out);
                init(n.g_v, d_out, 1);
                init(n.g_i, d_out, 1);
                if (cfg_.bias) params_.add(n.b_i, Matrix<T>(1, d_out));
                d_in = d_out;
            }
        };
        if (cfg_.feature_path_on()) build_path("f", num_features);
        if (cfg_.topology_path_on()) build_path("t", num_nodes);
        if (both_paths()) {
            init("out.G_f", num_classes, 1);
            init("out.G_t", num_classes, 1);
        }
        feature_att_.resize(cfg_.layers);
        topology_att_.resize(cfg_.layers);
    }

    ParamStore<T>& params() override { return params_; }
    const ParamStore<T>& params() const { return params_; }
    [[nodiscard]] bool uses_attention() const override { return true; }
    [[nodiscard]] std::string name() const override { return "sade"; }
    [[nodiscard]] const ModelConfig& config() const { return cfg_; }

    ForwardResult<T> forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in,
                             const ForwardOptions& opts) override {
        if (in.features.cols() == 0 && cfg_.feature_path_on()) throw std::invalid_argument("sade: empty features");
        ForwardResult<T> out;
        if (cfg_.feature_path_on()) {
            LayerInput<T> x{tape.constant(in.features)};
            out.feature_embedding = run_path(tape, bind, in, opts, "f", x, feature_att_, !cfg_.no_feature_scaling);
        }
        if (cfg_.topology_path_on()) {
            LayerInput<T> a;
            a.adjacency = &in.topology;
            a.adjacency_ones = detail::ones_column(tape, in.topology.num_edges());
            out.topology_embedding = run_path(tape, bind, in, opts, "t", a, topology_att_, !cfg_.no_topology_scaling);
        }
        if (both_paths()) {
            auto gates = compute_gates(tape, out.feature_embedding, out.topology_embedding, bind("out.G_f"),
                                       bind("out.G_t"), cfg_.combine_ft);
            auto f = ad::affine(tape, ad::scale_rows(tape, gates.a, out.feature_embedding), T(cfg_.alpha_f));
            auto t = ad::affine(tape, ad::scale_rows(tape, gates.b, out.topology_embedding), T(cfg_.alpha_t));
            out.logits = ad::add(tape, f, t);
        } else if (cfg_.feature_path_on()) {
            out.logits = ad::affine(tape, out.feature_embedding, T(cfg_.alpha_f));
        } else {
            out.logits = ad::affine(tape, out.topology_embedding, T(cfg_.alpha_t));
        }
        return out;
    }

    [[nodiscard]] const std::vector<LayerAttention<T>>& feature_attention() const { return feature_att_; }
    [[nodiscard]] const std::vector<LayerAttention<T>>& topology_attention() const { return topology_att_; }

    [[nodiscard]] AttentionDiagnostics diagnostics() const {
        AttentionDiagnostics d;
        auto collect = [](const std::vector<LayerAttention<T>>& layers, std::vector<double>& out) {
            for (const auto& la : layers) {
                if (la.used.values.size() == la.used.graph.num_edges() && !la.used.values.empty()) {
                    out.push_back(graph_asymmetry(la.used));
                }
            }
        };
        if (cfg_.feature_path_on()) collect(feature_att_, d.feature_asymmetry);
        if (cfg_.topology_path_on()) collect(topology_att_, d.topology_asymmetry);
        std::vector<double> firsts;
        if (!d.feature_asymmetry.empty()) {
            d.feature_first_layer = d.feature_asymmetry.front();
            firsts.push_back(d.feature_first_layer);
        }
        if (!d.topology_asymmetry.empty()) {
            d.topology_first_layer = d.topology_asymmetry.front();
            firsts.push_back(d.topology_first_layer);
        }
        for (double v : firsts) d.mean += v / double(firsts.size());
        return d;
    }

private:
    [[nodiscard]] bool both_paths() const { return cfg_.feature_path_on() && cfg_.topology_path_on(); }

    ad::Var run_path(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in, const ForwardOptions& opts,
                     const std::string& path, LayerInput<T> h, std::vector<LayerAttention<T>>& cache, bool scaling) {
        SagcSettings s{cfg_.alpha_v, cfg_.alpha_i, cfg_.combine_vr, scaling,
                       cfg_.symmetric_attention, cfg_.non_linear, cfg_.bias};
        ad::Var out;
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            if (opts.train && cfg_.dropout > 0.0) {
                if (!opts.rng) throw std::invalid_argument("sade: dropout in train mode needs an rng");
                // On the adjacency input this drops stored entries of A.
                if (h.is_sparse()) {
                    h.adjacency_ones = ad::dropout(tape, h.adjacency_ones, cfg_.dropout, true, *opts.rng);
                } else {
                    h.dense = ad::dropout(tape, h.dense, cfg_.dropout, true, *opts.rng);
                }
            }
            out = sagc_forward(tape, bind, h, in, LayerParams::named(path, l), s, cache[l], opts.refresh_attention);
            h = LayerInput<T>{out};
        }
        return out;
    }

    ModelConfig cfg_;
    std::size_t num_classes_;
    ParamStore<T> params_;
    std::vector<LayerAttention<T>> feature_att_;
    std::vector<LayerAttention<T>> topology_att_;
};

// ---------------------------------------------------------------------------
// Baselines

template <typename T>
ad::Var maybe_dropout(ad::Tape<T>& tape, ad::Var v, double p, const ForwardOptions& opts) {
    if (!opts.train || p <= 0.0) return v;
    if (!opts.rng) throw std::invalid_argument("dropout in train mode needs an rng");
    return ad::dropout(tape, v, p, true, *opts.rng);
}

/// Two-layer perceptron on X only.
template <typename T>
class MlpModel final : public Model<T> {
public:
    MlpModel(const ModelConfig& cfg, std::size_t num_features, std::size_t num_classes, std::uint64_t seed)
        : dropout_(cfg.dropout) {
        params_.add("mlp.W1", glorot_init<T>(num_features, cfg.hidden, detail::param_seed(seed, 0)));
        params_.add("mlp.b1", Matrix<T>(1, cfg.hidden));
        params_.add("mlp.W2", glorot_init<T>(cfg.hidden, num_classes, detail::param_seed(seed, 1)));
        params_.add("mlp.b2", Matrix<T>(1, num_classes));
    }
    ParamStore<T>& params() override { return params_; }
    [[nodiscard]] std::string name() const override { return "mlp"; }

    ForwardResult<T> forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in,
                             const ForwardOptions& opts) override {
        auto x = maybe_dropout(tape, tape.constant(in.features), dropout_, opts);
        auto h = ad::relu(tape, ad::add_row_bias(tape, ad::matmul(tape, x, bind("mlp.W1")), bind("mlp.b1")));
        h = maybe_dropout(tape, h, dropout_, opts);
        ForwardResult<T> out;
        out.logits = ad::add_row_bias(tape, ad::matmul(tape, h, bind("mlp.W2")), bind("mlp.b2"));
        return out;
    }

private:
    double dropout_;
    ParamStore<T> params_;
};

/// Linear classifier on raw adjacency rows: logits = A W + b.
template <typename T>
class LinkModel final : public Model<T> {
public:
    LinkModel(std::size_t num_nodes, std::size_t num_classes, std::uint64_t seed) {
        params_.add("link.W", glorot_init<T>(num_nodes, num_classes, detail::param_seed(seed, 0)));
        params_.add("link.b", Matrix<T>(1, num_classes));
    }
    ParamStore<T>& params() override { return params_; }
    [[nodiscard]] std::string name() const override { return "link"; }

    ForwardResult<T> forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in,
                             const ForwardOptions&) override {
        auto ones = detail::ones_column(tape, in.topology.num_edges());
        ForwardResult<T> out;
        out.logits = ad::add_row_bias(tape, ad::spmm(tape, in.topology, ones, bind("link.W")), bind("link.b"));
        return out;
    }

private:
    ParamStore<T> params_;
};

/// Two-layer GCN: H1 = ReLU(A_norm X W1), logits = A_norm H1 W2.
template <typename T>
class GcnModel final : public Model<T> {
public:
    GcnModel(const ModelConfig& cfg, std::size_t num_features, std::size_t num_classes, std::uint64_t seed)
        : dropout_(cfg.dropout) {
        params_.add("gcn.W1", glorot_init<T>(num_features, cfg.hidden, detail::param_seed(seed, 0)));
        params_.add("gcn.W2", glorot_init<T>(cfg.hidden, num_classes, detail::param_seed(seed, 1)));
    }
    ParamStore<T>& params() override { return params_; }
    [[nodiscard]] std::string name() const override { return "gcn"; }

    ForwardResult<T> forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in,
                             const ForwardOptions& opts) override {
        auto w = tape.constant(Matrix<T>(in.graph.num_edges(), 1, in.adj.weights));
        auto x = maybe_dropout(tape, tape.constant(in.features), dropout_, opts);
        auto h = ad::relu(tape, ad::spmm(tape, in.graph, w, ad::matmul(tape, x, bind("gcn.W1"))));
        h = maybe_dropout(tape, h, dropout_, opts);
        ForwardResult<T> out;
        out.logits = ad::spmm(tape, in.graph, w, ad::matmul(tape, h, bind("gcn.W2")));
        return out;
    }

private:
    double dropout_;
    ParamStore<T> params_;
};

/// LINKX-style analog: an MLP branch on X and a linear branch on adjacency
/// rows, concatenated (realized as a sum of two output projections).
template <typename T>
class LinkxModel final : public Model<T> {
public:
    LinkxModel(const ModelConfig& cfg, std::size_t num_features, std::size_t num_nodes, std::size_t num_classes,
               std::uint64_t seed)
        : dropout_(cfg.dropout) {
        params_.add("linkx.W_x", glorot_init<T>(num_features, cfg.hidden, detail::param_seed(seed, 0)));
        params_.add("linkx.b_x", Matrix<T>(1, cfg.hidden));
        params_.add("linkx.W_a", glorot_init<T>(num_nodes, cfg.hidden, detail::param_seed(seed, 1)));
        params_.add("linkx.b_a", Matrix<T>(1, cfg.hidden));
        params_.add("linkx.W_ox", glorot_init<T>(cfg.hidden, num_classes, detail::param_seed(seed, 2)));
        params_.add("linkx.W_oa", glorot_init<T>(cfg.hidden, num_classes, detail::param_seed(seed, 3)));
        params_.add("linkx.b_o", Matrix<T>(1, num_classes));
    }
    ParamStore<T>& params() override { return params_; }
    [[nodiscard]] std::string name() const override { return "linkx"; }

    ForwardResult<T> forward(ad::Tape<T>& tape, ParamBinder<T>& bind, const GraphInputs<T>& in,
                             const ForwardOptions& opts) override {
        auto x = maybe_dropout(tape, tape.constant(in.features), dropout_, opts);
        auto hx = ad::relu(tape, ad::add_row_bias(tape, ad::matmul(tape, x, bind("linkx.W_x")), bind("linkx.b_x")));
        auto ones = detail::ones_column(tape, in.topology.num_edges());
        auto ha = ad::relu(
            tape, ad::add_row_bias(tape, ad::spmm(tape, in.topology, ones, bind("linkx.W_a")), bind("linkx.b_a")));
        hx = maybe_dropout(tape, hx, dropout_, opts);
        ha = maybe_dropout(tape, ha, dropout_, opts);
        auto logits = ad::add(tape, ad::matmul(tape, hx, bind("linkx.W_ox")), ad::matmul(tape, ha, bind("linkx.W_oa")));
        ForwardResult<T> out;
        out.logits = ad::add_row_bias(tape, logits, bind("linkx.b_o"));
        return out;
    }

private:
    double dropout_;
    ParamStore<T> params_;
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& cfg, std::size_t num_features, std::size_t num_nodes,
                                     std::size_t num_classes, std::uint64_t seed) {
    cfg.validate();
    switch (cfg.kind) {
        case ModelKind::sade: return std::make_unique<SadeModel<T>>(cfg, num_features, num_nodes, num_classes, seed);
        case ModelKind::mlp: return std::make_unique<MlpModel<T>>(cfg, num_features, num_classes, seed);
        case ModelKind::link: return std::make_unique<LinkModel<T>>(num_nodes, num_classes, seed);
        case ModelKind::gcn: return std::make_unique<GcnModel<T>>(cfg, num_features, num_classes, seed);
        case ModelKind::linkx:
            return std::make_unique<LinkxModel<T>>(cfg, num_features, num_nodes, num_classes, seed);
    }
    throw ConfigError("unknown model kind");
}

}  // namespace sade
