#include <gtest/gtest.h>

#include "sade/gradcheck.hpp"
#include "test_util.hpp"

using namespace sade;
using LD = long double;

namespace {

Dataset<double> small_instance(std::uint64_t seed = 1, std::size_t n = 12) {
    SyntheticSpec sp;
    sp.num_nodes = n;
    sp.num_classes = 3;
    sp.avg_degree = 3;
    sp.edge_homophily = 0.3;
    sp.feature_dim = 5;
    sp.mixing_structure = 0.5;
    sp.seed = seed;
    return generate_synthetic<double>(sp);
}

ModelConfig small_sade() {
    ModelConfig mc;
    mc.layers = 2;
    mc.hidden = 8;
    mc.dropout = 0.0;
    return mc;
}

std::vector<std::size_t> all_nodes(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// End-to-end check of every parameter. The long-double twin shares parameter
// names; its values come from the widened store inside gradient_check_params.
GradCheckResult check_model(const ModelConfig& mc, const Dataset<double>& ds, std::uint64_t seed, double jitter) {
    const auto f = ds.features.cols(), n = ds.graph.num_nodes(), c = ds.labels.num_classes;
    auto md = make_model<double>(mc, f, n, c, seed);
    auto ml = make_model<LD>(mc, f, n, c, seed);
    std::mt19937_64 rng(seed + 1000);
    std::normal_distribution<double> nd(0.0, jitter);
    for (auto& p : md->params().params())
        for (auto& v : p.value.data()) v += nd(rng);
    const auto in_d = make_inputs(ds.graph, ds.features, mc.self_loops);
    const auto in_l = make_inputs(ds.graph, ds.features.cast<LD>(), mc.self_loops);
    const auto mask = all_nodes(n);
    return gradient_check_params(md->params(), [&](auto& tape, auto& bind) {
        using S = typename std::remove_reference_t<decltype(tape)>::value_type;
        const ForwardOptions opts{false, true, nullptr};
        if constexpr (std::is_same_v<S, double>) {
            return ad::cross_entropy(tape, md->forward(tape, bind, in_d, opts).logits, ds.labels, mask);
        } else {
            return ad::cross_entropy(tape, ml->forward(tape, bind, in_l, opts).logits, ds.labels, mask);
        }
    });
}

Matrix<double> logits_of(Model<double>& m, const GraphInputs<double>& in) {
    ad::Tape<double> tape;
    ParamBinder<double> bind(m.params(), tape);
    return tape.value(m.forward(tape, bind, in, ForwardOptions{false, true, nullptr}).logits);
}

}  // namespace

TEST(SadeGradient, CombineTypesBiasNonLinear) {
    const auto ds = small_instance();
    for (int variant = 0; variant < 6; ++variant) {
        auto mc = small_sade();
        mc.bias = variant % 2;
        mc.non_linear = variant >= 2;
        mc.combine_vr = CombineType(1 + variant % 3);
        mc.combine_ft = CombineType(1 + (variant + 1) % 3);
        const auto r = check_model(mc, ds, 7 + variant, 0.5);
        EXPECT_LT(r.max_rel_error, 1e-5) << "variant " << variant << " worst " << r.worst_input << "[" << r.worst_entry
                                         << "] a=" << r.analytic << " n=" << r.numeric;
    }
}

TEST(SadeGradient, AblationsAndKeyDim) {
    const auto ds = small_instance(2);
    std::vector<ModelConfig> cfgs;
    auto base = small_sade();
    base.symmetric_attention = true;
    cfgs.push_back(base);
    base = small_sade();
    base.no_feature_scaling = base.no_topology_scaling = true;
    cfgs.push_back(base);
    base = small_sade();
    base.no_topology_path = true;
    base.key_dim = 3;
    cfgs.push_back(base);
    base = small_sade();
    base.no_feature_path = true;
    base.self_loops = true;
    cfgs.push_back(base);
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const auto r = check_model(cfgs[i], ds, 20 + i, 0.5);
        EXPECT_LT(r.max_rel_error, 1e-5) << "config " << i << " worst " << r.worst_input;
    }
}

TEST(BaselineGradient, AllKinds) {
    const auto ds = small_instance(3);
    for (auto kind : {ModelKind::mlp, ModelKind::link, ModelKind::gcn, ModelKind::linkx}) {
        ModelConfig mc;
        mc.kind = kind;
        mc.hidden = 6;
        mc.dropout = 0.0;
        const auto r = check_model(mc, ds, 5, 0.3);
        EXPECT_LT(r.max_rel_error, 1e-5) << to_string(kind) << " worst " << r.worst_input;
    }
}

TEST(Gates, EqualBranchesGiveHalf) {
    for (auto kind : {CombineType::type1, CombineType::type2}) {
        ad::Tape<double> t;
        const auto b = testutil::random_matrix(6, 4, 1);
        const auto g = testutil::random_matrix(4, 1, 2);
        auto gates = compute_gates(t, t.leaf(b), t.leaf(b), t.leaf(g), t.leaf(g), kind);
        for (std::size_t i = 0; i < 6; ++i) {
            EXPECT_DOUBLE_EQ(t.value(gates.a)(i, 0), 0.5);
            EXPECT_DOUBLE_EQ(t.value(gates.b)(i, 0), 0.5);
        }
    }
}

TEST(Gates, Type3IsOnes) {
    ad::Tape<double> t;
    auto a = t.leaf(testutil::random_matrix(5, 3, 1));
    auto b = t.leaf(testutil::random_matrix(5, 3, 2));
    auto g = t.leaf(testutil::random_matrix(3, 1, 3));
    auto gates = compute_gates(t, a, b, g, g, CombineType::type3);
    EXPECT_EQ(t.value(gates.a), Matrix<double>(5, 1, 1.0));
    EXPECT_EQ(t.value(gates.b), Matrix<double>(5, 1, 1.0));
}

TEST(Gates, Type1MatchesRecomputation) {
    const auto a = testutil::random_matrix(7, 3, 4);
    const auto b = testutil::random_matrix(7, 3, 5);
    const auto ga = testutil::random_matrix(3, 1, 6);
    const auto gb = testutil::random_matrix(3, 1, 7);
    for (auto kind : {CombineType::type1, CombineType::type2}) {
        ad::Tape<double> t;
        auto gates = compute_gates(t, t.leaf(a), t.leaf(b), t.leaf(ga), t.leaf(gb), kind);
        for (std::size_t i = 0; i < 7; ++i) {
            double sa = 0, sb = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                sa += a(i, j) * ga(j, 0);
                sb += b(i, j) * gb(j, 0);
            }
            if (kind == CombineType::type1) {
                sa = 1.0 / (1.0 + std::exp(-sa));
                sb = 1.0 / (1.0 + std::exp(-sb));
            }
            const double ca = std::exp(sa) / (std::exp(sa) + std::exp(sb));
            EXPECT_NEAR(t.value(gates.a)(i, 0), ca, 1e-14);
            EXPECT_NEAR(t.value(gates.a)(i, 0) + t.value(gates.b)(i, 0), 1.0, 1e-12);
            EXPECT_GE(t.value(gates.b)(i, 0), 0.0);
        }
    }
}

TEST(Sagc, PureResidualWhenAlphaVZero) {
    const auto ds = small_instance(4);
    const auto in = make_inputs(ds.graph, ds.features, false);
    ParamStore<double> store;
    const auto names = LayerParams::named("f", 0);
    for (const auto& [name, r, c] : std::vector<std::tuple<std::string, std::size_t, std::size_t>>{
             {names.w_q, 5, 4}, {names.w_k, 5, 4}, {names.w_v, 5, 4}, {names.w_i, 5, 4}, {names.g_v, 4, 1}, {names.g_i, 4, 1}})
        store.add(name, testutil::random_matrix(r, c, name.size() + r));
    SagcSettings s;
    s.alpha_v = 0.0;
    s.combine = CombineType::type3;
    ad::Tape<double> t;
    ParamBinder<double> bind(store, t);
    LayerAttention<double> cache;
    auto out = sagc_forward(t, bind, LayerInput<double>{t.constant(ds.features)}, in, names, s, cache, true);
    const auto expect = matmul(ds.features, store.at(names.w_i).value);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t.value(out)[i], expect[i], 1e-14);
}

TEST(Sagc, ZeroAttentionLeavesResidual) {
    const auto ds = small_instance(4);
    const auto in = make_inputs(ds.graph, ds.features, false);
    ParamStore<double> store;
    const auto names = LayerParams::named("f", 0);
    for (const auto& [name, r, c] : std::vector<std::tuple<std::string, std::size_t, std::size_t>>{
             {names.w_q, 5, 4}, {names.w_k, 5, 4}, {names.w_v, 5, 4}, {names.w_i, 5, 4}, {names.g_v, 4, 1}, {names.g_i, 4, 1}})
        store.add(name, testutil::random_matrix(r, c, 3 * r + c));
    SagcSettings s;
    s.combine = CombineType::type3;
    LayerAttention<double> cache;
    cache.reweighted = EdgeAttention<double>{in.graph, std::vector<double>(in.graph.num_edges(), 0.0),
                                             AttentionStage::reweighted};
    ad::Tape<double> t;
    ParamBinder<double> bind(store, t);
    auto out = sagc_forward(t, bind, LayerInput<double>{t.constant(ds.features)}, in, names, s, cache, false);
    const auto expect = matmul(ds.features, store.at(names.w_i).value);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t.value(out)[i], expect[i], 1e-14);
    EXPECT_FALSE(bind.is_bound(names.w_q));
}

TEST(Sagc, CachedAttentionRequiresRefresh) {
    const auto ds = small_instance(4);
    auto mc = small_sade();
    SadeModel<double> m(mc, 5, 12, 3, 1);
    const auto in = make_inputs(ds.graph, ds.features, false);
    ad::Tape<double> t;
    ParamBinder<double> bind(m.params(), t);
    EXPECT_THROW(m.forward(t, bind, in, ForwardOptions{false, false, nullptr}), std::logic_error);
}

TEST(Sade, LinearOracleForOneLayer) {
    const auto ds = small_instance(5);
    auto mc = small_sade();
    mc.layers = 1;
    mc.alpha_v = 0.0;
    mc.combine_vr = CombineType::type3;
    mc.combine_ft = CombineType::type3;
    SadeModel<double> m(mc, 5, 12, 3, 9);
    const auto in = make_inputs(ds.graph, ds.features, false);
    const auto logits = logits_of(m, in);
    const auto& wf = m.params().at("f.0.W_I").value;
    const auto& wt = m.params().at("t.0.W_I").value;
    Matrix<double> a(12, 12);
    for (const auto& e : ds.graph.edges()) a(e.src, e.dst) = 1.0;
    const auto expect = matmul(ds.features, wf);
    const auto topo = matmul(a, wt);
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(logits[i], expect[i] + topo[i], 1e-13);
}

TEST(Sade, PathIndependence) {
    const auto ds = small_instance(6);
    const auto other = small_instance(99);
    auto mc = small_sade();
    mc.no_topology_path = true;
    SadeModel<double> feat_only(mc, 5, 12, 3, 1);
    auto in = make_inputs(ds.graph, ds.features, false);
    const auto base = logits_of(feat_only, in);
    in.topology = other.graph;
    EXPECT_EQ(logits_of(feat_only, in), base);

    mc = small_sade();
    mc.no_feature_path = true;
    SadeModel<double> topo_only(mc, 5, 12, 3, 1);
    auto in2 = make_inputs(ds.graph, ds.features, false);
    const auto base2 = logits_of(topo_only, in2);
    in2.features = other.features;
    EXPECT_EQ(logits_of(topo_only, in2), base2);
}

TEST(Sade, BothPathsOffIsConfigError) {
    auto mc = small_sade();
    mc.no_feature_path = true;
    mc.alpha_t = 0.0;
    EXPECT_THROW(SadeModel<double>(mc, 5, 12, 3, 1), ConfigError);
    mc = small_sade();
    mc.alpha_v = mc.alpha_i = 0.0;
    EXPECT_THROW(SadeModel<double>(mc, 5, 12, 3, 1), ConfigError);
}

TEST(Sade, SymmetricVariantHasZeroAsymmetry) {
    const auto ds = small_instance(7, 40);
    auto mc = small_sade();
    mc.symmetric_attention = true;
    SadeModel<double> m(mc, 5, 40, 3, 3);
    logits_of(m, make_inputs(ds.graph, ds.features, false));
    const auto d = m.diagnostics();
    ASSERT_EQ(d.feature_asymmetry.size(), 2u);
    ASSERT_EQ(d.topology_asymmetry.size(), 2u);
    for (double v : d.feature_asymmetry) EXPECT_EQ(v, 0.0);
    for (double v : d.topology_asymmetry) EXPECT_EQ(v, 0.0);
}

TEST(Sade, DefaultVariantIsAsymmetric) {
    const auto ds = small_instance(7, 40);
    SadeModel<double> m(small_sade(), 5, 40, 3, 3);
    logits_of(m, make_inputs(ds.graph, ds.features, false));
    const auto d = m.diagnostics();
    EXPECT_GT(d.feature_first_layer, 1e-8);
    EXPECT_GT(d.topology_first_layer, 1e-8);
    EXPECT_NEAR(d.mean, 0.5 * (d.feature_first_layer + d.topology_first_layer), 1e-15);
}

TEST(Sade, ScalingRanges) {
    const auto ds = small_instance(8, 40);
    const auto in = make_inputs(ds.graph, ds.features, false);
    double min_scaled = 1.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto mc = small_sade();
        mc.no_feature_scaling = true;
        SadeModel<double> m(mc, 5, 40, 3, seed);
        logits_of(m, in);
        for (const auto& la : m.feature_attention()) {
            for (double v : la.used.values) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
        }
        for (const auto& la : m.topology_attention()) {
            EXPECT_EQ(la.used.stage, AttentionStage::scaled);
            for (double v : la.used.values) min_scaled = std::min(min_scaled, v);
        }
    }
    EXPECT_LT(min_scaled, 0.0);
}

TEST(Sade, DropoutNeedsRng) {
    const auto ds = small_instance(9);
    auto mc = small_sade();
    mc.dropout = 0.5;
    SadeModel<double> m(mc, 5, 12, 3, 1);
    const auto in = make_inputs(ds.graph, ds.features, false);
    ad::Tape<double> t;
    ParamBinder<double> bind(m.params(), t);
    EXPECT_THROW(m.forward(t, bind, in, ForwardOptions{true, true, nullptr}), std::invalid_argument);
}

TEST(Baselines, MlpZeroWeightsGiveLnC) {
    const auto ds = small_instance(10);
    ModelConfig mc;
    mc.kind = ModelKind::mlp;
    auto m = make_model<double>(mc, 5, 12, 3, 1);
    for (auto& p : m->params().params()) p.value.fill(0.0);
    ad::Tape<double> t;
    ParamBinder<double> bind(m->params(), t);
    auto fw = m->forward(t, bind, make_inputs(ds.graph, ds.features, false), ForwardOptions{});
    EXPECT_NEAR(t.value(ad::cross_entropy(t, fw.logits, ds.labels, all_nodes(12)))(0, 0), std::log(3.0), 1e-14);
}

TEST(Baselines, LinkOnEmptyGraphIsBias) {
    const Graph empty(4, {}, true);
    auto m = make_model<double>(ModelConfig{ModelKind::link}, 2, 4, 3, 1);
    m->params().at("link.b").value = Matrix<double>{{0.1, -0.2, 0.3}};
    const auto logits = logits_of(*m, make_inputs(empty, Matrix<double>(4, 2, 1.0), false));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(logits(i, 0), 0.1);
        EXPECT_EQ(logits(i, 1), -0.2);
        EXPECT_EQ(logits(i, 2), 0.3);
    }
}

TEST(Baselines, GcnIsolatedNodeIsZeroRow) {
    ModelConfig mc;
    mc.kind = ModelKind::gcn;
    auto m = make_model<double>(mc, 3, 1, 2, 1);
    const auto logits = logits_of(*m, make_inputs(Graph(1, {}, true), testutil::random_matrix(1, 3, 2), false));
    EXPECT_EQ(logits, Matrix<double>(1, 2));
}

TEST(Baselines, LinkMatchesDenseAdjacency) {
    const auto ds = small_instance(11);
    auto m = make_model<double>(ModelConfig{ModelKind::link}, 5, 12, 3, 4);
    const auto logits = logits_of(*m, make_inputs(ds.graph, ds.features, true));
    Matrix<double> a(12, 12);
    for (const auto& e : ds.graph.edges()) a(e.src, e.dst) = 1.0;
    const auto expect = matmul(a, m->params().at("link.W").value);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(logits[i], expect[i], 1e-14);
}

TEST(Params, ShapesFollowConfig) {
    auto mc = small_sade();
    mc.key_dim = 3;
    mc.bias = true;
    SadeModel<double> m(mc, 5, 12, 4, 1);
    EXPECT_EQ(m.params().at("f.0.W_Q").value.cols(), 3u);
    EXPECT_EQ(m.params().at("f.0.W_V").value.cols(), 8u);
    EXPECT_EQ(m.params().at("f.1.W_V").value.cols(), 4u);
    EXPECT_EQ(m.params().at("t.0.W_Q").value.rows(), 12u);
    EXPECT_EQ(m.params().at("t.1.b_I").value.cols(), 4u);
    EXPECT_EQ(m.params().at("out.G_f").value.rows(), 4u);
    EXPECT_THROW(m.params().add("f.0.W_Q", Matrix<double>(1, 1)), std::invalid_argument);
}
