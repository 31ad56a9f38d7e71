#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sade/dataset.hpp"
#include "sade/graph.hpp"
#include "sade/matrix.hpp"

namespace sade {

struct SyntheticSpec {
    std::size_t num_nodes = 1000;
    std::size_t num_classes = 5;
    double avg_degree = 10.0;
    double edge_homophily = 0.5;
    double feature_signal = 1.0;
    std::size_t feature_dim = 16;
    // Share of inter-class edges that join class c to c-1 or c+1 (mod C); the
    // rest join a uniformly chosen other class. 0 leaves adjacency rows with
    // almost no label information, 1 makes them highly informative.
    double mixing_structure = 1.0;
    std::uint64_t seed = 0;
};

/// Block-model graph with a prescribed intra-class edge fraction.
///
/// Exactly round(h * m) of the m = round(n * d / 2) undirected edges join
/// same-class endpoints; the rest join another class (see mixing_structure). The
/// realized edge homophily therefore matches the target up to rounding.
/// Features are feature_signal * mu_class + N(0, I), with class means drawn
/// from N(0, I).
template <typename T>
Dataset<T> generate_synthetic(const SyntheticSpec& spec) {
    const std::size_t n = spec.num_nodes;
    const std::size_t c = spec.num_classes;
    if (c == 0 || n < c) throw std::invalid_argument("generate_synthetic: need at least one node per class");
    if (spec.edge_homophily < 0.0 || spec.edge_homophily > 1.0) {
        throw std::invalid_argument("generate_synthetic: edge homophily must lie in [0,1]");
    }
    if (spec.avg_degree < 0.0) throw std::invalid_argument("generate_synthetic: negative degree");
    if (spec.mixing_structure < 0.0 || spec.mixing_structure > 1.0) {
        throw std::invalid_argument("generate_synthetic: mixing structure must lie in [0,1]");
    }
    std::mt19937_64 rng(spec.seed);

    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % c);
    std::shuffle(labels.begin(), labels.end(), rng);
    std::vector<std::vector<NodeId>> members(c);
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(static_cast<NodeId>(i));

    const auto m = static_cast<std::size_t>(std::llround(double(n) * spec.avg_degree / 2.0));
    const auto m_intra = static_cast<std::size_t>(std::llround(spec.edge_homophily * double(m)));
    const std::size_t m_inter = m - m_intra;

    std::size_t max_intra = 0;
    for (const auto& mem : members) max_intra += mem.size() * (mem.size() - (mem.empty() ? 0 : 1)) / 2;
    const std::size_t max_inter = n * (n - 1) / 2 - max_intra;
    std::size_t max_cyclic = max_inter;
    if (c > 2) {
        max_cyclic = 0;
        for (std::size_t k = 0; k < c; ++k) max_cyclic += members[k].size() * members[(k + 1) % c].size();
    }
    const double cyclic_expected = spec.mixing_structure * double(m_inter);
    // Rejection sampling stalls near saturation; require headroom.
    if (2 * m_intra > max_intra || 2 * m_inter > max_inter || 2.0 * cyclic_expected > double(max_cyclic)) {
        throw std::invalid_argument("generate_synthetic: infeasible degree " + std::to_string(spec.avg_degree) +
                                    " for " + std::to_string(n) + " nodes at homophily " +
                                    std::to_string(spec.edge_homophily));
    }

    std::set<std::pair<NodeId, NodeId>> chosen;
    std::vector<Edge> pairs;
    pairs.reserve(m);
    std::uniform_int_distribution<std::size_t> pick_node(0, n - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    auto add_edges = [&](std::size_t count, bool intra) {
        std::size_t added = 0;
        while (added < count) {
            const auto u = static_cast<NodeId>(pick_node(rng));
            const auto cu = labels[u];
            std::size_t cv = cu;
            if (!intra && coin(rng) < spec.mixing_structure) {
                cv = (rng() & 1U) ? (cu + 1) % c : (cu + c - 1) % c;
            } else if (!intra) {
                std::uniform_int_distribution<std::size_t> other(0, c - 2);
                cv = other(rng);
                if (cv >= cu) ++cv;
            }
            const auto& pool = members[cv];
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            const NodeId v = pool[pick(rng)];
            if (u == v) continue;
            const auto key = std::minmax(u, v);
            if (!chosen.insert(key).second) continue;
            pairs.push_back({key.first, key.second});
            ++added;
        }
    };
    add_edges(m_intra, true);
    add_edges(m_inter, false);

    Matrix<T> means(c, spec.feature_dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : means.data()) v = static_cast<T>(normal(rng));
    Matrix<T> x(n, spec.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < spec.feature_dim; ++f) {
            x(i, f) = static_cast<T>(spec.feature_signal * double(means(labels[i], f)) + normal(rng));
        }
    }

    Dataset<T> ds;
    ds.graph = Graph(n, std::move(pairs), true);
    ds.features = std::move(x);
    ds.labels = LabelVector(std::move(labels), c);
    return ds;
}

/// x + coef * G with G standard normal per entry. coef == 0 returns x unchanged.
template <typename T>
Matrix<T> perturb_features(const Matrix<T>& x, double coef, std::uint64_t seed) {
    if (coef < 0.0) throw std::invalid_argument("perturb_features: coefficient must be >= 0");
    if (coef == 0.0) return x;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<T> out = x;
    for (auto& v : out.data()) v = static_cast<T>(double(v) + coef * normal(rng));
    return out;
}

enum class EdgeNoise { add, remove };

/// Adds or removes floor(frac * undirected_edges) undirected edges, uniformly
/// over non-edges or edges respectively. The result stays symmetric.
inline Graph perturb_edges(const Graph& g, double frac, EdgeNoise mode, std::uint64_t seed) {
    if (frac < 0.0 || frac > 0.3 + 1e-12) throw std::invalid_argument("perturb_edges: fraction must lie in [0, 0.3]");
    std::vector<Edge> undirected;
    for (const auto& e : g.edges()) {
        if (e.src <= e.dst) undirected.push_back(e);
    }
    const auto count = static_cast<std::size_t>(std::floor(frac * double(undirected.size()) + 1e-9));
    if (count == 0) return g;
    std::mt19937_64 rng(seed);
    if (mode == EdgeNoise::remove) {
        std::shuffle(undirected.begin(), undirected.end(), rng);
        undirected.resize(undirected.size() - count);
        return Graph(g.num_nodes(), std::move(undirected), true);
    }
    const std::size_t n = g.num_nodes();
    std::size_t existing = 0;
    for (const auto& e : undirected) existing += (e.src != e.dst);
    const std::size_t possible = n < 2 ? 0 : n * (n - 1) / 2;
    if (existing >= possible) throw std::invalid_argument("perturb_edges: graph is complete, cannot add edges");
    if (count > possible - existing) throw std::invalid_argument("perturb_edges: not enough non-edges to add");
    std::set<std::pair<NodeId, NodeId>> added;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (added.size() < count) {
        auto u = static_cast<NodeId>(pick(rng));
        auto v = static_cast<NodeId>(pick(rng));
        if (u == v || g.has_edge(u, v)) continue;
        added.insert(std::minmax(u, v));
    }
    for (const auto& [u, v] : added) undirected.push_back({u, v});
    return Graph(n, std::move(undirected), true);
}

}  // namespace sade
