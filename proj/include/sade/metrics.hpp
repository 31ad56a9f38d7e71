#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sade/attention.hpp"
#include "sade/graph.hpp"
#include "sade/matrix.hpp"

namespace sade {

/// Fraction of directed edge entries whose endpoints share a label.
inline double edge_homophily(const Graph& g, const LabelVector& y) {
    if (g.num_edges() == 0) throw std::invalid_argument("edge_homophily: empty edge list");
    if (y.size() != g.num_nodes()) throw std::invalid_argument("edge_homophily: label count != node count");
    std::size_t same = 0;
    for (const auto& e : g.edges()) same += (y[e.src] == y[e.dst]);
    return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

/// Breadth-first hop distances from `source`; unreachable nodes get npos.
inline std::vector<std::size_t> bfs_distances(const Graph& g, std::size_t source) {
    if (source >= g.num_nodes()) {
        throw std::out_of_range("bfs: node " + std::to_string(source) + " out of range");
    }
    constexpr auto unreached = Graph::npos;
    std::vector<std::size_t> dist(g.num_nodes(), unreached);
    std::deque<std::size_t> frontier{source};
    dist[source] = 0;
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop_front();
        for (const auto& e : g.out_edges(u)) {
            if (dist[e.dst] == unreached) {
                dist[e.dst] = dist[u] + 1;
                frontier.push_back(e.dst);
            }
        }
    }
    return dist;
}

/// Strict k-hop neighbours: nodes at shortest-path distance exactly k.
inline std::vector<std::size_t> k_hop_neighbors(const Graph& g, std::size_t node, std::size_t k) {
    if (k < 1) throw std::invalid_argument("k_hop_neighbors: k must be >= 1");
    const auto dist = bfs_distances(g, node);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < dist.size(); ++j) {
        if (dist[j] == k) out.push_back(j);
    }
    return out;
}

/// All ordered (node, strict k-hop neighbour) pairs, grouped by hop count
/// for k = 1..k_max. One BFS per node.
inline std::vector<std::vector<std::pair<std::size_t, std::size_t>>> k_hop_pairs(const Graph& g,
                                                                                  std::size_t k_max) {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_k(k_max + 1);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        const auto dist = bfs_distances(g, i);
        for (std::size_t j = 0; j < dist.size(); ++j) {
            if (dist[j] >= 1 && dist[j] <= k_max) by_k[dist[j]].emplace_back(i, j);
        }
    }
    return by_k;
}

/// Label agreement over ordered strict k-hop pairs. Empty when no pair exists.
inline std::optional<double> k_hop_homophily(std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                             const LabelVector& y) {
    if (pairs.empty()) return std::nullopt;
    std::size_t same = 0;
    for (auto [i, j] : pairs) same += (y[i] == y[j]);
    return static_cast<double>(same) / static_cast<double>(pairs.size());
}

inline std::optional<double> k_hop_homophily(const Graph& g, const LabelVector& y, std::size_t k) {
    if (k < 1) throw std::invalid_argument("k_hop_homophily: k must be >= 1");
    const auto pairs = k_hop_pairs(g, k);
    return k_hop_homophily(pairs[k], y);
}

/// 1 - cos(a, b). A zero-norm side counts as orthogonal (distance 1).
template <typename T>
double cosine_distance(std::span<const T> a, std::span<const T> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        dot += double(a[c]) * double(b[c]);
        na += double(a[c]) * double(a[c]);
        nb += double(b[c]) * double(b[c]);
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Mean cosine distance between embeddings of ordered strict k-hop pairs.
template <typename T>
std::optional<double> k_hop_embedding_distance(std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                               const Matrix<T>& emb) {
    if (pairs.empty()) return std::nullopt;
    double total = 0;
    for (auto [i, j] : pairs) total += cosine_distance<T>(emb.row(i), emb.row(j));
    return total / static_cast<double>(pairs.size());
}

template <typename T>
std::optional<double> k_hop_embedding_distance(const Graph& g, const Matrix<T>& emb, std::size_t k) {
    if (k < 1) throw std::invalid_argument("k_hop_embedding_distance: k must be >= 1");
    if (emb.rows() != g.num_nodes()) {
        throw std::invalid_argument("k_hop_embedding_distance: embedding rows != node count");
    }
    const auto pairs = k_hop_pairs(g, k);
    return k_hop_embedding_distance<T>(pairs[k], emb);
}

/// Mean of |r_ij - r_ji| / (|r_ij| + |r_ji|) over unordered neighbour pairs
/// {i, j}, i != j, with both directions stored. Pairs with a zero
/// denominator are skipped; returns 0 when nothing is eligible.
template <typename T>
double graph_asymmetry(const Graph& g, std::span<const T> values) {
    if (values.size() != g.num_edges()) throw std::invalid_argument("graph_asymmetry: values/edge count mismatch");
    double total = 0;
    std::size_t count = 0;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto& ed = g.edge(e);
        if (ed.src >= ed.dst) continue;
        const auto back = g.find(ed.dst, ed.src);
        if (back == Graph::npos) continue;
        const double a = values[e];
        const double b = values[back];
        const double denom = std::abs(a) + std::abs(b);
        if (denom <= 0.0) continue;
        total += std::abs(a - b) / denom;
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

template <typename T>
double graph_asymmetry(const EdgeAttention<T>& att) {
    return graph_asymmetry<T>(att.graph, std::span<const T>(att.values));
}

}  // namespace sade
