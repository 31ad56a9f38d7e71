#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sade/matrix.hpp"

namespace sade {

using NodeId = std::uint32_t;

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    auto operator<=>(const Edge&) const = default;
};

/// Immutable directed edge list sorted by (src, dst) with CSR row offsets.
/// Undirected input is stored with both directions present, so E counts
/// directed entries. Copies share storage.
class Graph {
public:
    Graph() : Graph(0, {}, false) {}

    /// Builds a graph from raw pairs. Out-of-range indices throw; duplicates
    /// are dropped. With `symmetrize`, every (i,j) also inserts (j,i).
    Graph(std::size_t num_nodes, std::vector<Edge> pairs, bool symmetrize = true) {
        auto s = std::make_shared<Storage>();
        s->num_nodes = num_nodes;
        for (const auto& e : pairs) {
            if (e.src >= num_nodes || e.dst >= num_nodes) {
                throw std::out_of_range("graph: edge (" + std::to_string(e.src) + "," +
                                        std::to_string(e.dst) + ") index out of range for " +
                                        std::to_string(num_nodes) + " nodes");
            }
        }
        if (symmetrize) {
            const std::size_t n = pairs.size();
            pairs.reserve(2 * n);
            for (std::size_t i = 0; i < n; ++i) pairs.push_back({pairs[i].dst, pairs[i].src});
        }
        std::sort(pairs.begin(), pairs.end());
        pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
        s->edges = std::move(pairs);
        s->offsets.assign(num_nodes + 1, 0);
        for (const auto& e : s->edges) ++s->offsets[e.src + 1];
        for (std::size_t i = 0; i < num_nodes; ++i) s->offsets[i + 1] += s->offsets[i];
        storage_ = std::move(s);
    }

    [[nodiscard]] std::size_t num_nodes() const noexcept { return storage_->num_nodes; }
    [[nodiscard]] std::size_t num_edges() const noexcept { return storage_->edges.size(); }
    [[nodiscard]] std::span<const Edge> edges() const noexcept { return storage_->edges; }
    [[nodiscard]] const Edge& edge(std::size_t e) const noexcept { return storage_->edges[e]; }

    [[nodiscard]] std::size_t degree(std::size_t node) const noexcept {
        return storage_->offsets[node + 1] - storage_->offsets[node];
    }
    [[nodiscard]] std::vector<std::size_t> degrees() const {
        std::vector<std::size_t> d(num_nodes());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = degree(i);
        return d;
    }

    /// Edge index range [first, last) of edges leaving `node`.
    [[nodiscard]] std::pair<std::size_t, std::size_t> out_range(std::size_t node) const noexcept {
        return {storage_->offsets[node], storage_->offsets[node + 1]};
    }
    [[nodiscard]] std::span<const Edge> out_edges(std::size_t node) const noexcept {
        auto [b, e] = out_range(node);
        return std::span<const Edge>(storage_->edges).subspan(b, e - b);
    }

    /// Index of edge (src,dst), or npos.
    [[nodiscard]] std::size_t find(NodeId src, NodeId dst) const noexcept {
        if (src >= num_nodes()) return npos;
        auto row = out_edges(src);
        auto it = std::lower_bound(row.begin(), row.end(), Edge{src, dst});
        if (it == row.end() || it->dst != dst) return npos;
        return storage_->offsets[src] + static_cast<std::size_t>(it - row.begin());
    }
    [[nodiscard]] bool has_edge(NodeId src, NodeId dst) const noexcept {
        return find(src, dst) != npos;
    }

    [[nodiscard]] bool is_symmetric() const noexcept {
        return std::all_of(storage_->edges.begin(), storage_->edges.end(),
                           [this](const Edge& e) { return has_edge(e.dst, e.src); });
    }

    /// Same node count and identical edge list (pointer-equal storage is the fast path).
    [[nodiscard]] bool same_edges(const Graph& o) const noexcept {
        if (storage_ == o.storage_) return true;
        return num_nodes() == o.num_nodes() && storage_->edges == o.storage_->edges;
    }

    bool operator==(const Graph& o) const noexcept { return same_edges(o); }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    struct Storage {
        std::size_t num_nodes = 0;
        std::vector<Edge> edges;
        std::vector<std::size_t> offsets;
    };
    std::shared_ptr<const Storage> storage_;
};

/// Per-edge weights of D^-1 A aligned with the graph's edge list.
template <typename T>
struct NormalizedAdjacency {
    Graph graph;
    std::vector<T> weights;
};

/// Row normalization: each edge leaving node i gets weight 1/deg(i).
/// Isolated nodes simply own no edges.
template <typename T>
NormalizedAdjacency<T> row_normalize(const Graph& g) {
    NormalizedAdjacency<T> adj{g, std::vector<T>(g.num_edges())};
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        auto [b, e] = g.out_range(i);
        if (b == e) continue;
        const T w = T(1) / static_cast<T>(e - b);
        for (std::size_t k = b; k < e; ++k) adj.weights[k] = w;
    }
    return adj;
}

/// Copy of `g` with a self-loop on every node.
inline Graph with_self_loops(const Graph& g) {
    std::vector<Edge> pairs(g.edges().begin(), g.edges().end());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        pairs.push_back({static_cast<NodeId>(i), static_cast<NodeId>(i)});
    }
    return Graph(g.num_nodes(), std::move(pairs), false);
}

/// Undirected edge count of a symmetrized graph (self-loops counted once).
inline std::size_t undirected_edge_count(const Graph& g) {
    std::size_t loops = 0;
    for (const auto& e : g.edges()) loops += (e.src == e.dst);
    return (g.num_edges() - loops) / 2 + loops;
}

/// out[i] = sum over edges e=(i,j) of w_e * h[j], visiting edges in list order.
template <typename T>
Matrix<T> spmm(const Graph& g, std::span<const T> weights, const Matrix<T>& h) {
    if (weights.size() != g.num_edges()) throw std::invalid_argument("spmm: need one weight per edge");
    if (h.rows() != g.num_nodes()) {
        throw std::invalid_argument("spmm: h has " + std::to_string(h.rows()) + " rows, graph has " +
                                    std::to_string(g.num_nodes()) + " nodes");
    }
    const std::size_t cols = h.cols();
    Matrix<T> out(g.num_nodes(), cols);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto& ed = g.edge(e);
        const T w = weights[e];
        const T* src = h.data().data() + std::size_t(ed.dst) * cols;
        T* dst = out.data().data() + std::size_t(ed.src) * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
    }
    return out;
}

/// Dense N x N materialization of edge weights. Test and oracle use only.
template <typename T>
Matrix<T> dense_from_edges(const Graph& g, std::span<const T> weights) {
    Matrix<T> m(g.num_nodes(), g.num_nodes());
    for (std::size_t e = 0; e < g.num_edges(); ++e) m(g.edge(e).src, g.edge(e).dst) = weights[e];
    return m;
}

struct LabelVector {
    std::vector<std::uint32_t> labels;
    std::size_t num_classes = 0;

    LabelVector() = default;
    LabelVector(std::vector<std::uint32_t> y, std::size_t classes)
        : labels(std::move(y)), num_classes(classes) {
        for (auto l : labels) {
            if (l >= num_classes) {
                throw std::out_of_range("labels: class " + std::to_string(l) +
                                        " >= num_classes " + std::to_string(num_classes));
            }
        }
    }
    /// Infers C as max label + 1.
    static LabelVector infer(std::vector<std::uint32_t> y) {
        std::size_t c = 0;
        for (auto l : y) c = std::max<std::size_t>(c, l + 1);
        return LabelVector(std::move(y), c);
    }

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    std::uint32_t operator[](std::size_t i) const noexcept { return labels[i]; }
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

using SplitSet = std::vector<Split>;

/// Throws unless the three index sets are disjoint and in range.
inline void validate_split(const Split& s, std::size_t n) {
    std::vector<char> seen(n, 0);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (auto i : *part) {
            if (i >= n) throw std::out_of_range("split: index " + std::to_string(i) + " out of range");
            if (seen[i]) throw std::invalid_argument("split: index " + std::to_string(i) + " appears twice");
            seen[i] = 1;
        }
    }
}

}  // namespace sade
