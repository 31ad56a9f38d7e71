#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sade/graph.hpp"
#include "sade/matrix.hpp"

namespace sade {

/// Which point of the attention pipeline a set of edge values came from.
enum class AttentionStage {
    raw,         // <q_i, k_j>, in [0, 1] for simplex rows
    scaled,      // 2r - 1, in [-1, 1]
    reweighted,  // scaled (or raw) times the normalized adjacency weight
};

inline const char* to_string(AttentionStage s) {
    switch (s) {
        case AttentionStage::raw: return "raw";
        case AttentionStage::scaled: return "scaled";
        case AttentionStage::reweighted: return "reweighted";
    }
    return "?";
}

/// Attention values stored parallel to a graph's edge list.
template <typename T>
struct EdgeAttention {
    Graph graph;
    std::vector<T> values;
    AttentionStage stage = AttentionStage::raw;
};

namespace detail {
template <typename T>
void check_qk(const Matrix<T>& q, const Matrix<T>& k, const Graph& g) {
    if (q.cols() != k.cols()) {
        throw std::invalid_argument("edge_attention: query has " + std::to_string(q.cols()) +
                                    " columns, key has " + std::to_string(k.cols()));
    }
    if (q.rows() != g.num_nodes() || k.rows() != g.num_nodes()) {
        throw std::invalid_argument("edge_attention: query/key rows must equal node count");
    }
}
}  // namespace detail

/// Edge-indexed attention. For edge e = (i, j) the value is <q_i, k_j>:
/// query rows gathered by source, key rows by destination, multiplied, and
/// summed along the row. Cost O(E H); the N x N product is never formed.
/// Swapping the gather roles transposes the attention matrix.
template <typename T>
EdgeAttention<T> edge_attention(const Matrix<T>& q, const Matrix<T>& k, const Graph& g) {
    detail::check_qk(q, k, g);
    EdgeAttention<T> att{g, std::vector<T>(g.num_edges()), AttentionStage::raw};
    const std::size_t h = q.cols();
    const T* qd = q.data().data();
    const T* kd = k.data().data();
    const std::size_t m = g.num_edges();
    // Key rows are gathered in random order; fetch a few edges ahead.
    constexpr std::size_t ahead = 8;
    constexpr std::size_t line = 64 / sizeof(T) > 0 ? 64 / sizeof(T) : 1;
    for (std::size_t e = 0; e < m; ++e) {
        if (e + ahead < m) {
            const T* p = kd + std::size_t(g.edge(e + ahead).dst) * h;
            for (std::size_t c = 0; c < h; c += line) __builtin_prefetch(p + c);
        }
        const auto& ed = g.edge(e);
        const T* a = qd + std::size_t(ed.src) * h;
        const T* b = kd + std::size_t(ed.dst) * h;
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        std::size_t c = 0;
        for (; c + 4 <= h; c += 4) {
            s0 += a[c] * b[c];
            s1 += a[c + 1] * b[c + 1];
            s2 += a[c + 2] * b[c + 2];
            s3 += a[c + 3] * b[c + 3];
        }
        for (; c < h; ++c) s0 += a[c] * b[c];
        att.values[e] = (s0 + s1) + (s2 + s3);
    }
    return att;
}

/// SADE-GCN-sym attention: <q_i, q_j>, equal in both directions by construction.
template <typename T>
EdgeAttention<T> symmetric_edge_attention(const Matrix<T>& q, const Graph& g) {
    return edge_attention(q, q, g);
}

/// Maps raw attention from [0,1] onto [-1,1] via 2r - 1.
template <typename T>
EdgeAttention<T> scale_attention(const EdgeAttention<T>& att) {
    if (att.stage != AttentionStage::raw) {
        throw std::invalid_argument(std::string("scale_attention: expected raw stage, got ") +
                                    to_string(att.stage));
    }
    EdgeAttention<T> out{att.graph, att.values, AttentionStage::scaled};
    for (auto& v : out.values) v = T(2) * v - T(1);
    return out;
}

/// Hadamard product of attention with the normalized adjacency. Non-edges
/// are zero because only edges are stored. Accepts raw attention too, which
/// is what the no-scaling ablation feeds in.
template <typename T>
EdgeAttention<T> reweight_adjacency(const EdgeAttention<T>& att, const NormalizedAdjacency<T>& adj) {
    if (att.stage == AttentionStage::reweighted) {
        throw std::invalid_argument("reweight_adjacency: attention is already reweighted");
    }
    if (!att.graph.same_edges(adj.graph) || att.values.size() != adj.weights.size()) {
        throw std::invalid_argument("reweight_adjacency: edge-list mismatch");
    }
    EdgeAttention<T> out{att.graph, att.values, AttentionStage::reweighted};
    for (std::size_t e = 0; e < out.values.size(); ++e) out.values[e] *= adj.weights[e];
    return out;
}

inline constexpr std::size_t kDenseOracleMaxNodes = 4096;

/// (2 Q K^T - 1) elementwise-times the dense normalized adjacency, N x N.
/// Quadratic in N; refuses graphs above kDenseOracleMaxNodes.
template <typename T>
Matrix<T> dense_oracle(const Matrix<T>& q, const Matrix<T>& k, const NormalizedAdjacency<T>& adj) {
    const std::size_t n = adj.graph.num_nodes();
    if (n > kDenseOracleMaxNodes) {
        throw std::length_error("dense_oracle: " + std::to_string(n) + " nodes exceeds guard of " +
                                std::to_string(kDenseOracleMaxNodes));
    }
    detail::check_qk(q, k, adj.graph);
    Matrix<T> r = matmul_nt(q, k);
    Matrix<T> a = dense_from_edges<T>(adj.graph, adj.weights);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = (T(2) * r[i] - T(1)) * a[i];
    return r;
}

/// Exports attention as `src,dst,value` CSV rows (with header).
template <typename T, typename Stream>
void write_attention_csv(Stream& os, const EdgeAttention<T>& att) {
    os << "src,dst,value\n";
    os.precision(17);
    for (std::size_t e = 0; e < att.values.size(); ++e) {
        const auto& ed = att.graph.edge(e);
        os << ed.src << ',' << ed.dst << ',' << att.values[e] << '\n';
    }
}

}  // namespace sade
