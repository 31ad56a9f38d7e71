#pragma once

// Minimal reverse-mode engine over dense matrices. A Tape records each op's
// output value plus a closure that pushes the output gradient to its parents.
// Only the op set the models need is provided.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sade/graph.hpp"
#include "sade/matrix.hpp"

namespace sade::ad {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    [[nodiscard]] bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

template <typename T>
class Tape {
public:
    using value_type = T;
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Var constant(Matrix<T> value) { return push(std::move(value), false, {}); }
    Var leaf(Matrix<T> value, bool requires_grad = true) {
        return push(std::move(value), requires_grad, {});
    }

    /// Records an op output. `requires_grad` is the OR over parents.
    Var push(Matrix<T> value, bool requires_grad, BackwardFn backward) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(backward)});
        return Var{nodes_.size() - 1};
    }

    [[nodiscard]] const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
    [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    /// Gradient buffer; zeros if nothing has flowed into it.
    [[nodiscard]] Matrix<T> grad(Var v) const {
        const auto& n = nodes_.at(v.id);
        if (n.grad.empty() && !n.value.empty()) return Matrix<T>(n.value.rows(), n.value.cols());
        return n.grad;
    }

    /// Gradient flowing into node `self`, for use inside its backward function.
    /// Stays valid while the closure writes into its parents' buffers.
    [[nodiscard]] const Matrix<T>& upstream(std::size_t self) const { return nodes_[self].grad; }

    /// Mutable gradient buffer, allocated on first touch.
    Matrix<T>& grad_ref(Var v) {
        auto& n = nodes_.at(v.id);
        if (n.grad.size() != n.value.size()) n.grad = Matrix<T>(n.value.rows(), n.value.cols());
        return n.grad;
    }

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
    void backward(Var loss) {
        const auto& l = value(loss);
        if (l.rows() != 1 || l.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
        grad_ref(loss)(0, 0) = T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
            n.backward(*this, i);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix<T> value;
        Matrix<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

namespace detail {
template <typename T>
bool any_grad(const Tape<T>& t, std::initializer_list<Var> vs) {
    for (auto v : vs) {
        if (t.requires_grad(v)) return true;
    }
    return false;
}
template <typename T>
void accumulate(Matrix<T>& dst, const Matrix<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
}  // namespace detail

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
    auto out = sade::matmul(t.value(a), t.value(b));
    return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        if (tp.requires_grad(a)) detail::accumulate(tp.grad_ref(a), matmul_nt(g, tp.value(b)));
        if (tp.requires_grad(b)) detail::accumulate(tp.grad_ref(b), matmul_tn(tp.value(a), g));
    });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "add");
    auto out = t.value(a);
    detail::accumulate(out, t.value(b));
    return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        if (tp.requires_grad(a)) detail::accumulate(tp.grad_ref(a), g);
        if (tp.requires_grad(b)) detail::accumulate(tp.grad_ref(b), g);
    });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "sub");
    auto out = t.value(a);
    const auto& bv = t.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        if (tp.requires_grad(a)) detail::accumulate(tp.grad_ref(a), g);
        if (tp.requires_grad(b)) {
            auto& gb = tp.grad_ref(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

/// Element-wise (Hadamard) product.
template <typename T>
Var hadamard(Tape<T>& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "hadamard");
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    Matrix<T> out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        if (tp.requires_grad(a)) {
            auto& ga = tp.grad_ref(a);
            const auto& bv = tp.value(b);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.requires_grad(b)) {
            auto& gb = tp.grad_ref(b);
            const auto& av = tp.value(a);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

/// x -> scale * x + shift. The attention scaling map is affine(x, 2, -1).
template <typename T>
Var affine(Tape<T>& t, Var a, T scale, T shift = T(0)) {
    auto out = t.value(a);
    for (auto& v : out.data()) v = scale * v + shift;
    return t.push(std::move(out), t.requires_grad(a), [a, scale](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& ga = tp.grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
    });
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
    auto out = t.value(a);
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    return t.push(std::move(out), t.requires_grad(a), [a](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const auto& av = tp.value(a);
        auto& ga = tp.grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] > T(0)) ga[i] += g[i];
        }
    });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var a) {
    auto out = t.value(a);
    for (auto& v : out.data()) {
        v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return t.push(std::move(out), t.requires_grad(a), [a](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const auto& s = tp.value(Var{self});
        auto& ga = tp.grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (T(1) - s[i]);
    });
}

/// Softmax along each row with max subtraction.
template <typename T>
Matrix<T> row_softmax(const Matrix<T>& m) {
    if (m.cols() == 0) throw std::invalid_argument("row_softmax: zero columns");
    Matrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto in = m.row(i);
        auto o = out.row(i);
        T mx = in[0];
        for (auto v : in) mx = std::max(mx, v);
        T sum = 0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (auto& v : o) v /= sum;
    }
    return out;
}

template <typename T>
Var row_softmax(Tape<T>& t, Var a) {
    return t.push(row_softmax(t.value(a)), t.requires_grad(a), [a](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const auto& s = tp.value(Var{self});
        auto& ga = tp.grad_ref(a);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            auto sr = s.row(i);
            auto gr = g.row(i);
            T dot = 0;
            for (std::size_t j = 0; j < sr.size(); ++j) dot += sr[j] * gr[j];
            auto gar = ga.row(i);
            for (std::size_t j = 0; j < sr.size(); ++j) gar[j] += sr[j] * (gr[j] - dot);
        }
    });
}

/// Inverted dropout: train mode zeroes entries with probability p and scales
/// survivors by 1/(1-p); eval mode (or p == 0) is the identity.
template <typename T, typename Rng>
Var dropout(Tape<T>& t, Var a, double p, bool train, Rng& rng) {
    if (!train || p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const auto& av = t.value(a);
    Matrix<T> mask(av.rows(), av.cols());
    std::bernoulli_distribution keep(1.0 - p);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& v : mask.data()) v = keep(rng) ? scale : T(0);
    Matrix<T> out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
    return t.push(std::move(out), t.requires_grad(a),
                  [a, mask = std::move(mask)](Tape<T>& tp, std::size_t self) {
                      const auto& g = tp.upstream(self);
                      auto& ga = tp.grad_ref(a);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                  });
}

/// out[r] = a[index[r]]
template <typename T>
Var gather_rows(Tape<T>& t, Var a, std::vector<std::size_t> index) {
    const auto& av = t.value(a);
    Matrix<T> out(index.size(), av.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= av.rows()) throw std::out_of_range("gather_rows: index out of range");
        std::copy(av.row(index[r]).begin(), av.row(index[r]).end(), out.row(r).begin());
    }
    return t.push(std::move(out), t.requires_grad(a),
                  [a, index = std::move(index)](Tape<T>& tp, std::size_t self) {
                      const auto& g = tp.upstream(self);
                      auto& ga = tp.grad_ref(a);
                      for (std::size_t r = 0; r < index.size(); ++r) {
                          auto dst = ga.row(index[r]);
                          auto src = g.row(r);
                          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                      }
                  });
}

/// Sum of every entry, as a 1x1.
template <typename T>
Var sum_all(Tape<T>& t, Var a) {
    T s = 0;
    for (auto v : t.value(a).data()) s += v;
    return t.push(Matrix<T>(1, 1, s), t.requires_grad(a), [a](Tape<T>& tp, std::size_t self) {
        const T g = tp.upstream(self)(0, 0);
        for (auto& v : tp.grad_ref(a).data()) v += g;
    });
}

/// Per-row sum: N x H -> N x 1.
template <typename T>
Var row_sum(Tape<T>& t, Var a) {
    const auto& av = t.value(a);
    Matrix<T> out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (auto v : av.row(i)) out(i, 0) += v;
    }
    return t.push(std::move(out), t.requires_grad(a), [a](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& ga = tp.grad_ref(a);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            for (auto& v : ga.row(i)) v += g(i, 0);
        }
    });
}

/// Scales row i of `m` (N x H) by gate[i] (N x 1).
template <typename T>
Var scale_rows(Tape<T>& t, Var gate, Var m) {
    const auto& gv = t.value(gate);
    const auto& mv = t.value(m);
    if (gv.cols() != 1 || gv.rows() != mv.rows()) throw std::invalid_argument("scale_rows: shape mismatch");
    Matrix<T> out(mv.rows(), mv.cols());
    for (std::size_t i = 0; i < mv.rows(); ++i) {
        for (std::size_t j = 0; j < mv.cols(); ++j) out(i, j) = gv(i, 0) * mv(i, j);
    }
    return t.push(std::move(out), detail::any_grad(t, {gate, m}),
                  [gate, m](Tape<T>& tp, std::size_t self) {
                      const auto& g = tp.upstream(self);
                      if (tp.requires_grad(gate)) {
                          auto& gg = tp.grad_ref(gate);
                          const auto& mv = tp.value(m);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                              T s = 0;
                              for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * mv(i, j);
                              gg(i, 0) += s;
                          }
                      }
                      if (tp.requires_grad(m)) {
                          auto& gm = tp.grad_ref(m);
                          const auto& gv = tp.value(gate);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                              for (std::size_t j = 0; j < g.cols(); ++j) gm(i, j) += g(i, j) * gv(i, 0);
                          }
                      }
                  });
}

/// Adds a 1 x H bias row to every row of an N x H matrix.
template <typename T>
Var add_row_bias(Tape<T>& t, Var m, Var bias) {
    const auto& mv = t.value(m);
    const auto& bv = t.value(bias);
    if (bv.rows() != 1 || bv.cols() != mv.cols()) throw std::invalid_argument("add_row_bias: shape mismatch");
    auto out = mv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
    }
    return t.push(std::move(out), detail::any_grad(t, {m, bias}),
                  [m, bias](Tape<T>& tp, std::size_t self) {
                      const auto& g = tp.upstream(self);
                      if (tp.requires_grad(m)) detail::accumulate(tp.grad_ref(m), g);
                      if (tp.requires_grad(bias)) {
                          auto& gb = tp.grad_ref(bias);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                              for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
                          }
                      }
                  });
}

/// Sparse x dense: out[i] = sum over edges e=(i,j) of w_e * h[j].
/// `weights` is an E x 1 Var; gradient flows into it when it requires grad.
/// Edges are visited in edge-list order, so results are bit-reproducible.
template <typename T>
Var spmm(Tape<T>& t, const Graph& g, Var weights, Var h) {
    const auto& wv = t.value(weights);
    const auto& hv = t.value(h);
    if (wv.rows() != g.num_edges() || wv.cols() != 1) throw std::invalid_argument("spmm: weights must be E x 1");
    auto out = sade::spmm(g, std::span<const T>(wv.data()), hv);
    return t.push(std::move(out), detail::any_grad(t, {weights, h}),
                  [g, weights, h](Tape<T>& tp, std::size_t self) {
                      const auto& gout = tp.upstream(self);
                      const std::size_t cols = gout.cols();
                      if (tp.requires_grad(h)) {
                          auto& gh = tp.grad_ref(h);
                          const auto& wv = tp.value(weights);
                          for (std::size_t e = 0; e < g.num_edges(); ++e) {
                              const auto& ed = g.edge(e);
                              const T w = wv[e];
                              const T* go = gout.data().data() + std::size_t(ed.src) * cols;
                              T* d = gh.data().data() + std::size_t(ed.dst) * cols;
                              for (std::size_t c = 0; c < cols; ++c) d[c] += w * go[c];
                          }
                      }
                      if (tp.requires_grad(weights)) {
                          auto& gw = tp.grad_ref(weights);
                          const auto& hv = tp.value(h);
                          for (std::size_t e = 0; e < g.num_edges(); ++e) {
                              const auto& ed = g.edge(e);
                              const T* go = gout.data().data() + std::size_t(ed.src) * cols;
                              const T* hr = hv.data().data() + std::size_t(ed.dst) * cols;
                              T s = 0;
                              for (std::size_t c = 0; c < cols; ++c) s += go[c] * hr[c];
                              gw[e] += s;
                          }
                      }
                  });
}

/// Per-edge inner product <q[src], k[dst]> as an E x 1 Var: gather query rows
/// by source, key rows by destination, multiply, and sum each row. The E x H
/// gathered matrices are never stored; each edge is reduced in place.
template <typename T>
Var edge_dot(Tape<T>& t, const Graph& g, Var q, Var k) {
    const auto& qv = t.value(q);
    const auto& kv = t.value(k);
    if (qv.cols() != kv.cols()) throw std::invalid_argument("edge_dot: query/key column mismatch");
    if (qv.rows() != g.num_nodes() || kv.rows() != g.num_nodes()) {
        throw std::invalid_argument("edge_dot: query/key rows must equal node count");
    }
    const std::size_t h = qv.cols();
    Matrix<T> out(g.num_edges(), 1);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto& ed = g.edge(e);
        const T* a = qv.data().data() + std::size_t(ed.src) * h;
        const T* b = kv.data().data() + std::size_t(ed.dst) * h;
        T s = 0;
        for (std::size_t c = 0; c < h; ++c) s += a[c] * b[c];
        out[e] = s;
    }
    return t.push(std::move(out), detail::any_grad(t, {q, k}), [g, q, k](Tape<T>& tp, std::size_t self) {
        const auto& gout = tp.upstream(self);
        const auto& qv = tp.value(q);
        const auto& kv = tp.value(k);
        const std::size_t h = qv.cols();
        // q and k may be the same Var (symmetric attention); accumulate into one buffer then.
        const bool gq = tp.requires_grad(q);
        const bool gk = tp.requires_grad(k);
        for (std::size_t e = 0; e < g.num_edges(); ++e) {
            const auto& ed = g.edge(e);
            const T ge = gout[e];
            if (ge == T(0)) continue;
            if (gq) {
                T* d = tp.grad_ref(q).data().data() + std::size_t(ed.src) * h;
                const T* b = kv.data().data() + std::size_t(ed.dst) * h;
                for (std::size_t c = 0; c < h; ++c) d[c] += ge * b[c];
            }
            if (gk) {
                T* d = tp.grad_ref(k).data().data() + std::size_t(ed.dst) * h;
                const T* a = qv.data().data() + std::size_t(ed.src) * h;
                for (std::size_t c = 0; c < h; ++c) d[c] += ge * a[c];
            }
        }
    });
}

/// Mean softmax cross-entropy over the masked rows. Returns a 1x1 loss;
/// gradient is zero outside the mask.
template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, const LabelVector& y, std::vector<std::size_t> mask) {
    if (mask.empty()) throw std::invalid_argument("cross_entropy: empty mask");
    const auto& lv = t.value(logits);
    if (lv.rows() != y.size()) throw std::invalid_argument("cross_entropy: logits rows != label count");
    if (lv.cols() != y.num_classes) throw std::invalid_argument("cross_entropy: logits cols != num_classes");
    Matrix<T> probs(mask.size(), lv.cols());
    std::vector<std::uint32_t> targets(mask.size());
    T loss = 0;
    for (std::size_t r = 0; r < mask.size(); ++r) {
        const auto row = lv.row(mask[r]);
        T mx = row[0];
        for (auto v : row) mx = std::max(mx, v);
        T sum = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            probs(r, j) = std::exp(row[j] - mx);
            sum += probs(r, j);
        }
        for (std::size_t j = 0; j < row.size(); ++j) probs(r, j) /= sum;
        targets[r] = y[mask[r]];
        loss += -(row[targets[r]] - mx - std::log(sum));
    }
    loss /= static_cast<T>(mask.size());
    return t.push(Matrix<T>(1, 1, loss), t.requires_grad(logits),
                  [logits, mask = std::move(mask), targets = std::move(targets),
                   probs = std::move(probs)](Tape<T>& tp, std::size_t self) {
                      const T g = tp.upstream(self)(0, 0) / static_cast<T>(mask.size());
                      auto& gl = tp.grad_ref(logits);
                      for (std::size_t r = 0; r < mask.size(); ++r) {
                          auto dst = gl.row(mask[r]);
                          for (std::size_t j = 0; j < dst.size(); ++j) {
                              const T target = (j == targets[r]) ? T(1) : T(0);
                              dst[j] += g * (probs(r, j) - target);
                          }
                      }
                  });
}

}  // namespace sade::ad
