#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sade/autodiff.hpp"
#include "sade/params.hpp"

namespace sade {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_input;
    std::size_t worst_entry = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t entries_checked = 0;
};

namespace detail {
inline void record(GradCheckResult& r, double a, double n, const std::string& input, std::size_t entry) {
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
    ++r.entries_checked;
    if (err >= r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_input = input;
        r.worst_entry = entry;
        r.analytic = a;
        r.numeric = n;
    }
}
}  // namespace detail

/// Central-difference check of a scalar function of several matrix inputs.
/// The error per entry is |a - n| / max(|a|, |n|, 1e-8); the maximum is returned.
///
/// `f` is called as f(Tape<S>&, const std::vector<Var>&) for S = T (analytic
/// gradient under test) and S = Oracle (finite differences). A generic lambda
/// serves both. With Oracle wider than T the difference quotient is free of
/// T's roundoff, so tiny gradient entries are still checked meaningfully.
template <typename T, typename Oracle = long double, typename F>
GradCheckResult gradient_check(F&& f, const std::vector<Matrix<T>>& inputs, double h = 1e-6) {
    std::vector<Matrix<T>> analytic;
    {
        ad::Tape<T> tape;
        std::vector<ad::Var> vars;
        for (const auto& m : inputs) vars.push_back(tape.leaf(m, true));
        auto loss = f(tape, vars);
        tape.backward(loss);
        for (auto v : vars) analytic.push_back(tape.grad(v));
    }
    std::vector<Matrix<Oracle>> wide;
    for (const auto& m : inputs) wide.push_back(m.template cast<Oracle>());
    auto eval = [&]() {
        ad::Tape<Oracle> tape;
        std::vector<ad::Var> vars;
        for (const auto& m : wide) vars.push_back(tape.leaf(m, false));
        return tape.value(f(tape, vars))(0, 0);
    };
    const Oracle step = static_cast<Oracle>(h);
    GradCheckResult r;
    for (std::size_t k = 0; k < wide.size(); ++k) {
        for (std::size_t i = 0; i < wide[k].size(); ++i) {
            const Oracle orig = wide[k][i];
            wide[k][i] = orig + step;
            const Oracle up = eval();
            wide[k][i] = orig - step;
            const Oracle down = eval();
            wide[k][i] = orig;
            detail::record(r, double(analytic[k][i]), double((up - down) / (2 * step)), "input" + std::to_string(k), i);
        }
    }
    return r;
}

/// Same check over every scalar of a ParamStore. `loss_fn` is called as
/// loss_fn(Tape<S>&, ParamBinder<S>&) for S = T and S = Oracle; the Oracle
/// binder reads from a widened copy of `store`. Gradients are left in `store`.
template <typename T, typename Oracle = long double, typename F>
GradCheckResult gradient_check_params(ParamStore<T>& store, F&& loss_fn, double h = 1e-6) {
    store.zero_grad();
    {
        ad::Tape<T> tape;
        ParamBinder<T> bind(store, tape);
        auto loss = loss_fn(tape, bind);
        tape.backward(loss);
        bind.collect();
    }
    ParamStore<Oracle> wide;
    for (const auto& p : store.params()) wide.add(p.name, p.value.template cast<Oracle>());
    auto eval = [&]() {
        ad::Tape<Oracle> tape;
        ParamBinder<Oracle> bind(wide, tape);
        return tape.value(loss_fn(tape, bind))(0, 0);
    };
    const Oracle step = static_cast<Oracle>(h);
    GradCheckResult r;
    for (std::size_t k = 0; k < store.size(); ++k) {
        auto& p = wide.at(k);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const Oracle orig = p.value[i];
            p.value[i] = orig + step;
            const Oracle up = eval();
            p.value[i] = orig - step;
            const Oracle down = eval();
            p.value[i] = orig;
            detail::record(r, double(store.at(k).grad[i]), double((up - down) / (2 * step)), p.name, i);
        }
    }
    return r;
}

}  // namespace sade
