#pragma once

#include <utility>
#include <vector>

#include "starris/common.hpp"

namespace starris::sca {

// Sparse linear expression sum_j coeff_j * v[idx_j] + constant.
struct LinExpr {
    std::vector<std::pair<int, Real>> terms;
    Real constant = 0.0;

    Real eval(const Vec& v) const {
        Real acc = constant;
        for (const auto& [i, c] : terms) acc += c * v(i);
        return acc;
    }
    void add_to(Vec& grad, Real scale) const {
        for (const auto& [i, c] : terms) grad(i) += scale * c;
    }
};

// Convex constraint g(v) = sum_j row_j(v)^2 + lin(v) <= 0.
struct QuadConstraint {
    std::vector<LinExpr> sq_rows;
    LinExpr lin;

    Real eval(const Vec& v) const {
        Real acc = lin.eval(v);
        for (const LinExpr& r : sq_rows) {
            const Real x = r.eval(v);
            acc += x * x;
        }
        return acc;
    }
    Vec gradient(const Vec& v) const {
        Vec g = Vec::Zero(v.size());
        lin.add_to(g, 1.0);
        for (const LinExpr& r : sq_rows) r.add_to(g, 2.0 * r.eval(v));
        return g;
    }
};

// maximize  sum_k log2(1 + v[eta_idx_k]) + q . v
// subject to g_i(v) <= 0 for every QuadConstraint.
struct BarrierProblem {
    int n = 0;
    std::vector<int> eta_indices;
    Vec linear_obj;  // q, size n (zero-initialized by the builder)
    std::vector<QuadConstraint> constraints;

    Real objective(const Vec& v) const;
    bool strictly_feasible(const Vec& v, Real margin = 0.0) const;
};

struct BarrierOptions {
    Real t0 = 1.0;
    Real mu = 20.0;
    Real gap_tol = 1e-9;      // stop when m / t < gap_tol
    Real newton_tol = 1e-10;  // on the Newton decrement lambda^2 / 2
    int max_newton = 60;      // per centering step
};

struct BarrierResult {
    Vec v;
    Real objective = 0.0;
    bool converged = false;
    int newton_steps = 0;
};

// Interior-point solve from a strictly feasible start. Throws DomainError if
// v0 is not strictly feasible.
BarrierResult solve_barrier(const BarrierProblem& prob, const Vec& v0,
                            const BarrierOptions& opts = {});

}  // namespace starris::sca
