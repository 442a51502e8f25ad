#include "starris/sca/barrier.hpp"

#include <cmath>

namespace starris::sca {

namespace {
constexpr Real kLn2 = 0.6931471805599453;
}

Real BarrierProblem::objective(const Vec& v) const {
    Real acc = linear_obj.size() ? linear_obj.dot(v) : 0.0;
    for (int i : eta_indices) acc += std::log2(1.0 + v(i));
    return acc;
}

bool BarrierProblem::strictly_feasible(const Vec& v, Real margin) const {
    for (int i : eta_indices)
        if (1.0 + v(i) <= margin) return false;
    for (const QuadConstraint& c : constraints)
        if (c.eval(v) >= -margin) return false;
    return true;
}

namespace {

// phi_t(v) = -t * objective(v) - sum log(-g_i(v))
struct Evaluator {
    const BarrierProblem& prob;
    Real t;

    Real value(const Vec& v) const {
        Real acc = -t * prob.objective(v);
        for (const QuadConstraint& c : prob.constraints) {
            const Real g = c.eval(v);
            if (g >= 0.0) return std::numeric_limits<Real>::infinity();
            acc -= std::log(-g);
        }
        return acc;
    }

    void grad_hess(const Vec& v, Vec& grad, Mat& hess) const {
        const int n = prob.n;
        grad = Vec::Zero(n);
        hess = Mat::Zero(n, n);
        if (prob.linear_obj.size()) grad -= t * prob.linear_obj;
        for (int i : prob.eta_indices) {
            const Real d = 1.0 + v(i);
            grad(i) -= t / (d * kLn2);
            hess(i, i) += t / (d * d * kLn2);
        }
        for (const QuadConstraint& c : prob.constraints) {
            const Real g = c.eval(v);
            const Vec cg = c.gradient(v);
            const Real inv = -1.0 / g;  // positive
            grad += inv * cg;
            hess += (inv * inv) * (cg * cg.transpose());
            // inv * hessian(g): 2 a a^T per squared row, sparse rank-1 updates.
            for (const LinExpr& r : c.sq_rows) {
                for (const auto& [i1, c1] : r.terms)
                    for (const auto& [i2, c2] : r.terms) hess(i1, i2) += 2.0 * inv * c1 * c2;
            }
        }
    }
};

}  // namespace

BarrierResult solve_barrier(const BarrierProblem& prob, const Vec& v0,
                            const BarrierOptions& opts) {
    if (!prob.strictly_feasible(v0)) {
        std::size_t worst = 0;
        Real worst_val = -std::numeric_limits<Real>::infinity();
        for (std::size_t i = 0; i < prob.constraints.size(); ++i) {
            const Real val = prob.constraints[i].eval(v0);
            if (val > worst_val) {
                worst_val = val;
                worst = i;
            }
        }
        throw DomainError("solve_barrier: start point is not strictly feasible (constraint " +
                          std::to_string(worst) + " value " + std::to_string(worst_val) + ")");
    }

    BarrierResult res;
    res.v = v0;
    const int m = static_cast<int>(prob.constraints.size());
    Real t = opts.t0;
    Vec grad;
    Mat hess;

    while (true) {
        Evaluator ev{prob, t};
        for (int it = 0; it < opts.max_newton; ++it) {
            ev.grad_hess(res.v, grad, hess);
            hess.diagonal().array() += 1e-12;
            Eigen::LDLT<Mat> ldlt(hess);
            Vec step = ldlt.solve(-grad);
            const Real decrement = -0.5 * grad.dot(step);
            if (!(decrement > opts.newton_tol)) break;

            // backtracking line search, keeps strict feasibility
            const Real f0 = ev.value(res.v);
            const Real slope = grad.dot(step);
            Real alpha = 1.0;
            for (int ls = 0; ls < 60; ++ls) {
                const Vec cand = res.v + alpha * step;
                if (prob.strictly_feasible(cand) && ev.value(cand) <= f0 + 0.01 * alpha * slope) {
                    res.v = cand;
                    break;
                }
                alpha *= 0.5;
            }
            ++res.newton_steps;
        }
        if (m == 0 || static_cast<Real>(m) / t < opts.gap_tol) break;
        t *= opts.mu;
    }

    res.objective = prob.objective(res.v);
    res.converged = true;
    return res;
}

}  // namespace starris::sca
