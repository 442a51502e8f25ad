#include "starris/sca/solver.hpp"

#include <cmath>

namespace starris::sca {

namespace {

// Margins used to keep SCA linearization points strictly inside the surrogate
// feasible set. The eta margin must dominate the alpha margin so the product
// constraint stays strictly negative.
constexpr Real kAlphaMargin = 1e-10;
constexpr Real kEtaMargin = 1e-9;

struct GainStats {
    Vec signal;        // |gain_kk|^2
    Vec interference;  // sum_{i != k} |gain_ki|^2 + 1 (noise-normalized)
};

// Initializes (eta, alpha) strictly inside the slack constraints. eta is
// floored away from exact zero so the eta >= 0 barrier stays usable even for
// users with a numerically dead link.
void init_slacks(const GainStats& gs, Vec& eta, Vec& alpha) {
    const int K = static_cast<int>(gs.signal.size());
    eta.resize(K);
    alpha.resize(K);
    for (int k = 0; k < K; ++k) {
        alpha(k) = gs.interference(k) * (1.0 + kAlphaMargin);
        eta(k) = std::max(1e-100, gs.signal(k) / gs.interference(k) * (1.0 - kEtaMargin));
    }
}

// Constant slack added to the relaxed signal constraint. Its exact value at
// the linearization point is a cancellation of O(alpha^2)-sized terms, so for
// weak links the computed residual is pure rounding noise; a scale-aware
// slack keeps the warm start strictly feasible while perturbing the optimum
// by a negligible amount.
Real taylor_slack(const Complex& c_n, Real d, Real alpha_n, Real eta_n) {
    return 1e-10 * (1.0 + std::norm(c_n) + d * d + alpha_n * alpha_n + eta_n * eta_n);
}

void add_single(QuadConstraint& c, int idx, Real coeff, Real constant) {
    c.lin.terms.push_back({idx, coeff});
    c.lin.constant = constant;
}

// Fractional increment of the objective sequence.
Real frac_increment(Real prev, Real cur) {
    return std::abs(cur - prev) / std::max(std::abs(prev), 1e-12);
}

GainStats phase_gain_stats(const PhaseSubproblem& sub, const CVec& s_t, const CVec& s_r) {
    const int K = sub.n_users;
    GainStats gs;
    gs.signal.resize(K);
    gs.interference.resize(K);
    for (int k = 0; k < K; ++k) {
        const CVec& s = sub.user_in_t(k) ? s_t : s_r;
        Real interf = sub.noise_power;
        for (int i = 0; i < K; ++i) {
            const Real p = std::norm((sub.t[k].row(i).conjugate() * s)(0));
            if (i == k)
                gs.signal(k) = p;
            else
                interf += p;
        }
        gs.interference(k) = interf;
    }
    return gs;
}

// Exact per-element phase refinement at fixed modulus. The linearized penalty
// throttles tangential movement of s (rotating by delta costs ~C*delta^2
// against a rate gain linear in delta), so the convex step alone crawls along
// the phase directions; rotating one element at fixed radius leaves the
// penalty term unchanged and can be line-searched on the true relaxed rate.
void phase_sweep(const PhaseSubproblem& sub, CVec& s_t, CVec& s_r) {
    const int K = sub.n_users, S = sub.total_elems;
    for (bool t_reg : {true, false}) {
        std::vector<int> users;
        for (int k = 0; k < K; ++k)
            if (sub.user_in_t(k) == t_reg) users.push_back(k);
        if (users.empty()) continue;
        CVec& s = t_reg ? s_t : s_r;
        const int nu = static_cast<int>(users.size());

        // gains[uk](i) = t_ki^H s for user users[uk].
        std::vector<CVec> gains(nu);
        for (int uk = 0; uk < nu; ++uk) gains[uk] = sub.t[users[uk]].conjugate() * s;

        auto rate_of = [&](const std::vector<CVec>& g) {
            Real acc = 0.0;
            for (int uk = 0; uk < nu; ++uk) {
                const int k = users[uk];
                Real interf = sub.noise_power;
                for (int i = 0; i < K; ++i)
                    if (i != k) interf += std::norm(g[uk](i));
                acc += std::log2(1.0 + std::norm(g[uk](k)) / interf);
            }
            return acc;
        };

        for (int sweep = 0; sweep < 8; ++sweep) {
            const Real before = rate_of(gains);
            for (int e = 0; e < S; ++e) {
                const Real r = std::abs(s(e));
                if (r <= 0.0) continue;
                std::vector<CVec> base = gains;
                for (int uk = 0; uk < nu; ++uk)
                    for (int i = 0; i < K; ++i)
                        base[uk](i) -= std::conj(sub.t[users[uk]](i, e)) * s(e);

                auto value = [&](Real phi) {
                    const Complex z = std::polar(r, phi);
                    Real acc = 0.0;
                    for (int uk = 0; uk < nu; ++uk) {
                        const int k = users[uk];
                        Real sig = 0.0, interf = sub.noise_power;
                        for (int i = 0; i < K; ++i) {
                            const Real p =
                                std::norm(base[uk](i) + std::conj(sub.t[k](i, e)) * z);
                            if (i == k)
                                sig = p;
                            else
                                interf += p;
                        }
                        acc += std::log2(1.0 + sig / interf);
                    }
                    return acc;
                };

                const Real cur_val = value(std::arg(s(e)));
                Real best_phi = std::arg(s(e)), best_val = cur_val;
                for (int g = 0; g < 64; ++g) {
                    const Real phi = 2.0 * kPi * g / 64.0;
                    const Real v = value(phi);
                    if (v > best_val) {
                        best_val = v;
                        best_phi = phi;
                    }
                }
                Real lo = best_phi - 2.0 * kPi / 64.0, hi = best_phi + 2.0 * kPi / 64.0;
                const Real gr = 0.5 * (std::sqrt(5.0) - 1.0);
                Real x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
                Real f1 = value(x1), f2 = value(x2);
                for (int it = 0; it < 40; ++it) {
                    if (f1 < f2) {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + gr * (hi - lo);
                        f2 = value(x2);
                    } else {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - gr * (hi - lo);
                        f1 = value(x1);
                    }
                }
                const Real mid = 0.5 * (lo + hi), vm = value(mid);
                if (vm > best_val) {
                    best_val = vm;
                    best_phi = mid;
                }
                if (best_val > cur_val) {
                    s(e) = std::polar(r, best_phi);
                    for (int uk = 0; uk < nu; ++uk)
                        for (int i = 0; i < K; ++i)
                            gains[uk](i) =
                                base[uk](i) + std::conj(sub.t[users[uk]](i, e)) * s(e);
                }
            }
            if (rate_of(gains) <= before + 1e-10) break;
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Phase subproblem

Real PhaseSubproblem::penalized_objective(const CVec& st, const CVec& sr,
                                          const Vec& eta_v) const {
    Real acc = 0.0;
    for (int k = 0; k < n_users; ++k) acc += std::log2(1.0 + eta_v(k));
    for (int s = 0; s < total_elems; ++s)
        acc += penalty_c * (std::norm(st(s)) - 1.0 + std::norm(sr(s)) - 1.0);
    return acc;
}

PhaseSubproblem build_phase_subproblem(const ChannelRealization& chan, const StarRisState& ris,
                                       const BeamformingMatrix& w, Real noise_power,
                                       const ScaOptions& opts) {
    const int K = chan.n_users, S = chan.total_elems();
    if (ris.total_elems() != S)
        throw DimensionError("build_phase_subproblem: RIS element axis mismatch");

    PhaseSubproblem sub;
    sub.n_users = K;
    sub.total_elems = S;
    sub.n_users_t = chan.n_users_t;
    sub.noise_power = 1.0;  // channels absorbed the noise scale below
    sub.penalty_c = opts.penalty_c;

    const Real inv_sigma = 1.0 / std::sqrt(noise_power);
    sub.t.assign(K, CMat(K, S));
    for (int k = 0; k < K; ++k) {
        const Vec& amp = sub.user_in_t(k) ? ris.amp_t : ris.amp_r;
        for (int i = 0; i < K; ++i) {
            const CVec hw = chan.h_equiv[k] * w.w.col(i);  // h~_sk . w_i per element
            for (int s = 0; s < S; ++s)
                sub.t[k](i, s) = std::conj(amp(s) * hw(s) * inv_sigma);
        }
    }

    sub.s_t.resize(S);
    sub.s_r.resize(S);
    const Real shrink = 1.0 - 1e-7;  // strictly inside the unit discs
    for (int s = 0; s < S; ++s) {
        sub.s_t(s) = std::polar(shrink, ris.theta_t(s));
        sub.s_r(s) = std::polar(shrink, ris.theta_r(s));
    }

    init_slacks(phase_gain_stats(sub, sub.s_t, sub.s_r), sub.eta, sub.alpha);
    return sub;
}

SurrogateEval taylor_surrogate(const PhaseSubproblem& sub, int k, const CVec& s_t,
                               const CVec& s_r, Real eta_k, Real alpha_k) {
    const int S = sub.total_elems;
    const CVec& s = sub.user_in_t(k) ? s_t : s_r;
    const CVec& s_n = sub.region_s(k);
    const Eigen::RowVectorXcd t_kk = sub.t[k].row(k);

    const Complex gain = (t_kk.conjugate() * s)(0);
    const Complex c = (t_kk.conjugate() * s_n)(0);
    const Real d = sub.alpha(k) - sub.eta(k);

    SurrogateEval ev;
    ev.g_true = -std::norm(gain) + alpha_k * eta_k;
    ev.g_hat = -2.0 * (c.real() * (gain.real() - c.real()) + c.imag() * (gain.imag() - c.imag())) -
               std::norm(c) +
               0.25 * ((alpha_k + eta_k) * (alpha_k + eta_k) -
                       2.0 * d * (alpha_k - eta_k) + d * d);

    ev.grad_hat = Vec::Zero(2 * S + 2);
    for (int j = 0; j < S; ++j) {
        const Real tr = t_kk(j).real(), ti = t_kk(j).imag();
        ev.grad_hat(j) = -2.0 * (c.real() * tr - c.imag() * ti);
        ev.grad_hat(S + j) = -2.0 * (c.real() * ti + c.imag() * tr);
    }
    ev.grad_hat(2 * S) = 0.5 * (alpha_k + eta_k) + 0.5 * d;      // d/d eta
    ev.grad_hat(2 * S + 1) = 0.5 * (alpha_k + eta_k) - 0.5 * d;  // d/d alpha

    Real pen_true = 0.0, pen_lin = 0.0;
    for (int j = 0; j < S; ++j) {
        pen_true += std::norm(s_t(j)) - 1.0 + std::norm(s_r(j)) - 1.0;
        pen_lin += std::norm(sub.s_t(j)) - 1.0 + std::norm(sub.s_r(j)) - 1.0;
        pen_lin += 2.0 * (std::conj(sub.s_t(j)) * (s_t(j) - sub.s_t(j))).real();
        pen_lin += 2.0 * (std::conj(sub.s_r(j)) * (s_r(j) - sub.s_r(j))).real();
    }
    ev.penalty_true = sub.penalty_c * pen_true;
    ev.penalty_lin = sub.penalty_c * pen_lin;
    return ev;
}

namespace {

// Variable layout for the phase barrier problem.
struct PhaseLayout {
    int S, K;
    int re_t(int s) const { return s; }
    int im_t(int s) const { return S + s; }
    int re_r(int s) const { return 2 * S + s; }
    int im_r(int s) const { return 3 * S + s; }
    int re(int s, bool t_reg) const { return t_reg ? re_t(s) : re_r(s); }
    int im(int s, bool t_reg) const { return t_reg ? im_t(s) : im_r(s); }
    int eta(int k) const { return 4 * S + k; }
    int alpha(int k) const { return 4 * S + K + k; }
    int n() const { return 4 * S + 2 * K; }
};

// Rows of Re/Im of t_ki^H s over user k's region block.
void gain_rows(const PhaseLayout& ly, const Eigen::RowVectorXcd& t, bool t_reg, LinExpr& re,
               LinExpr& im) {
    for (int s = 0; s < ly.S; ++s) {
        const Real tr = t(s).real(), ti = t(s).imag();
        re.terms.push_back({ly.re(s, t_reg), tr});
        re.terms.push_back({ly.im(s, t_reg), ti});
        im.terms.push_back({ly.re(s, t_reg), -ti});
        im.terms.push_back({ly.im(s, t_reg), tr});
    }
}

}  // namespace

PhaseSolution solve_convex_subproblem(const PhaseSubproblem& sub, const BarrierOptions& bopts) {
    const int S = sub.total_elems, K = sub.n_users;
    const PhaseLayout ly{S, K};

    BarrierProblem prob;
    prob.n = ly.n();
    prob.linear_obj = Vec::Zero(prob.n);
    for (int k = 0; k < K; ++k) prob.eta_indices.push_back(ly.eta(k));

    // Linearized penalty gradient: 2C * s^(n) on both region blocks.
    for (int s = 0; s < S; ++s) {
        prob.linear_obj(ly.re_t(s)) = 2.0 * sub.penalty_c * sub.s_t(s).real();
        prob.linear_obj(ly.im_t(s)) = 2.0 * sub.penalty_c * sub.s_t(s).imag();
        prob.linear_obj(ly.re_r(s)) = 2.0 * sub.penalty_c * sub.s_r(s).real();
        prob.linear_obj(ly.im_r(s)) = 2.0 * sub.penalty_c * sub.s_r(s).imag();
    }

    // |s_lm| <= 1 per element per region.
    for (int s = 0; s < S; ++s) {
        for (bool t_reg : {true, false}) {
            QuadConstraint c;
            c.sq_rows.push_back(LinExpr{{{ly.re(s, t_reg), 1.0}}, 0.0});
            c.sq_rows.push_back(LinExpr{{{ly.im(s, t_reg), 1.0}}, 0.0});
            c.lin.constant = -1.0;
            prob.constraints.push_back(std::move(c));
        }
    }

    for (int k = 0; k < K; ++k) {
        const bool t_reg = sub.user_in_t(k);

        // Interference + noise <= alpha_k.
        QuadConstraint interf;
        for (int i = 0; i < K; ++i) {
            if (i == k) continue;
            LinExpr re, im;
            gain_rows(ly, sub.t[k].row(i), t_reg, re, im);
            interf.sq_rows.push_back(std::move(re));
            interf.sq_rows.push_back(std::move(im));
        }
        interf.lin.terms.push_back({ly.alpha(k), -1.0});
        interf.lin.constant = sub.noise_power;
        prob.constraints.push_back(std::move(interf));

        // Taylor-relaxed signal constraint.
        const Complex c_n = (sub.t[k].row(k).conjugate() * sub.region_s(k))(0);
        const Real d = sub.alpha(k) - sub.eta(k);
        QuadConstraint taylor;
        taylor.sq_rows.push_back(
            LinExpr{{{ly.alpha(k), 0.5}, {ly.eta(k), 0.5}}, 0.0});
        LinExpr re, im;
        gain_rows(ly, sub.t[k].row(k), t_reg, re, im);
        for (const auto& [idx, coeff] : re.terms)
            taylor.lin.terms.push_back({idx, -2.0 * c_n.real() * coeff});
        for (const auto& [idx, coeff] : im.terms)
            taylor.lin.terms.push_back({idx, -2.0 * c_n.imag() * coeff});
        taylor.lin.terms.push_back({ly.alpha(k), -0.5 * d});
        taylor.lin.terms.push_back({ly.eta(k), 0.5 * d});
        taylor.lin.constant = std::norm(c_n) + 0.25 * d * d -
                              taylor_slack(c_n, d, sub.alpha(k), sub.eta(k));
        prob.constraints.push_back(std::move(taylor));

        QuadConstraint eta_pos;
        add_single(eta_pos, ly.eta(k), -1.0, 0.0);
        prob.constraints.push_back(std::move(eta_pos));
        QuadConstraint alpha_pos;
        add_single(alpha_pos, ly.alpha(k), -1.0, 0.0);
        prob.constraints.push_back(std::move(alpha_pos));
    }

    Vec v0(prob.n);
    for (int s = 0; s < S; ++s) {
        v0(ly.re_t(s)) = sub.s_t(s).real();
        v0(ly.im_t(s)) = sub.s_t(s).imag();
        v0(ly.re_r(s)) = sub.s_r(s).real();
        v0(ly.im_r(s)) = sub.s_r(s).imag();
    }
    for (int k = 0; k < K; ++k) {
        v0(ly.eta(k)) = sub.eta(k);
        v0(ly.alpha(k)) = sub.alpha(k);
    }
    // Repair if the warm start drifted onto a boundary (the penalty pushes
    // |s| onto the unit circle, so the previous iterate can touch the modulus
    // constraint within rounding). Shrinking s by gamma relaxes the modulus
    // and interference constraints but tightens the Taylor signal bound,
    // which scales as (2*gamma - 1); eta must follow it or the repair
    // diverges.
    // The boundary touch is a rounding-scale event, so the shrink gap stays
    // tiny: past ~1e-5 the quadratic error term eta^2 * (1 - gamma)^2 in the
    // Taylor bound outgrows the constraint's slack and the repair diverges.
    Real shrink_gap = 1e-12;
    for (int attempt = 0; attempt < 60 && !prob.strictly_feasible(v0); ++attempt) {
        const Real gamma = 1.0 - shrink_gap;
        const Real eta_scale = (2.0 * gamma - 1.0) * (1.0 - 1e-9);
        for (int s = 0; s < S; ++s) {
            v0(ly.re_t(s)) = gamma * sub.s_t(s).real();
            v0(ly.im_t(s)) = gamma * sub.s_t(s).imag();
            v0(ly.re_r(s)) = gamma * sub.s_r(s).real();
            v0(ly.im_r(s)) = gamma * sub.s_r(s).imag();
        }
        for (int k = 0; k < K; ++k)
            v0(ly.eta(k)) = std::max(sub.eta(k) * eta_scale, 1e-300);
        shrink_gap = std::min(shrink_gap * 2.0, 1e-5);
    }

    const BarrierResult br = solve_barrier(prob, v0, bopts);

    PhaseSolution sol;
    sol.s_t.resize(S);
    sol.s_r.resize(S);
    for (int s = 0; s < S; ++s) {
        sol.s_t(s) = Complex(br.v(ly.re_t(s)), br.v(ly.im_t(s)));
        sol.s_r(s) = Complex(br.v(ly.re_r(s)), br.v(ly.im_r(s)));
    }
    sol.eta.resize(K);
    sol.alpha.resize(K);
    for (int k = 0; k < K; ++k) {
        sol.eta(k) = br.v(ly.eta(k));
        sol.alpha(k) = br.v(ly.alpha(k));
    }
    sol.objective = sub.penalized_objective(sol.s_t, sol.s_r, sol.eta);
    sol.converged = br.converged;
    return sol;
}

namespace {

Real max_modulus_violation(const CVec& s_t, const CVec& s_r) {
    Real worst = 0.0;
    for (int s = 0; s < s_t.size(); ++s)
        worst = std::max({worst, std::abs(std::abs(s_t(s)) - 1.0),
                          std::abs(std::abs(s_r(s)) - 1.0)});
    return worst;
}

}  // namespace

std::pair<StarRisState, ScaTrace> sca_phase(const ChannelRealization& chan,
                                            const StarRisState& ris, const BeamformingMatrix& w,
                                            Real noise_power, const ScaOptions& opts) {
    PhaseSubproblem sub = build_phase_subproblem(chan, ris, w, noise_power, opts);
    ScaTrace trace;
    Real prev = sub.penalized_objective(sub.s_t, sub.s_r, sub.eta);
    PhaseSolution sol;
    sol.s_t = sub.s_t;
    sol.s_r = sub.s_r;

    for (int it = 0; it < opts.max_iterations; ++it) {
        sol = solve_convex_subproblem(sub, opts.barrier);
        phase_sweep(sub, sol.s_t, sol.s_r);

        // Refresh the slacks to the true relaxed quantities; the convex step
        // guarantees eta <= gamma, so this never decreases the objective.
        const GainStats gs = phase_gain_stats(sub, sol.s_t, sol.s_r);
        Vec eta_true(sub.n_users);
        for (int k = 0; k < sub.n_users; ++k) eta_true(k) = gs.signal(k) / gs.interference(k);

        const Real obj = sub.penalized_objective(sol.s_t, sol.s_r, eta_true);
        trace.objective.push_back(obj);
        trace.modulus_violation.push_back(max_modulus_violation(sol.s_t, sol.s_r));
        ++trace.iterations;

        const Real frac = frac_increment(prev, obj);
        prev = obj;

        // Re-linearize at the solution (with interior margins for the next
        // barrier start).
        sub.s_t = sol.s_t;
        sub.s_r = sol.s_r;
        init_slacks(gs, sub.eta, sub.alpha);

        if (frac < opts.epsilon) {
            trace.converged = true;
            break;
        }
    }
    trace.final_modulus_violation = max_modulus_violation(sol.s_t, sol.s_r);

    // Relaxed-point sum rate straight from the slack refresh: eta is the true
    // SINR of the unprojected s.
    {
        const GainStats gs = phase_gain_stats(sub, sol.s_t, sol.s_r);
        trace.relaxed_sum_rate = 0;
        for (int k = 0; k < sub.n_users; ++k)
            trace.relaxed_sum_rate += std::log2(1.0 + gs.signal(k) / gs.interference(k));
    }

    StarRisState out = ris;
    for (int s = 0; s < chan.total_elems(); ++s) {
        out.theta_t(s) = std::arg(sol.s_t(s));
        out.theta_r(s) = std::arg(sol.s_r(s));
    }

    // Monotone safeguard on the true objective: keep the input state if the
    // hard unit-modulus projection lost more than the penalty bought.
    const Real before = evaluate_sinr(chan, ris, w, noise_power).sum_rate;
    const Real after = evaluate_sinr(chan, out, w, noise_power).sum_rate;
    trace.projected_sum_rate = after;
    if (after < before) return {ris, trace};
    return {out, trace};
}

// ---------------------------------------------------------------------------
// Amplitude subproblem: same scaffold with real variables a_t, a_r and the
// convex energy coupling; no penalty needed.

namespace {

struct AmpLayout {
    int S, K;
    int at(int s) const { return s; }
    int ar(int s) const { return S + s; }
    int a(int s, bool t_reg) const { return t_reg ? at(s) : ar(s); }
    int eta(int k) const { return 2 * S + k; }
    int alpha(int k) const { return 2 * S + K + k; }
    int n() const { return 2 * S + 2 * K; }
};

}  // namespace

std::pair<StarRisState, ScaTrace> sca_amplitude(const ChannelRealization& chan,
                                                const StarRisState& ris,
                                                const BeamformingMatrix& w, Real noise_power,
                                                const ScaOptions& opts) {
    const int K = chan.n_users, S = chan.total_elems();
    const AmpLayout ly{S, K};
    const Real inv_sigma = 1.0 / std::sqrt(noise_power);

    // u[k](i, s): coefficient of a^{chi(k)}_s in gain_ki, noise-normalized.
    std::vector<CMat> u(K, CMat(K, S));
    for (int k = 0; k < K; ++k) {
        const Vec& theta = chan.user_in_t_region(k) ? ris.theta_t : ris.theta_r;
        for (int i = 0; i < K; ++i) {
            const CVec hw = chan.h_equiv[k] * w.w.col(i);
            for (int s = 0; s < S; ++s)
                u[k](i, s) = std::polar(1.0, theta(s)) * hw(s) * inv_sigma;
        }
    }

    // Strictly interior amplitude start.
    Vec a0(2 * S);
    for (int s = 0; s < S; ++s) {
        Real at = std::clamp(ris.amp_t(s), 1e-6, 1.0 - 1e-6);
        Real ar = std::clamp(ris.amp_r(s), 1e-6, 1.0 - 1e-6);
        const Real e = at * at + ar * ar;
        if (e >= 1.0 - 1e-9) {
            const Real scale = std::sqrt((1.0 - 1e-7) / e);
            at *= scale;
            ar *= scale;
        }
        a0(ly.at(s)) = at;
        a0(ly.ar(s)) = ar;
    }

    auto gain = [&](int k, int i, const Vec& a) {
        Complex acc = 0.0;
        const bool t_reg = chan.user_in_t_region(k);
        for (int s = 0; s < S; ++s) acc += u[k](i, s) * a(ly.a(s, t_reg));
        return acc;
    };

    Vec eta(K), alpha(K);
    {
        GainStats gs;
        gs.signal.resize(K);
        gs.interference.resize(K);
        for (int k = 0; k < K; ++k) {
            Real interf = 1.0;
            for (int i = 0; i < K; ++i) {
                const Real p = std::norm(gain(k, i, a0));
                if (i == k)
                    gs.signal(k) = p;
                else
                    interf += p;
            }
            gs.interference(k) = interf;
        }
        init_slacks(gs, eta, alpha);
    }

    ScaTrace trace;
    Vec a = a0;
    Real prev = 0.0;
    for (int k = 0; k < K; ++k) prev += std::log2(1.0 + eta(k));

    for (int it = 0; it < opts.max_iterations; ++it) {
        BarrierProblem prob;
        prob.n = ly.n();
        prob.linear_obj = Vec::Zero(prob.n);
        for (int k = 0; k < K; ++k) prob.eta_indices.push_back(ly.eta(k));

        for (int s = 0; s < 2 * S; ++s) {
            QuadConstraint upper;  // a <= 1
            add_single(upper, s, 1.0, -1.0);
            prob.constraints.push_back(std::move(upper));
            QuadConstraint lower;  // a >= 0
            add_single(lower, s, -1.0, 0.0);
            prob.constraints.push_back(std::move(lower));
        }
        for (int s = 0; s < S; ++s) {
            QuadConstraint energy;  // a_t^2 + a_r^2 <= 1
            energy.sq_rows.push_back(LinExpr{{{ly.at(s), 1.0}}, 0.0});
            energy.sq_rows.push_back(LinExpr{{{ly.ar(s), 1.0}}, 0.0});
            energy.lin.constant = -1.0;
            prob.constraints.push_back(std::move(energy));
        }

        for (int k = 0; k < K; ++k) {
            const bool t_reg = chan.user_in_t_region(k);
            QuadConstraint interf;
            for (int i = 0; i < K; ++i) {
                if (i == k) continue;
                LinExpr re, im;
                for (int s = 0; s < S; ++s) {
                    re.terms.push_back({ly.a(s, t_reg), u[k](i, s).real()});
                    im.terms.push_back({ly.a(s, t_reg), u[k](i, s).imag()});
                }
                interf.sq_rows.push_back(std::move(re));
                interf.sq_rows.push_back(std::move(im));
            }
            interf.lin.terms.push_back({ly.alpha(k), -1.0});
            interf.lin.constant = 1.0;
            prob.constraints.push_back(std::move(interf));

            const Complex c_n = gain(k, k, a);
            const Real d = alpha(k) - eta(k);
            QuadConstraint taylor;
            taylor.sq_rows.push_back(LinExpr{{{ly.alpha(k), 0.5}, {ly.eta(k), 0.5}}, 0.0});
            for (int s = 0; s < S; ++s) {
                const Real coeff =
                    -2.0 * (c_n.real() * u[k](k, s).real() + c_n.imag() * u[k](k, s).imag());
                taylor.lin.terms.push_back({ly.a(s, t_reg), coeff});
            }
            taylor.lin.terms.push_back({ly.alpha(k), -0.5 * d});
            taylor.lin.terms.push_back({ly.eta(k), 0.5 * d});
            taylor.lin.constant = std::norm(c_n) + 0.25 * d * d -
                                  taylor_slack(c_n, d, alpha(k), eta(k));
            prob.constraints.push_back(std::move(taylor));

            QuadConstraint eta_pos;
            add_single(eta_pos, ly.eta(k), -1.0, 0.0);
            prob.constraints.push_back(std::move(eta_pos));
            QuadConstraint alpha_pos;
            add_single(alpha_pos, ly.alpha(k), -1.0, 0.0);
            prob.constraints.push_back(std::move(alpha_pos));
        }

        Vec v0(prob.n);
        v0.head(2 * S) = a;
        for (int k = 0; k < K; ++k) {
            v0(ly.eta(k)) = eta(k);
            v0(ly.alpha(k)) = alpha(k);
        }
        for (int attempt = 0; attempt < 60 && !prob.strictly_feasible(v0); ++attempt) {
            v0.head(2 * S) *= 0.999;
            for (int k = 0; k < K; ++k) {
                v0(ly.eta(k)) = std::max(v0(ly.eta(k)) * 0.99, 1e-12);
                v0(ly.alpha(k)) *= 1.01;
            }
        }

        const BarrierResult br = solve_barrier(prob, v0, opts.barrier);
        a = br.v.head(2 * S);
        for (int k = 0; k < K; ++k) {
            eta(k) = br.v(ly.eta(k));
            alpha(k) = br.v(ly.alpha(k));
        }

        Real obj = 0.0;
        for (int k = 0; k < K; ++k) obj += std::log2(1.0 + eta(k));
        trace.objective.push_back(obj);
        ++trace.iterations;
        const Real frac = frac_increment(prev, obj);
        prev = obj;
        if (frac < opts.epsilon) {
            trace.converged = true;
            break;
        }
    }

    StarRisState out = ris;
    for (int s = 0; s < S; ++s) {
        out.amp_t(s) = std::clamp(a(ly.at(s)), 0.0, 1.0);
        out.amp_r(s) = std::clamp(a(ly.ar(s)), 0.0, 1.0);
    }

    const Real before = evaluate_sinr(chan, ris, w, noise_power).sum_rate;
    const Real after = evaluate_sinr(chan, out, w, noise_power).sum_rate;
    if (after < before) return {ris, trace};
    return {out, trace};
}

// ---------------------------------------------------------------------------
// Precoder subproblem: effective channels fixed, convex power ball.

std::pair<BeamformingMatrix, ScaTrace> sca_precoder(const ChannelRealization& chan,
                                                    const StarRisState& ris,
                                                    const BeamformingMatrix& w_in, Real p_max,
                                                    Real noise_power, const ScaOptions& opts) {
    const int K = chan.n_users, S = chan.total_elems(), Nt = chan.n_tx;
    const Real inv_sigma = 1.0 / std::sqrt(noise_power);

    // g_k: effective channel row, noise-normalized; gain_ki = g_k . w_i.
    CMat gvec(K, Nt);
    for (int k = 0; k < K; ++k) {
        const bool t_reg = chan.user_in_t_region(k);
        Eigen::RowVectorXcd acc = Eigen::RowVectorXcd::Zero(Nt);
        for (int s = 0; s < S; ++s) acc += ris.coeff(s, t_reg) * chan.h_equiv[k].row(s);
        gvec.row(k) = acc * inv_sigma;
    }

    const int nz = 2 * Nt * K;
    auto re_idx = [&](int i, int n) { return i * 2 * Nt + n; };
    auto im_idx = [&](int i, int n) { return i * 2 * Nt + Nt + n; };
    const int eta0 = nz, alpha0 = nz + K;

    auto gain = [&](int k, int i, const Vec& z) {
        Complex acc = 0.0;
        for (int n = 0; n < Nt; ++n) {
            const Complex wv(z(re_idx(i, n)), z(im_idx(i, n)));
            acc += gvec(k, n) * wv;
        }
        return acc;
    };

    Vec z(nz);
    {
        CMat w0 = w_in.w;
        const Real p = w0.squaredNorm();
        if (p >= p_max * (1.0 - 1e-9)) w0 *= std::sqrt(p_max * (1.0 - 1e-7) / p);
        for (int i = 0; i < K; ++i)
            for (int n = 0; n < Nt; ++n) {
                z(re_idx(i, n)) = w0(n, i).real();
                z(im_idx(i, n)) = w0(n, i).imag();
            }
    }

    Vec eta(K), alpha(K);
    {
        GainStats gs;
        gs.signal.resize(K);
        gs.interference.resize(K);
        for (int k = 0; k < K; ++k) {
            Real interf = 1.0;
            for (int i = 0; i < K; ++i) {
                const Real p = std::norm(gain(k, i, z));
                if (i == k)
                    gs.signal(k) = p;
                else
                    interf += p;
            }
            gs.interference(k) = interf;
        }
        init_slacks(gs, eta, alpha);
    }

    ScaTrace trace;
    Real prev = 0.0;
    for (int k = 0; k < K; ++k) prev += std::log2(1.0 + eta(k));

    for (int it = 0; it < opts.max_iterations; ++it) {
        BarrierProblem prob;
        prob.n = nz + 2 * K;
        prob.linear_obj = Vec::Zero(prob.n);
        for (int k = 0; k < K; ++k) prob.eta_indices.push_back(eta0 + k);

        QuadConstraint power;
        for (int j = 0; j < nz; ++j) power.sq_rows.push_back(LinExpr{{{j, 1.0}}, 0.0});
        power.lin.constant = -p_max;
        prob.constraints.push_back(std::move(power));

        for (int k = 0; k < K; ++k) {
            QuadConstraint interf;
            for (int i = 0; i < K; ++i) {
                if (i == k) continue;
                LinExpr re, im;
                for (int n = 0; n < Nt; ++n) {
                    const Real gr = gvec(k, n).real(), gi = gvec(k, n).imag();
                    re.terms.push_back({re_idx(i, n), gr});
                    re.terms.push_back({im_idx(i, n), -gi});
                    im.terms.push_back({re_idx(i, n), gi});
                    im.terms.push_back({im_idx(i, n), gr});
                }
                interf.sq_rows.push_back(std::move(re));
                interf.sq_rows.push_back(std::move(im));
            }
            interf.lin.terms.push_back({alpha0 + k, -1.0});
            interf.lin.constant = 1.0;
            prob.constraints.push_back(std::move(interf));

            const Complex c_n = gain(k, k, z);
            const Real d = alpha(k) - eta(k);
            QuadConstraint taylor;
            taylor.sq_rows.push_back(LinExpr{{{alpha0 + k, 0.5}, {eta0 + k, 0.5}}, 0.0});
            for (int n = 0; n < Nt; ++n) {
                const Real gr = gvec(k, n).real(), gi = gvec(k, n).imag();
                // -2 Re(conj(c_n) * g_k . w_k)
                taylor.lin.terms.push_back(
                    {re_idx(k, n), -2.0 * (c_n.real() * gr + c_n.imag() * gi)});
                taylor.lin.terms.push_back(
                    {im_idx(k, n), -2.0 * (-c_n.real() * gi + c_n.imag() * gr)});
            }
            taylor.lin.terms.push_back({alpha0 + k, -0.5 * d});
            taylor.lin.terms.push_back({eta0 + k, 0.5 * d});
            taylor.lin.constant = std::norm(c_n) + 0.25 * d * d -
                                  taylor_slack(c_n, d, alpha(k), eta(k));
            prob.constraints.push_back(std::move(taylor));

            QuadConstraint eta_pos;
            add_single(eta_pos, eta0 + k, -1.0, 0.0);
            prob.constraints.push_back(std::move(eta_pos));
            QuadConstraint alpha_pos;
            add_single(alpha_pos, alpha0 + k, -1.0, 0.0);
            prob.constraints.push_back(std::move(alpha_pos));
        }

        Vec v0(prob.n);
        v0.head(nz) = z;
        for (int k = 0; k < K; ++k) {
            v0(eta0 + k) = eta(k);
            v0(alpha0 + k) = alpha(k);
        }
        for (int attempt = 0; attempt < 60 && !prob.strictly_feasible(v0); ++attempt) {
            v0.head(nz) *= 0.999;
            for (int k = 0; k < K; ++k) {
                v0(eta0 + k) = std::max(v0(eta0 + k) * 0.99, 1e-12);
                v0(alpha0 + k) *= 1.01;
            }
        }

        const BarrierResult br = solve_barrier(prob, v0, opts.barrier);
        z = br.v.head(nz);
        for (int k = 0; k < K; ++k) {
            eta(k) = br.v(eta0 + k);
            alpha(k) = br.v(alpha0 + k);
        }

        Real obj = 0.0;
        for (int k = 0; k < K; ++k) obj += std::log2(1.0 + eta(k));
        trace.objective.push_back(obj);
        ++trace.iterations;
        const Real frac = frac_increment(prev, obj);
        prev = obj;
        if (frac < opts.epsilon) {
            trace.converged = true;
            break;
        }
    }

    BeamformingMatrix out;
    out.w.resize(Nt, K);
    for (int i = 0; i < K; ++i)
        for (int n = 0; n < Nt; ++n) out.w(n, i) = Complex(z(re_idx(i, n)), z(im_idx(i, n)));

    const Real before = evaluate_sinr(chan, ris, w_in, noise_power).sum_rate;
    const Real after = evaluate_sinr(chan, ris, out, noise_power).sum_rate;
    if (after < before) return {w_in, trace};
    return {out, trace};
}

// ---------------------------------------------------------------------------
// Outer loop

void random_ao_init(const ChannelRealization& chan, const SystemConfig& cfg, Rng& rng,
                    StarRisState& ris, BeamformingMatrix& w) {
    ris = StarRisState::random_init(chan.total_elems(), rng);
    w = BeamformingMatrix::random_init(chan.n_tx, chan.n_users, cfg.p_max, rng);
}

AoResult ao_optimize(const ChannelRealization& chan, const SystemConfig& cfg,
                     const StarRisState& init_ris, const BeamformingMatrix& init_w,
                     const ScaOptions& opts) {
    AoResult res;
    res.ris = init_ris;
    res.w = init_w;
    Real prev = evaluate_sinr(chan, res.ris, res.w, cfg.noise_power).sum_rate;
    res.sum_rate_trace.push_back(prev);

    for (int outer = 0; outer < opts.ao_max_outer; ++outer) {
        auto [ris1, tr_p] = sca_phase(chan, res.ris, res.w, cfg.noise_power, opts);
        res.ris = ris1;
        res.modulus_violation = std::max(res.modulus_violation, tr_p.final_modulus_violation);
        auto [ris2, tr_a] = sca_amplitude(chan, res.ris, res.w, cfg.noise_power, opts);
        res.ris = ris2;
        auto [w1, tr_w] = sca_precoder(chan, res.ris, res.w, cfg.p_max, cfg.noise_power, opts);
        res.w = w1;
        res.subproblem_iterations += tr_p.iterations + tr_a.iterations + tr_w.iterations;

        const Real cur = evaluate_sinr(chan, res.ris, res.w, cfg.noise_power).sum_rate;
        res.sum_rate_trace.push_back(cur);
        ++res.outer_iterations;
        if (frac_increment(prev, cur) < opts.ao_epsilon) {
            res.converged = true;
            break;
        }
        prev = cur;
    }
    return res;
}

AoResult ao_exhaustive(const ChannelRealization& chan, const SystemConfig& cfg, int n_starts,
                       std::uint64_t seed, const ScaOptions& opts) {
    if (n_starts < 1) throw DomainError("ao_exhaustive: n_starts must be >= 1");
    AoResult best;
    Real best_rate = -1.0;
    for (int i = 0; i < n_starts; ++i) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
        StarRisState ris;
        BeamformingMatrix w;
        random_ao_init(chan, cfg, rng, ris, w);
        AoResult res = ao_optimize(chan, cfg, ris, w, opts);
        const Real rate = res.sum_rate_trace.back();
        if (rate > best_rate) {
            best_rate = rate;
            best = std::move(res);
        }
    }
    return best;
}

}  // namespace starris::sca
