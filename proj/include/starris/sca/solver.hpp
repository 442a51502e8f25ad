#pragma once

#include "starris/config.hpp"
#include "starris/sca/barrier.hpp"
#include "starris/system_core.hpp"

namespace starris::sca {

struct ScaOptions {
    Real penalty_c = 1e4;  // unit-modulus penalty weight C
    Real epsilon = 1e-3;   // fractional objective increment stop
    int max_iterations = 200;
    Real ao_epsilon = 1e-3;
    int ao_max_outer = 50;
    BarrierOptions barrier{};
};

struct ScaTrace {
    std::vector<Real> objective;  // per-iteration (penalized, for the phase solve)
    std::vector<Real> modulus_violation;
    int iterations = 0;
    bool converged = false;
    Real final_modulus_violation = 0.0;
    // Phase solver only: sum rate of the relaxed solution (moduli free) and of
    // its hard unit-modulus projection, for penalty-effectiveness audits.
    Real relaxed_sum_rate = 0.0;
    Real projected_sum_rate = 0.0;
};

// ---------------------------------------------------------------------------
// Phase-shift subproblem: variables s^T, s^R on the unit disc, slack (eta,
// alpha) per user. gain_ki = t_ki^H s^{chi(k)} with t_ki =
// conj(diag(h_k) diag(a^{chi(k)}) G w_i), stacked over surfaces.

struct PhaseSubproblem {
    int n_users = 0, total_elems = 0, n_users_t = 0;
    std::vector<CMat> t;  // t[k]: K x S, row i = t_ki
    Real noise_power = 0, penalty_c = 0;
    // linearization point
    CVec s_t, s_r;
    Vec eta, alpha;

    bool user_in_t(int k) const { return k < n_users_t; }
    const CVec& region_s(int k) const { return user_in_t(k) ? s_t : s_r; }

    // Penalized objective of the relaxed problem at a candidate point.
    Real penalized_objective(const CVec& st, const CVec& sr, const Vec& eta_v) const;
};

PhaseSubproblem build_phase_subproblem(const ChannelRealization& chan, const StarRisState& ris,
                                       const BeamformingMatrix& w, Real noise_power,
                                       const ScaOptions& opts);

// Surrogate diagnostics for one user's SINR constraint, used by the
// majorization/gradient tests.
struct SurrogateEval {
    Real g_true = 0;  // -|t_kk^H s|^2 + alpha * eta
    Real g_hat = 0;   // convex Taylor upper bound of g_true
    Vec grad_hat;     // d g_hat / d [Re s_chi ; Im s_chi ; eta ; alpha]
    Real penalty_true = 0;
    Real penalty_lin = 0;  // linearized penalty, a global under-estimator
};

SurrogateEval taylor_surrogate(const PhaseSubproblem& sub, int k, const CVec& s_t,
                               const CVec& s_r, Real eta_k, Real alpha_k);

struct PhaseSolution {
    CVec s_t, s_r;
    Vec eta, alpha;
    Real objective = 0;  // penalized objective at the solution
    bool converged = false;
};

PhaseSolution solve_convex_subproblem(const PhaseSubproblem& sub, const BarrierOptions& bopts);

// ---------------------------------------------------------------------------
// Sub-solvers (one successive-convexification scaffold shared by all three
// variable blocks).
// Each returns the updated block plus its SCA trace, and never returns a
// state whose true sum rate is below the input's.

std::pair<StarRisState, ScaTrace> sca_phase(const ChannelRealization& chan,
                                            const StarRisState& ris, const BeamformingMatrix& w,
                                            Real noise_power, const ScaOptions& opts);

std::pair<StarRisState, ScaTrace> sca_amplitude(const ChannelRealization& chan,
                                                const StarRisState& ris,
                                                const BeamformingMatrix& w, Real noise_power,
                                                const ScaOptions& opts);

std::pair<BeamformingMatrix, ScaTrace> sca_precoder(const ChannelRealization& chan,
                                                    const StarRisState& ris,
                                                    const BeamformingMatrix& w, Real p_max,
                                                    Real noise_power, const ScaOptions& opts);

// ---------------------------------------------------------------------------
// Alternating outer loop: phase -> amplitude -> precoder.

struct AoResult {
    StarRisState ris;
    BeamformingMatrix w;
    std::vector<Real> sum_rate_trace;  // after each full sweep, [0] = initial
    int outer_iterations = 0;
    bool converged = false;
    Real modulus_violation = 0.0;  // worst over sweeps
    int subproblem_iterations = 0;  // total inner SCA iterations
};

AoResult ao_optimize(const ChannelRealization& chan, const SystemConfig& cfg,
                     const StarRisState& init_ris, const BeamformingMatrix& init_w,
                     const ScaOptions& opts);

// Random feasible initialization for the AO loop.
void random_ao_init(const ChannelRealization& chan, const SystemConfig& cfg, Rng& rng,
                    StarRisState& ris, BeamformingMatrix& w);

// Best of n_starts independent AO runs; per-start RNG substreams of `seed`;
// ties break toward the lowest start index.
AoResult ao_exhaustive(const ChannelRealization& chan, const SystemConfig& cfg, int n_starts,
                       std::uint64_t seed, const ScaOptions& opts);

}  // namespace starris::sca
