#pragma once

#include "starris/channel.hpp"

namespace starris {

// Per-element transmission/reflection coefficients, flattened over surfaces:
// index s = l*M + m. Amplitudes are stored as a = sqrt(beta), the quantity
// that multiplies the channel; the energy constraint is a_t^2 + a_r^2 <= 1.
struct StarRisState {
    Vec theta_t, theta_r;  // phase angles, radians
    Vec amp_t, amp_r;      // amplitudes in [0, 1]

    int total_elems() const { return static_cast<int>(theta_t.size()); }

    Complex coeff(int s, bool t_region) const {
        return t_region ? std::polar(amp_t(s), theta_t(s)) : std::polar(amp_r(s), theta_r(s));
    }

    // Uniform random phases, equal energy split a_t = a_r = 1/sqrt(2).
    static StarRisState random_init(int total_elems, Rng& rng);
};

struct BeamformingMatrix {
    CMat w;  // N_t x K, column k serves user k

    static BeamformingMatrix random_init(int n_tx, int n_users, Real p_max, Rng& rng);
};

struct SinrReport {
    Vec sinr;       // linear, per user
    Vec rate;       // log2(1 + sinr), bits/s/Hz
    Real sum_rate;  // sum of rates
};

// Cascaded gain summed over all elements: sum_s phi_s^{chi(k)} h~_sk . w_j.
Complex effective_gain(const ChannelRealization& chan, const StarRisState& ris, int user_k,
                       const CMat& w, int precoder_j);

SinrReport evaluate_sinr(const ChannelRealization& chan, const StarRisState& ris,
                         const BeamformingMatrix& w, Real noise_power);

// Scales w to Frobenius norm sqrt(p_max). Throws on an all-zero input.
BeamformingMatrix project_power(const BeamformingMatrix& w, Real p_max);

struct FeasibilityReport {
    Real power_violation = 0;      // ||w||_F^2 - P_max, clamped at 0
    Real amp_range_violation = 0;  // max distance of any amplitude from [0, 1]
    Real energy_violation = 0;     // max of a_t^2 + a_r^2 - 1
    bool phases_finite = true;

    Real max_violation() const {
        return std::max({power_violation, amp_range_violation, energy_violation,
                         phases_finite ? 0.0 : 1.0});
    }
    bool feasible(Real tol = 1e-6) const { return max_violation() <= tol; }
};

FeasibilityReport check_feasibility(const StarRisState& ris, const BeamformingMatrix& w,
                                    Real p_max);

}  // namespace starris
