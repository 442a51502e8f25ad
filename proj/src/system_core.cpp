#include "starris/system_core.hpp"

namespace starris {

StarRisState StarRisState::random_init(int total_elems, Rng& rng) {
    StarRisState st;
    st.theta_t.resize(total_elems);
    st.theta_r.resize(total_elems);
    for (int s = 0; s < total_elems; ++s) {
        st.theta_t(s) = rng.uniform(0.0, 2.0 * kPi);
        st.theta_r(s) = rng.uniform(0.0, 2.0 * kPi);
    }
    st.amp_t = Vec::Constant(total_elems, 1.0 / std::sqrt(2.0));
    st.amp_r = st.amp_t;
    return st;
}

BeamformingMatrix BeamformingMatrix::random_init(int n_tx, int n_users, Real p_max, Rng& rng) {
    BeamformingMatrix bf;
    bf.w.resize(n_tx, n_users);
    for (int k = 0; k < n_users; ++k)
        for (int n = 0; n < n_tx; ++n) bf.w(n, k) = rng.cnormal();
    return project_power(bf, p_max);
}

Complex effective_gain(const ChannelRealization& chan, const StarRisState& ris, int user_k,
                       const CMat& w, int precoder_j) {
    const int S = chan.total_elems();
    if (ris.total_elems() != S)
        throw DimensionError("effective_gain: RIS element axis mismatch (state " +
                             std::to_string(ris.total_elems()) + ", channel " + std::to_string(S) +
                             ")");
    if (w.rows() != chan.n_tx)
        throw DimensionError("effective_gain: precoder antenna axis mismatch (w rows " +
                             std::to_string(w.rows()) + ", channel n_tx " +
                             std::to_string(chan.n_tx) + ")");
    const bool in_t = chan.user_in_t_region(user_k);
    const CVec hw = chan.h_equiv[user_k] * w.col(precoder_j);  // per-element h~_sk . w_j
    Complex acc = 0.0;
    for (int s = 0; s < S; ++s) acc += ris.coeff(s, in_t) * hw(s);
    return acc;
}

SinrReport evaluate_sinr(const ChannelRealization& chan, const StarRisState& ris,
                         const BeamformingMatrix& bf, Real noise_power) {
    const int K = chan.n_users;
    SinrReport rep;
    rep.sinr.resize(K);
    rep.rate.resize(K);
    rep.sum_rate = 0.0;
    for (int k = 0; k < K; ++k) {
        Real signal = 0.0, interference = 0.0;
        for (int j = 0; j < K; ++j) {
            const Real p = std::norm(effective_gain(chan, ris, k, bf.w, j));
            if (j == k)
                signal = p;
            else
                interference += p;
        }
        rep.sinr(k) = signal / (interference + noise_power);
        rep.rate(k) = std::log2(1.0 + rep.sinr(k));
        rep.sum_rate += rep.rate(k);
    }
    return rep;
}

BeamformingMatrix project_power(const BeamformingMatrix& bf, Real p_max) {
    const Real norm = bf.w.norm();
    if (norm <= 0.0) throw DomainError("project_power: all-zero precoder has no direction");
    BeamformingMatrix out;
    out.w = bf.w * (std::sqrt(p_max) / norm);
    return out;
}

FeasibilityReport check_feasibility(const StarRisState& ris, const BeamformingMatrix& bf,
                                    Real p_max) {
    FeasibilityReport rep;
    rep.power_violation = std::max(0.0, bf.w.squaredNorm() - p_max);
    for (int s = 0; s < ris.total_elems(); ++s) {
        for (Real a : {ris.amp_t(s), ris.amp_r(s)}) {
            rep.amp_range_violation = std::max({rep.amp_range_violation, -a, a - 1.0});
        }
        rep.energy_violation = std::max(
            rep.energy_violation,
            ris.amp_t(s) * ris.amp_t(s) + ris.amp_r(s) * ris.amp_r(s) - 1.0);
        if (!std::isfinite(ris.theta_t(s)) || !std::isfinite(ris.theta_r(s)))
            rep.phases_finite = false;
    }
    rep.amp_range_violation = std::max(0.0, rep.amp_range_violation);
    rep.energy_violation = std::max(0.0, rep.energy_violation);
    return rep;
}

}  // namespace starris
