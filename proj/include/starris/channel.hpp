#pragma once

#include <vector>

#include "starris/config.hpp"
#include "starris/rng.hpp"

namespace starris {

// Free-space style distance attenuation, dB.
Real path_loss_db(Real distance_m);

// UPA response with the fixed 10-column row stride: element n (0-based here)
// maps to i1 = n % 10, i2 = n / 10.
CVec steering_upa(Real azimuth, Real elevation, int n_elems, Real elem_spacing,
                  Real wavelength);

// ULA response with half-wavelength spacing: entry n has phase
// pi * n * sin(aod).
CVec steering_ula(Real aod, int n_tx);

// One draw of all channels in the scenario. The equivalent channel follows
// the row convention: the stored N_t-row for element s = l*M + m and user k
// is h[k,s] * G_l.row(m), and every received-signal expression contracts it
// against the precoder with a plain (unconjugated) dot product.
struct ChannelRealization {
    int n_tx = 0, n_users = 0, n_ris = 0, n_elems_per_ris = 0, n_users_t = 0;

    std::vector<CMat> g;  // per RIS l: M x N_t BS->RIS channel G_l
    CMat h;               // K x (L*M), RIS->user channels, column s = l*M + m
    std::vector<CMat> h_equiv;  // per user k: (L*M) x N_t cascaded rows

    int total_elems() const { return n_ris * n_elems_per_ris; }
    bool user_in_t_region(int k) const { return k < n_users_t; }

    // Rebuild h_equiv from (g, h); called after construction and after load.
    void assemble_equivalent();
};

// Deterministic given (cfg, sample_index): geometry draw and fading draw both
// come from Rng::substream(cfg.rng_seed, sample_index).
ChannelRealization sample_channels(const SystemConfig& cfg,
                                   std::uint64_t sample_index);

}  // namespace starris
