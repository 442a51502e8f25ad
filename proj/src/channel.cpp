#include "starris/channel.hpp"

#include <cmath>

namespace starris {

Real path_loss_db(Real distance_m) {
    if (distance_m <= 0.0) throw DomainError("path_loss_db: distance must be positive");
    return 32.6 + 36.7 * std::log10(distance_m);
}

CVec steering_upa(Real azimuth, Real elevation, int n_elems, Real elem_spacing,
                  Real wavelength) {
    if (n_elems < 1) throw DomainError("steering_upa: n_elems must be >= 1");
    if (wavelength <= 0) throw DomainError("steering_upa: wavelength must be positive");
    CVec a(n_elems);
    const Real scale = 2.0 * kPi * elem_spacing / wavelength;
    for (int n = 0; n < n_elems; ++n) {
        const int i1 = n % 10;
        const int i2 = n / 10;
        const Real phase =
            scale * (i1 * std::sin(azimuth) * std::cos(elevation) + i2 * std::sin(elevation));
        a(n) = std::polar(1.0, phase);
    }
    return a;
}

CVec steering_ula(Real aod, int n_tx) {
    if (n_tx < 1) throw DomainError("steering_ula: n_tx must be >= 1");
    CVec a(n_tx);
    for (int n = 0; n < n_tx; ++n) a(n) = std::polar(1.0, kPi * n * std::sin(aod));
    return a;
}

void ChannelRealization::assemble_equivalent() {
    const int S = total_elems();
    h_equiv.assign(n_users, CMat(S, n_tx));
    for (int k = 0; k < n_users; ++k) {
        for (int l = 0; l < n_ris; ++l) {
            for (int m = 0; m < n_elems_per_ris; ++m) {
                const int s = l * n_elems_per_ris + m;
                h_equiv[k].row(s) = h(k, s) * g[l].row(m);
            }
        }
    }
}

namespace {

struct Pos {
    Real x, y, z;
};

Real dist(const Pos& a, const Pos& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                     (a.z - b.z) * (a.z - b.z));
}

// Azimuth/elevation of the direction a -> b.
void angles(const Pos& a, const Pos& b, Real& az, Real& el) {
    const Real dx = b.x - a.x, dy = b.y - a.y, dz = b.z - a.z;
    az = std::atan2(dy, dx);
    el = std::atan2(dz, std::sqrt(dx * dx + dy * dy));
}

}  // namespace

ChannelRealization sample_channels(const SystemConfig& cfg, std::uint64_t sample_index) {
    cfg.validate();
    Rng rng = Rng::substream(cfg.rng_seed, sample_index);

    const int K = cfg.n_users, L = cfg.n_ris, M = cfg.n_elems_per_ris, Nt = cfg.n_tx;
    ChannelRealization cr;
    cr.n_tx = Nt;
    cr.n_users = K;
    cr.n_ris = L;
    cr.n_elems_per_ris = M;
    cr.n_users_t = cfg.n_users_t_region;

    const Pos bs{0.0, 0.0, cfg.bs_height};
    std::vector<Pos> ris(L);
    for (int l = 0; l < L; ++l) ris[l] = Pos{10.0 * (l + 1), 0.0, cfg.ris_height};

    // Users are re-drawn per realization; first K_0 in the T rectangle.
    std::vector<Pos> users(K);
    for (int k = 0; k < K; ++k) {
        const Rect& r = k < cfg.n_users_t_region ? cfg.user_region_t : cfg.user_region_r;
        users[k] = Pos{rng.uniform(r.x_min, r.x_max), rng.uniform(r.y_min, r.y_max), 0.0};
    }

    const Real xi = cfg.rician_factor;
    const Real w_los = std::sqrt(xi / (xi + 1.0));
    const Real w_nlos = std::sqrt(1.0 / (xi + 1.0));

    cr.g.resize(L);
    for (int l = 0; l < L; ++l) {
        const Real kappa = std::pow(10.0, -path_loss_db(dist(bs, ris[l])) / 20.0);
        Real az_a, el_a, aod;
        angles(ris[l], bs, az_a, el_a);  // arrival direction at the RIS
        Real el_dummy;
        angles(bs, ris[l], aod, el_dummy);  // departure azimuth at the BS
        const CVec a_r = steering_upa(az_a, el_a, M, cfg.elem_spacing, cfg.carrier_wavelength);
        const CVec a_t = steering_ula(aod, Nt);
        CMat los = a_r * a_t.adjoint();
        CMat nlos(M, Nt);
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < Nt; ++n) nlos(m, n) = rng.cnormal();
        cr.g[l] = kappa * (w_los * los + w_nlos * nlos);
    }

    cr.h.resize(K, L * M);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            const Real kappa = std::pow(10.0, -path_loss_db(dist(ris[l], users[k])) / 20.0);
            Real az_d, el_d;
            angles(ris[l], users[k], az_d, el_d);
            const CVec a_r = steering_upa(az_d, el_d, M, cfg.elem_spacing, cfg.carrier_wavelength);
            for (int m = 0; m < M; ++m) {
                const Complex nlos = rng.cnormal();
                cr.h(k, l * M + m) = kappa * (w_los * a_r(m) + w_nlos * nlos);
            }
        }
    }

    cr.assemble_equivalent();
    return cr;
}

}  // namespace starris
