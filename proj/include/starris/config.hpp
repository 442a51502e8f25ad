#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "starris/common.hpp"

namespace starris {

// Axis-aligned rectangle in the (x, y) ground plane, meters.
struct Rect {
    Real x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    Real area() const { return (x_max - x_min) * (y_max - y_min); }
};

// Full physical-layer scenario description. All powers are linear watts
// internally; the config file takes dBm and converts once at parse time.
struct SystemConfig {
    int n_tx = 16;             // BS antennas N_t
    int n_users = 8;           // K
    int n_ris = 4;             // L STAR-RIS surfaces
    int n_elems_per_ris = 4;   // M elements per surface
    int n_users_t_region = 4;  // K_0, first K_0 users in the T region

    Real p_max = dbm_to_watt(30.0);        // transmit power budget, watts
    Real noise_power = dbm_to_watt(-120.0);  // sigma^2, watts
    Real rician_factor = 10.0;             // xi
    Real carrier_wavelength = 0.1;         // lambda, meters
    Real elem_spacing = 0.05;              // d_RIS, meters (lambda/2 default)
    Real bs_height = 10.0;                 // d_H, meters
    Real ris_height = 5.0;                 // d_R, meters

    Rect user_region_t{20.0, 30.0, 20.0, 30.0};
    Rect user_region_r{-30.0, -20.0, 20.0, 30.0};

    std::uint64_t rng_seed = 1;

    int total_elems() const { return n_ris * n_elems_per_ris; }

    // Throws DomainError if any invariant is broken.
    void validate() const;

    // Plain-text `key = value` schema; '#' starts a comment. Unknown keys are
    // an error so typos do not silently fall back to defaults.
    static SystemConfig parse(std::istream& in);
    static SystemConfig load(const std::string& path);
    void write(std::ostream& out) const;
};

}  // namespace starris
