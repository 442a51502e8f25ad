#pragma once

#include <cstdint>
#include <cmath>

#include "starris/common.hpp"

namespace starris {

// Counter-based generator: the state sequence is a pure function of
// (seed, stream). Substream i of a dataset run is substream(seed, i), so
// serial and parallel generation produce the same bits. All draws go through
// hand-rolled Box-Muller / division so outputs are identical across
// platforms and standard libraries.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : state_(seed) { next(); }

    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ mix(stream + 0x9e3779b97f4a7c15ull));
        return r;
    }

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform in [0, 1).
    Real uniform() { return static_cast<Real>(next() >> 11) * 0x1.0p-53; }

    Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call; the pair's second
    // half is cached).
    Real normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        Real u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const Real u2 = uniform();
        const Real r = std::sqrt(-2.0 * std::log(u1));
        cached_ = r * std::sin(2.0 * kPi * u2);
        has_cached_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    // CN(0, 1): real and imaginary parts each N(0, 1/2).
    Complex cnormal() {
        const Real s = std::sqrt(0.5);
        const Real re = normal();
        const Real im = normal();
        return {s * re, s * im};
    }

   private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    bool has_cached_ = false;
    Real cached_ = 0.0;
};

}  // namespace starris
