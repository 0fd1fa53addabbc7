#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "avaccel/tensor.hpp"

namespace avaccel {

/**
 * Deterministic pseudo-random source: xoshiro256** (Blackman & Vigna, 2018)
 * with its 256-bit state seeded by four successive SplitMix64 outputs of the
 * 64-bit seed.
 *
 * Stream definitions, so any implementation can reproduce them:
 *   next_u64()  xoshiro256** output
 *   uniform()   (next_u64() >> 11) * 2^-53, in [0, 1)
 *   normal()    Box-Muller on two uniforms u1, u2:
 *               r = sqrt(-2 ln(1 - u1)), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2);
 *               z0 is returned and z1 cached for the next call.
 *
 * Single owner; copy it to fork an identical stream.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    double normal(double mu, double sigma) { return mu + sigma * normal(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// FNV-1a 64-bit over raw bytes; used for seed derivation and dataset hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

Tensor rand_uniform(Rng& rng, const Shape& shape, Real lo, Real hi);
Tensor rand_normal(Rng& rng, const Shape& shape, Real mu, Real sigma);

}  // namespace avaccel
