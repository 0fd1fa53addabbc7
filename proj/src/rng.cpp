#include "avaccel/rng.hpp"

#include <cmath>
#include <numbers>

namespace avaccel {

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw ConfigError("uniform: empty range");
    }
    const double v = lo + (hi - lo) * uniform();
    // lo + (hi-lo)*u can round up to hi for narrow ranges.
    return v < hi ? v : std::nextafter(hi, lo);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw ConfigError("below: n must be positive");
    }
    // Rejection sampling keeps the result unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

Tensor rand_uniform(Rng& rng, const Shape& shape, Real lo, Real hi) {
    if (!(lo < hi)) {
        throw ConfigError("rand_uniform: lo must be below hi");
    }
    Tensor t(shape);
    for (Real& v : t.values()) v = static_cast<Real>(rng.uniform(lo, hi));
    return t;
}

Tensor rand_normal(Rng& rng, const Shape& shape, Real mu, Real sigma) {
    if (!(sigma > 0)) {
        throw ConfigError("rand_normal: sigma must be positive");
    }
    Tensor t(shape);
    for (Real& v : t.values()) v = static_cast<Real>(rng.normal(mu, sigma));
    return t;
}

}  // namespace avaccel
