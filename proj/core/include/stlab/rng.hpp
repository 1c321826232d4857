#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace stlab {

/// Deterministic seeded generator: xoshiro256++ with splitmix64 state
/// expansion. Independent streams are derived from (seed, stream) so that
/// scenario generation parallelizes without coordination.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) {
        uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        for (auto& word : s_) word = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Box-Muller; consumes exactly two uniforms per pair, no rejection.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        // avoid log(0)
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }

    /// Counts unit-exponential arrivals until their sum exceeds lambda.
    /// O(lambda), no underflow for the rates used here (lambda <= ~1e4).
    int64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        int64_t k = 0;
        double acc = 0.0;
        for (;;) {
            double u = uniform01();
            while (u <= 0.0) u = uniform01();
            acc += -std::log(u);
            if (acc >= lambda) return k;
            ++k;
        }
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // multiply-shift; bias is negligible for n << 2^64 and determinism
        // is what matters here
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * std::numbers::pi);
    if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
    return w;
}

}  // namespace stlab
