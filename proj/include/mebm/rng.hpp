#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mebm {

// splitmix64; used for seed derivation and counter-based hashing.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream seed from (seed, label, index). Every
// randomized stage (init, shuffle, jitter, dropout, synth) pulls its seed
// through this so changing one stage never perturbs another.
inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index = 0) {
    uint64_t h = splitmix64(seed);
    for (char c : label) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    return splitmix64(h ^ splitmix64(index));
}

// xoshiro256** seeded via splitmix64. Self-contained so streams are
// reproducible independent of the standard library implementation.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& word : s_) {
            x = splitmix64(x);
            word = x;
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n).
    uint64_t bounded(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t threshold = -n % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(bounded(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Standard normal via Box-Muller; no rejection, so consumption per call
    // is fixed and streams stay aligned across platforms.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace mebm
