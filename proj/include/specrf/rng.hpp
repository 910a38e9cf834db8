#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace specrf {

// PCG32 (O'Neill, pcg-random.org, Apache-2.0 reference constants).
// Self-contained so every platform and compiler draws identical streams;
// std::mt19937 + std::*_distribution are not bit-portable across stdlibs.
class Pcg32 {
public:
    Pcg32() { seed(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL); }
    Pcg32(uint64_t initstate, uint64_t initseq) { seed(initstate, initseq); }

    void seed(uint64_t initstate, uint64_t initseq) {
        state_ = 0u;
        inc_ = (initseq << 1u) | 1u;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Unbiased bounded draw (Lemire-style rejection as in the PCG reference).
    uint32_t next_below(uint32_t bound) {
        uint32_t threshold = (-bound) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1).
    double next_double() { return next_u32() * 0x1.0p-32; }
    float next_float() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

    // Standard normal via Box-Muller (cached second variate).
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0, u2 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 1e-300);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// FNV-1a, used to derive independent named substreams from one user seed.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64_mix(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffULL;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stateless stream constructors: the generator for (seed, name, counters...) is
// a pure function of its arguments. Training never serializes RNG state; any
// consumer rebuilds the exact stream from (seed, step [, ray]).
inline Pcg32 substream(uint64_t seed, std::string_view name) {
    uint64_t h = fnv1a64(name);
    return Pcg32(fnv1a64_mix(h, seed), h | 1u);
}

inline Pcg32 substream(uint64_t seed, std::string_view name, uint64_t a) {
    uint64_t h = fnv1a64(name);
    return Pcg32(fnv1a64_mix(fnv1a64_mix(h, seed), a), h | 1u);
}

inline Pcg32 substream(uint64_t seed, std::string_view name, uint64_t a, uint64_t b) {
    uint64_t h = fnv1a64(name);
    return Pcg32(fnv1a64_mix(fnv1a64_mix(fnv1a64_mix(h, seed), a), b), h | 1u);
}

}  // namespace specrf
