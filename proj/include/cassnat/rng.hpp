// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cassnat {

// Counter-based pseudo-random values. Every draw is a pure function of the
// key material, so any run is reproducible from (seed, step, site) without
// carrying generator state through checkpoints.
namespace prng {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
    return mix(mix(a, b), c);
}

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return mix(mix(a, b, c), d);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform(uint64_t key, uint64_t idx) {
    return static_cast<double>(mix(key, idx) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; idx selects an independent draw.
inline double normal(uint64_t key, uint64_t idx) {
    double u1 = uniform(mix(key, 0x6e6f726d31ULL), idx);
    double u2 = uniform(mix(key, 0x6e6f726d32ULL), idx);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace prng

// Small sequential generator over the counter-based core, for shuffles and
// data synthesis where a stream is more natural than explicit indices.
class Rng {
public:
    explicit Rng(uint64_t key) : key_(key) {}

    uint64_t next_u64() { return prng::mix(key_, counter_++); }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace cassnat
