// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace croprl::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic stream split: one master seed fans out to independent
/// substreams addressed by (a, b), so per-rollout streams do not depend on
/// evaluation order.
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= a * 0xFF51AFD7ED558CCDULL;
    h ^= splitmix64(s);
    s ^= b * 0xC4CEB9FE1A85EC53ULL;
    h ^= splitmix64(s);
    return h;
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return std::mt19937_64(mix(seed, a, b));
}

/// Uniform double in [0, 1) built from the top 53 bits; identical across
/// standard library implementations, unlike uniform_real_distribution.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline int uniform_int(std::mt19937_64& g, int n) {
    return static_cast<int>(g() % static_cast<std::uint64_t>(n));
}

}  // namespace croprl::rng
