// Seeded RNG utilities. All randomness in the library flows through these
// helpers so that trajectories are reproducible bit-for-bit from a single
// master seed. Distributions are hand-rolled: the standard library leaves
// normal/uniform implementations unspecified across versions.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace unmt {

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (base, tag). Used to keep model
// init, data order, noise and dropout streams decoupled from each other.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(base ^ h);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t n) {
    return splitmix64(derive_seed(base, tag) + 0x9e3779b97f4a7c15ULL * (n + 1));
}

inline Rng make_rng(uint64_t base, std::string_view tag) {
    return Rng(derive_seed(base, tag));
}

inline double rand_uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rand_uniform(rng);
}

inline double rand_normal(Rng& rng) {
    // Box-Muller, no cached spare (keeps the stream state trivial).
    double u1 = rand_uniform(rng);
    double u2 = rand_uniform(rng);
    while (u1 <= 0.0) u1 = rand_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Uniform integer in [lo, hi] inclusive, by rejection.
inline int64_t rand_int(Rng& rng, int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x = rng();
    while (x >= limit) x = rng();
    return lo + static_cast<int64_t>(x % span);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rand_int(rng, 0, static_cast<int64_t>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

// Random permutation of [0, n).
inline std::vector<size_t> rand_perm(size_t n, Rng& rng) {
    std::vector<size_t> p(n);
    for (size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p, rng);
    return p;
}

}  // namespace unmt
