#pragma once
// Deterministic random numbers. The engine is std::mt19937_64 (bit-stable by
// the ISO spec); the distributions are hand-rolled because the std::*_distribution
// classes are not portable across standard libraries, and the determinism
// contracts here require stable streams everywhere.
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tfw {

struct Rng {
    std::mt19937_64 eng;
    bool have_spare = false;
    double spare = 0.0;

    explicit Rng(uint64_t seed) : eng(seed) {}

    uint64_t next_u64() { return eng(); }

    // uniform in [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n); rejection sampling keeps it unbiased
    int64_t uniform_int(int64_t n) {
        if (n <= 0) return 0;
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = eng();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    // standard normal via Box-Muller, caching the second value
    double normal() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare = r * std::sin(a);
        have_spare = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates permutation of 0..n-1
    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> p(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = uniform_int(i + 1);
            std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
        }
        return p;
    }
};

// splitmix64 finalizer; used to derive independent seeds from (master, stream ids)
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t seed_for(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = mix64(master);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

}  // namespace tfw
