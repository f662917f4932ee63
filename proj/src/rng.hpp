#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"

namespace ub {

// Seedable RNG. The engine is std::mt19937_64 (bit-exact by the standard);
// distributions are implemented here instead of <random> so that the output
// stream is identical on every platform and standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, bound), bound > 0. Rejection sampling keeps the
    // result unbiased.
    std::uint64_t uniform_below(std::uint64_t bound) {
        if (bound == 0) throw ContractViolation("Rng::uniform_below: bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % bound;
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) throw ContractViolation("Rng::uniform_int: empty range");
        return lo + static_cast<std::int64_t>(
                        uniform_below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    // Uniform double in [0, 1) with 53 bits of entropy.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // k distinct values from [0, n), in selection order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n)
            throw ContractViolation("Rng::sample_without_replacement: k > n");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

    // Derived stream for per-key work (e.g. one stream per user).
    static Rng derive(std::uint64_t seed, const std::string& key) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : key) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return Rng(splitmix64(seed ^ h));
    }

    static Rng derive(std::uint64_t seed, std::uint64_t key) {
        return Rng(splitmix64(seed ^ splitmix64(key)));
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace ub
