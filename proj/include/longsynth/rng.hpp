#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace longsynth {

// SplitMix64 finalizer, used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a root seed and one or more
// stream identifiers. Used so that per-user / per-query / per-candidate
// randomness does not depend on scheduling order or thread count.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x6a09e667f3bcc909ULL));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t substream) {
    return derive_seed(derive_seed(root, stream), substream);
}

inline std::uint64_t hash_string(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic random engine. All distributions are implemented here
// rather than with <random> adaptors so that sampled values are identical
// across standard libraries and platforms for a given seed.
class RandomEngine {
public:
    explicit RandomEngine(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t limit = max - max % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller (two uniforms per draw, no cached state).
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Samples an index proportional to the given non-negative weights.
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("categorical: negative weight");
            total += w;
        }
        if (total <= 0.0) throw std::invalid_argument("categorical: zero total weight");
        const double r = uniform01() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (r < acc) return i;
        }
        return weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_below(i)]);
        }
    }

    // k distinct indices from [0, n), in increasing order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(idx[i], idx[i + uniform_below(n - i)]);
        }
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        return idx;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace longsynth
