#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace minred {

/// SplitMix64 finalizer. Used as the mixing function for stream derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives the seed of a named child stream from a parent seed.
///
/// Streams are addressed by (parent, tag, index) so that adding a new consumer
/// never shifts the numbers drawn by an existing one.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                    std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(parent ^ fnv1a(tag)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
    return Engine{derive_seed(root, tag, index)};
}

/// Uniform real in [0, 1) with a fixed construction, so draws are identical
/// across standard library implementations.
inline double uniform01(Engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by modulo with rejection of the biased tail.
inline std::size_t uniform_index(Engine& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

/// Inverse-CDF draw from a discrete distribution. Falls back to the last
/// positive entry when rounding leaves the cumulative sum short of u.
inline std::size_t sample_discrete(Engine& rng, std::span<const double> probs) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

}  // namespace minred
