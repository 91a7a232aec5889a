#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dvsnet {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stateless counter-based generator: the output depends only on the key
/// words, so any evaluation order gives identical draws.
constexpr std::uint64_t counter_hash(std::uint64_t key, std::uint64_t counter,
                                     std::uint64_t lane = 0) {
    return mix64(mix64(key ^ mix64(counter)) + lane * 0xd1b54a32d192ed03ULL);
}

/// Independent child seed for stream `stream` of `seed`.
constexpr std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller from two counter draws.
inline double counter_normal(std::uint64_t key, std::uint64_t counter) {
    const double u1 = 1.0 - to_unit(counter_hash(key, counter, 0));  // (0, 1]
    const double u2 = to_unit(counter_hash(key, counter, 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Small sequential generator for samplers (xoshiro-style state is overkill
/// here; SplitMix64 stepping is portable and reproducible everywhere).
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, bound) by rejection; no modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t r;
        do r = (*this)();
        while (r >= limit);
        return r % bound;
    }

    double unit() { return to_unit((*this)()); }

    double normal() {
        const double u1 = 1.0 - unit();
        const double u2 = unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace dvsnet
