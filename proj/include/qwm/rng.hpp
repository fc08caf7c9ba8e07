#pragma once

// Counter-based random numbers: every draw is a pure function of
// (key, counter), so per-atom streams give identical results for any
// partition of the atoms across threads.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace qwm::rng {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t stream) {
    return mix(mix(key) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8bb84b93962eacc9ULL));
}

/// Uniform in the open interval (0, 1).
constexpr double uniform(std::uint64_t key, std::uint64_t counter) {
    const std::uint64_t bits = derive(key, counter) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Two independent standard normals via Box-Muller on counters (2c, 2c+1).
inline std::pair<double, double> normal_pair(std::uint64_t key, std::uint64_t counter) {
    const double u1 = uniform(key, 2 * counter);
    const double u2 = uniform(key, 2 * counter + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

/// Poisson variate; inversion for small means, rounded normal above 1e3.
inline std::uint64_t poisson(std::uint64_t key, std::uint64_t counter, double mean) {
    if (!(mean > 0.0)) return 0;
    if (mean > 1e3) {
        const double z = normal_pair(key, counter).first;
        const double v = std::round(mean + std::sqrt(mean) * z);
        return v < 0.0 ? 0 : static_cast<std::uint64_t>(v);
    }
    const double u = uniform(derive(key, 0x5eed), counter);
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u > cdf && k < 100000) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

} // namespace qwm::rng
