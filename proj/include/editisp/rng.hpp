#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "editisp/errors.hpp"

namespace editisp {

namespace detail {

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random source. mt19937_64 is fully specified by the
/// standard; all distributions are hand-rolled on top of its raw output so
/// that sequences are reproducible across platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::mix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer on the inclusive range [lo, hi].
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw ArgumentError("uniform_int: empty range");
        const auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        auto idx = static_cast<std::uint64_t>(uniform01() * static_cast<double>(span));
        if (idx >= span) idx = span - 1;
        return lo + static_cast<int>(idx);
    }

    /// Standard normal via Box-Muller (no spare caching).
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent child stream derived from the construction seed. Children
    /// do not depend on how far this generator has advanced.
    Rng child(std::uint64_t stream) const {
        return Rng(detail::mix64(seed_ ^ (stream * 0xD1B54A32D192ED03ULL + 0x63652362ULL)));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace editisp
