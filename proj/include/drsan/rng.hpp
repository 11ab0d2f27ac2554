#pragma once

#include <cstdint>
#include <random>

namespace drsan {

// Deterministic random source. All draws are derived from raw mt19937_64
// output with fixed bit manipulation, so a seed produces the same stream on
// every platform and build (std::uniform_* distributions make no such
// guarantee).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // Rejection sampling over the largest multiple of bound to avoid
        // modulo bias.
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % bound;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return double(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace drsan
