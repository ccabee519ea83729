#pragma once

#include <cstdint>
#include <random>

namespace qkfp {

/// 64-bit LCG, state' = 6364136223846793005 * state + 1442695040888963407 (mod 2^64).
/// uniform() = (state' >> 11) * 2^-53. Bit-exact in any language with
/// wrapping 64-bit unsigned arithmetic.
class Lcg64 {
public:
    using Engine = std::linear_congruential_engine<std::uint64_t, 6364136223846793005ULL,
                                                   1442695040888963407ULL, 0ULL>;

    explicit Lcg64(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    Engine engine_;
};

} // namespace qkfp
