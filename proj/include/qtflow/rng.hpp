#pragma once

#include <cstdint>

namespace qtflow {

// splitmix64: the named 64-bit PRNG behind every seeded random field.
// Bit-exact across platforms, which the determinism guarantees rely on.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [-1, 1).
    double symmetric() {
        return 2.0 * (next() >> 11) * 0x1.0p-53 - 1.0;
    }
};

}  // namespace qtflow
