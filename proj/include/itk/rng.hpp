#pragma once

#include <cstdint>

namespace itk {

// SplitMix64: tiny, fast, and bit-reproducible across platforms.
// We avoid std::uniform_*_distribution since its algorithm is
// implementation-defined and the artifact promises bit-identical runs.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Multiply-shift rejection-free mapping; bias is < 2^-64 * n,
        // negligible for the small n used here.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (deterministic, no cached spare).
    double next_gaussian();

private:
    std::uint64_t state_;
};

}  // namespace itk
