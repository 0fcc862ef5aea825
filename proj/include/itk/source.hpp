#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace itk {

/// A finite probability distribution over abstract items.
///
/// Optionally carries exact dyadic exponents (p_i = 2^-e_i) so theorem
/// demos on dyadic distributions stay drift-free.
struct DiscreteSource {
    std::vector<double> probs;
    std::optional<std::vector<int>> dyadic_exponents;  // p_i == 2^-e_i when set

    std::size_t size() const { return probs.size(); }
    bool is_dyadic() const { return dyadic_exponents.has_value(); }

    // Throws ValidationError unless: >= 2 items, all strictly positive,
    // sum within 1e-9 of 1.
    void validate() const;
};

// H_base(src) = sum_i -p_i * log_base(p_i), in code symbols.
double entropy(const DiscreteSource& src, int base);

// The proof's geometric construction: p(j) = 2^-j for j = 1..2^M - 1,
// with the last item duplicated so the mass sums exactly to 1.
// M in [1, 10]; beyond that the smallest probability underflows a double.
DiscreteSource geometric_source(int m);

// Parses "geometric:M" or a comma-separated list of decimals.
DiscreteSource parse_source(const std::string& text);

constexpr int kSignalLength = 64;
constexpr int kMaxSegments = 8;

/// Piecewise-constant synthetic signal, the training-side data sample.
struct ToySignal {
    std::vector<double> values;  // length 64, each in [-1, 1]
    int segment_count = 1;       // in [1, 8]
    std::uint64_t seed = 0;
};

// Deterministic given (seed, noise_sigma): segment_count uniform in [1, 8],
// change points distinct uniform, levels uniform in [-1, 1], Gaussian noise
// added then clamped.
ToySignal sample_signal(std::uint64_t seed, double noise_sigma = 0.01);

// Same, with the segment count pinned (used by complexity-sweep tests).
ToySignal sample_signal_with_segments(std::uint64_t seed, int segment_count,
                                      double noise_sigma = 0.01);

}  // namespace itk
