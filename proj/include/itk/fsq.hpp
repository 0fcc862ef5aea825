#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace itk {

/// Finite-scalar-quantization grid: one level count per latent dimension.
/// The implicit codebook is the product grid over [-1, 1].
struct FsqConfig {
    std::vector<int> levels;  // each >= 2

    std::size_t dims() const { return levels.size(); }
    std::uint64_t codebook_size() const;
    // bits needed to serialize one token index: ceil(log2(codebook_size))
    int serialized_bits() const;
    // exact log2(codebook_size), used by the rate metrics
    double exact_bits() const;

    void validate() const;
};

// The reference configuration: levels [8, 8, 8, 5, 5, 5], codebook size 64000.
FsqConfig default_fsq_config();

/// One quantized token: digit_i in [0, levels_i).
struct TokenCode {
    std::vector<int> digits;
};

// Clamp each component to [-1, 1], then snap to the nearest grid value
// v(c) = 2c/(L-1) - 1; exact midpoints resolve to the higher digit.
TokenCode quantize(std::span<const double> latent, const FsqConfig& config);

// Component i of the result is 2 * digit_i / (L_i - 1) - 1.
std::vector<double> dequantize(const TokenCode& code, const FsqConfig& config);

// Training-time surrogate for quantize-then-dequantize: plain clamp to
// [-1, 1]. The straight-through rule makes its Jacobian (identity inside,
// zero outside) the gradient of the real path.
double fsq_surrogate(double v);
double fsq_surrogate_grad(double v);

// Mixed-radix packing, first dimension most significant.
std::uint64_t index_encode(const TokenCode& code, const FsqConfig& config);
TokenCode index_decode(std::uint64_t index, const FsqConfig& config);

}  // namespace itk
