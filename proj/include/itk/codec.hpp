#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "itk/compressor.hpp"
#include "itk/fsq.hpp"

namespace itk {

/// Parsed contents of an .itk token stream.
struct TokenStream {
    FsqConfig config;
    TokenMask mask;                // length n_max
    std::vector<TokenCode> codes;  // one per kept token, in position order
};

// Thrown by deserialize; `kind` distinguishes the failure modes.
struct CodecError : std::runtime_error {
    enum class Kind { kMagic, kVersion, kTruncated, kPopcount, kBadValue };
    Kind kind;
    CodecError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Wire layout: magic "ITK1", version byte 1, n_max u16 LE, n_x u16 LE,
// dim-count byte, one level byte per dimension, mask bytes (LSB-first),
// then n_x indices packed MSB-first at ceil(log2(codebook_size)) bits,
// zero-padded to a byte boundary.
std::vector<std::uint8_t> serialize(const std::vector<TokenCode>& codes,
                                    const TokenMask& mask, const FsqConfig& config);

TokenStream deserialize(const std::vector<std::uint8_t>& bytes);

// Exact stream size for the layout above, in bytes.
std::size_t stream_size_bytes(int n_max, int n_x, const FsqConfig& config);

// BPP16 = (n_x / n_max) * (bits_per_token / 16) + mask overhead (1/16).
double bpp16(int n_x, int n_max, double bits_per_token, bool include_mask);

constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

// 10 * log10(max_val^2 / MSE); identical sequences report +infinity.
double psnr(const std::vector<double>& x, const std::vector<double>& x_hat,
            double max_val);

double mse(const std::vector<double>& x, const std::vector<double>& x_hat);

}  // namespace itk
