#pragma once

#include <cstdint>
#include <vector>

namespace itk {

/// Keep-mask over token positions: kept[t] == true means token t survives
/// compression. Serialized LSB-first (position 0 = bit 0 of byte 0).
struct TokenMask {
    std::vector<bool> kept;

    std::size_t size() const { return kept.size(); }
    int popcount() const;

    std::vector<std::uint8_t> to_bytes() const;
    static TokenMask from_bytes(const std::vector<std::uint8_t>& bytes, int n_max);

    static TokenMask full(int n_max);
};

// score_t = sum of squared errors over elements mapped to token t.
// patch_map[element] gives the owning token; must cover every token.
std::vector<double> per_token_scores(const std::vector<double>& per_element_sq_errors,
                                     const std::vector<int>& patch_map,
                                     int n_tokens);

// Keep exactly the n_keep highest-score positions; ties keep the lower index.
TokenMask build_mask(const std::vector<double>& scores, int n_keep);

// Rows of `latents` with kept == true, in original order.
std::vector<std::vector<double>> gather(const std::vector<std::vector<double>>& latents,
                                        const TokenMask& mask);

// Inverse of gather: kept positions receive `compressed` rows in order,
// dropped positions receive `fill`.
std::vector<std::vector<double>> scatter(const std::vector<std::vector<double>>& compressed,
                                         const TokenMask& mask,
                                         const std::vector<double>& fill);

}  // namespace itk
