#include "itk/compressor.hpp"

#include <algorithm>
#include <numeric>

#include "itk/errors.hpp"

namespace itk {

int TokenMask::popcount() const {
    return static_cast<int>(std::count(kept.begin(), kept.end(), true));
}

std::vector<std::uint8_t> TokenMask::to_bytes() const {
    std::vector<std::uint8_t> bytes((kept.size() + 7) / 8, 0);
    for (std::size_t t = 0; t < kept.size(); ++t)
        if (kept[t]) bytes[t / 8] |= static_cast<std::uint8_t>(1u << (t % 8));
    return bytes;
}

TokenMask TokenMask::from_bytes(const std::vector<std::uint8_t>& bytes, int n_max) {
    if (bytes.size() != static_cast<std::size_t>((n_max + 7) / 8))
        throw ValidationError("TokenMask: byte count mismatch");
    TokenMask mask;
    mask.kept.resize(n_max);
    for (int t = 0; t < n_max; ++t)
        mask.kept[t] = (bytes[t / 8] >> (t % 8)) & 1u;
    return mask;
}

TokenMask TokenMask::full(int n_max) {
    TokenMask mask;
    mask.kept.assign(n_max, true);
    return mask;
}

std::vector<double> per_token_scores(const std::vector<double>& per_element_sq_errors,
                                     const std::vector<int>& patch_map,
                                     int n_tokens) {
    if (patch_map.size() != per_element_sq_errors.size())
        throw ValidationError("per_token_scores: patch map size mismatch");
    std::vector<double> scores(n_tokens, 0.0);
    std::vector<bool> hit(n_tokens, false);
    for (std::size_t e = 0; e < patch_map.size(); ++e) {
        int t = patch_map[e];
        if (t < 0 || t >= n_tokens)
            throw ValidationError("per_token_scores: element mapped outside token range");
        scores[t] += per_element_sq_errors[e];
        hit[t] = true;
    }
    for (int t = 0; t < n_tokens; ++t)
        if (!hit[t])
            throw ValidationError("per_token_scores: token " + std::to_string(t) +
                                  " has no mapped elements");
    return scores;
}

TokenMask build_mask(const std::vector<double>& scores, int n_keep) {
    const int n = static_cast<int>(scores.size());
    if (n_keep < 1 || n_keep > n)
        throw ValidationError("build_mask: keep count out of range");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Highest score first; equal scores keep the lower position.
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    TokenMask mask;
    mask.kept.assign(n, false);
    for (int i = 0; i < n_keep; ++i) mask.kept[order[i]] = true;
    return mask;
}

std::vector<std::vector<double>> gather(const std::vector<std::vector<double>>& latents,
                                        const TokenMask& mask) {
    if (latents.size() != mask.size())
        throw ValidationError("gather: row count does not match mask length");
    std::vector<std::vector<double>> out;
    out.reserve(mask.popcount());
    for (std::size_t t = 0; t < mask.size(); ++t)
        if (mask.kept[t]) out.push_back(latents[t]);
    return out;
}

std::vector<std::vector<double>> scatter(const std::vector<std::vector<double>>& compressed,
                                         const TokenMask& mask,
                                         const std::vector<double>& fill) {
    if (static_cast<int>(compressed.size()) != mask.popcount())
        throw ValidationError("scatter: compressed row count does not match mask popcount");
    std::vector<std::vector<double>> out(mask.size());
    std::size_t next = 0;
    for (std::size_t t = 0; t < mask.size(); ++t)
        out[t] = mask.kept[t] ? compressed[next++] : fill;
    return out;
}

}  // namespace itk
