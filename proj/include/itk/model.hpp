#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "itk/compressor.hpp"
#include "itk/fsq.hpp"
#include "itk/router.hpp"
#include "itk/source.hpp"

namespace itk {

// Fixed toy architecture: 64-sample signals in patches of 4, 16 token
// positions, latent width 6, MLP hidden width 32.
constexpr int kPatch = 4;
constexpr int kTokens = 16;
constexpr int kLatent = 6;
constexpr int kHidden = 32;
constexpr int kMixIn = kLatent + 1;  // latent plus the mask scalar

/// Network-evaluation counters (router cost accounting).
struct NfeCounter {
    long encoder = 0;
    long decoder = 0;
};

/// All parameters in one flat vector; Layout names the slices. The
/// compressor/decompressor residual branches (second MLP layer, token-mixing
/// matrices) start at zero so the full-mask adaptive pipeline reproduces the
/// fixed-length pipeline exactly at initialization.
struct ModelParams {
    struct Slice {
        int offset = 0;
        int size = 0;
    };
    struct Layout {
        Slice enc_w, enc_b;              // patch -> latent affine
        Slice c_w1, c_b1, c_w2, c_b2;    // compressor per-token MLP
        Slice c_mix;                     // compressor token-mixing residual
        Slice d_mix;                     // decompressor token-mixing residual
        Slice d_w1, d_b1, d_w2, d_b2;    // decompressor per-token MLP
        Slice dec_w, dec_b;              // latent -> patch affine
        Slice fill;                      // learned latent for dropped tokens
        int total = 0;
    };
    static const Layout& layout();

    std::vector<double> flat;

    std::span<const double> view(const Slice& s) const {
        return {flat.data() + s.offset, static_cast<std::size_t>(s.size)};
    }
    std::span<double> view(const Slice& s) {
        return {flat.data() + s.offset, static_cast<std::size_t>(s.size)};
    }

    // Uniform fan-in init for the affine maps and first MLP layers;
    // residual branches and fill start at zero.
    static ModelParams init(std::uint64_t seed);
    // Every parameter uniform in [-scale, scale]; used by gradient checks.
    static ModelParams random(std::uint64_t seed, double scale);
};

/// Cached intermediates of one adaptive forward pass, sufficient for the
/// exact backward pass.
struct ForwardTrace {
    std::vector<double> input;                      // 64 raw samples
    TokenMask mask;
    std::vector<std::vector<double>> enc_pre;       // pre-tanh encoder activations
    std::vector<std::vector<double>> h;             // encoder outputs
    std::vector<std::vector<double>> c_hidden;      // compressor MLP tanh outputs
    std::vector<std::vector<double>> c_out;         // post-MLP latents
    std::vector<std::vector<double>> mixed;         // pre-quantization latents
    std::vector<std::vector<double>> st_gate;       // straight-through gate per token
    std::vector<std::vector<double>> h_hat;         // post-scatter latents
    std::vector<std::vector<double>> e;             // decompressor-mixed latents
    std::vector<std::vector<double>> d_hidden;      // decompressor MLP tanh outputs
    std::vector<std::vector<double>> f;             // decoder inputs
    std::vector<double> recon;                      // 64 reconstructed samples
    double loss = 0.0;                              // mean squared error
};

struct FullForwardResult {
    std::vector<double> recon;
    std::vector<double> per_element_sq_errors;  // length 64
    double nll_proxy = 0.0;                     // total squared error
};

// element index -> owning token (element / 4)
std::vector<int> patch_map();

// Per-patch affine then tanh; rows strictly inside (-1, 1).
std::vector<std::vector<double>> encode(const ToySignal& signal,
                                        const ModelParams& params);

// Router pass: encode -> quantize -> dequantize -> decode, skipping the
// adaptive compressor. Counts 1 encoder + 1 decoder evaluation.
FullForwardResult forward_full(const ToySignal& signal, const ModelParams& params,
                               const FsqConfig& fsq, NfeCounter* nfe = nullptr);

// Full adaptive pipeline. `surrogate` replaces the quantizer with the plain
// clamp (the straight-through training surrogate); gradients are identical
// either way. Counts 1 encoder (unless count_encoder is false, for the
// pipeline that reuses the router pass) + 1 decoder evaluation.
ForwardTrace forward_adaptive(const ToySignal& signal, const TokenMask& mask,
                              const ModelParams& params, const FsqConfig& fsq,
                              bool surrogate = false, NfeCounter* nfe = nullptr,
                              bool count_encoder = true);

// Inference-side decoder half: scatter dequantized rows over the mask with
// the learned fill, then mixing, per-token MLP and the final affine decode.
// Bit-identical to the tail of forward_adaptive.
std::vector<double> decode_adaptive(const std::vector<std::vector<double>>& quantized,
                                    const TokenMask& mask, const ModelParams& params);

// Exact reverse-mode gradients of the trace's loss; the quantizer follows
// the straight-through rule and the mask is a constant.
std::vector<double> backward(const ForwardTrace& trace, const ModelParams& params);

struct GradCheckResult {
    double max_rel_error = 0.0;
    int params_checked = 0;
    int cases_skipped = 0;  // resampled: a latent sat within 1e-3 of the clamp edge
};

// Central-difference verification of backward() on the surrogate network.
// `param_range` restricts the check to a parameter slice (end < 0 = all).
GradCheckResult grad_check(double params_scale, const std::vector<std::uint64_t>& seeds,
                           double fd_step = 1e-5, int param_begin = 0,
                           int param_end = -1);

/// On-disk checkpoint: "ITKM" magic, JSON header (shapes, FSQ levels, router
/// state, header byte length), then the flat little-endian f64 parameters.
struct Checkpoint {
    ModelParams params;
    RouterState router;
    FsqConfig fsq;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace itk
