#include "itk/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "itk/errors.hpp"
#include "itk/rng.hpp"

namespace itk {

namespace {

using Mat = std::vector<std::vector<double>>;

// y = W x + b, W row-major [rows x cols]
std::vector<double> affine(std::span<const double> w, std::span<const double> b,
                           std::span<const double> x, int rows, int cols) {
    std::vector<double> y(rows);
    for (int r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* row = w.data() + r * cols;
        for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// grad accumulation for y = W x + b given dy
void affine_backward(std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, int rows, int cols,
                     std::span<double> grad_w, std::span<double> grad_b,
                     std::vector<double>* dx) {
    for (int r = 0; r < rows; ++r) {
        grad_b[r] += dy[r];
        double* grow = grad_w.data() + r * cols;
        const double* wrow = w.data() + r * cols;
        for (int c = 0; c < cols; ++c) {
            grow[c] += dy[r] * x[c];
            if (dx) (*dx)[c] += wrow[c] * dy[r];
        }
    }
}

// Residual mask-gated token mixing, per latent dim. The learned 16x16 weight
// table is positional: row t is turned into a probability profile over the
// admissible source tokens by a masked softmax, and the target receives the
// profile-weighted average of the sources as a residual:
//   p[t][s] = gate_in[s] * exp(mix[t][s]) / sum_r gate_in[r] * exp(mix[t][r])
//   out_t   = in_t + gate_out[t] * sum_s p[t][s] * in_s
// The gates carry the mask feature: the compressor packs dropped tokens into
// kept slots (gate_out = m, gate_in = 1-m) and the decompressor imputes
// dropped slots from kept ones (gate_out = 1-m, gate_in = m). Kept tokens are
// never polluted on the decode side, and averaging keeps one weight table
// valid across every sequence length. With no admissible source the residual
// is zero, so the full mask leaves the compressor side inert.
void mix_profile(std::span<const double> mix, const std::vector<double>& gate_in,
                 int t, std::vector<double>& p) {
    double total = 0.0;
    for (int s = 0; s < kTokens; ++s) {
        p[s] = gate_in[s] > 0.0 ? gate_in[s] * std::exp(mix[t * kTokens + s]) : 0.0;
        total += p[s];
    }
    if (total > 0.0)
        for (int s = 0; s < kTokens; ++s) p[s] /= total;
}

Mat mix_forward(std::span<const double> mix, const Mat& in,
                const std::vector<double>& gate_out,
                const std::vector<double>& gate_in) {
    Mat out(kTokens, std::vector<double>(kLatent));
    std::vector<double> p(kTokens);
    for (int t = 0; t < kTokens; ++t) {
        if (gate_out[t] == 0.0) {
            out[t] = in[t];
            continue;
        }
        mix_profile(mix, gate_in, t, p);
        for (int k = 0; k < kLatent; ++k) {
            double acc = 0.0;
            for (int s = 0; s < kTokens; ++s) acc += p[s] * in[s][k];
            out[t][k] = in[t][k] + gate_out[t] * acc;
        }
    }
    return out;
}

void mix_backward(std::span<const double> mix, const Mat& in, const Mat& dout,
                  const std::vector<double>& gate_out,
                  const std::vector<double>& gate_in, std::span<double> grad_mix,
                  Mat& din) {
    std::vector<double> p(kTokens);
    for (int t = 0; t < kTokens; ++t) {
        for (int k = 0; k < kLatent; ++k) din[t][k] += dout[t][k];
        if (gate_out[t] == 0.0) continue;
        mix_profile(mix, gate_in, t, p);
        for (int k = 0; k < kLatent; ++k) {
            const double c = gate_out[t] * dout[t][k];
            if (c == 0.0) continue;
            double avg = 0.0;
            for (int s = 0; s < kTokens; ++s) avg += p[s] * in[s][k];
            for (int s = 0; s < kTokens; ++s) {
                if (p[s] == 0.0) continue;
                din[s][k] += c * p[s];
                // softmax profile: d p[s] / d mix[t][s'] = p[s](δ - p[s'])
                grad_mix[t * kTokens + s] += c * p[s] * (in[s][k] - avg);
            }
        }
    }
}

// Gate vectors for a mask: binary kept/dropped indicators.
struct MaskGates {
    std::vector<double> kept, dropped;
};

// Per-token mask scalar fed to the MLPs: the token's own bit centered by the
// kept density, so the sign carries kept/dropped and the magnitude tells the
// network how aggressively the mixture layers are operating at this length.
double mask_scalar(const TokenMask& mask, int t) {
    return (mask.kept[t] ? 1.0 : 0.0) -
           static_cast<double>(mask.popcount()) / kTokens;
}

MaskGates mask_gates(const TokenMask& mask) {
    MaskGates g{std::vector<double>(kTokens), std::vector<double>(kTokens)};
    for (int t = 0; t < kTokens; ++t) {
        g.kept[t] = mask.kept[t] ? 1.0 : 0.0;
        g.dropped[t] = 1.0 - g.kept[t];
    }
    return g;
}

ModelParams::Layout build_layout() {
    ModelParams::Layout l;
    int pos = 0;
    auto slice = [&](int size) {
        ModelParams::Slice s{pos, size};
        pos += size;
        return s;
    };
    l.enc_w = slice(kLatent * kPatch);
    l.enc_b = slice(kLatent);
    l.c_w1 = slice(kHidden * kMixIn);
    l.c_b1 = slice(kHidden);
    l.c_w2 = slice(kLatent * kHidden);
    l.c_b2 = slice(kLatent);
    l.c_mix = slice(kTokens * kTokens);
    l.d_mix = slice(kTokens * kTokens);
    l.d_w1 = slice(kHidden * kMixIn);
    l.d_b1 = slice(kHidden);
    l.d_w2 = slice(kLatent * kHidden);
    l.d_b2 = slice(kLatent);
    l.dec_w = slice(kPatch * kLatent);
    l.dec_b = slice(kPatch);
    l.fill = slice(kLatent);
    l.total = pos;
    return l;
}

void fan_in_init(std::span<double> w, int fan_in, SplitMix64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = rng.next_double(-bound, bound);
}

}  // namespace

const ModelParams::Layout& ModelParams::layout() {
    static const Layout l = build_layout();
    return l;
}

ModelParams ModelParams::init(std::uint64_t seed) {
    const auto& l = layout();
    ModelParams p;
    p.flat.assign(l.total, 0.0);
    SplitMix64 rng(seed ^ 0x8C2F1B7D64A3E915ull);
    fan_in_init(p.view(l.enc_w), kPatch, rng);
    fan_in_init(p.view(l.c_w1), kMixIn, rng);
    fan_in_init(p.view(l.d_w1), kMixIn, rng);
    fan_in_init(p.view(l.dec_w), kLatent, rng);
    // c_w2/c_b2, d_w2/d_b2, both mixing matrices and fill stay zero: the
    // full-mask pipeline starts exactly equal to the fixed-length one.
    return p;
}

ModelParams ModelParams::random(std::uint64_t seed, double scale) {
    const auto& l = layout();
    ModelParams p;
    p.flat.resize(l.total);
    SplitMix64 rng(seed ^ 0x3D91C6E24F7A8B50ull);
    for (double& v : p.flat) v = rng.next_double(-scale, scale);
    return p;
}

std::vector<int> patch_map() {
    std::vector<int> map(kSignalLength);
    for (int e = 0; e < kSignalLength; ++e) map[e] = e / kPatch;
    return map;
}

std::vector<std::vector<double>> encode(const ToySignal& signal,
                                        const ModelParams& params) {
    if (signal.values.size() != kSignalLength)
        throw ValidationError("encode: signal must have 64 samples");
    const auto& l = ModelParams::layout();
    Mat h(kTokens);
    for (int t = 0; t < kTokens; ++t) {
        std::span<const double> patch(signal.values.data() + t * kPatch, kPatch);
        auto pre = affine(params.view(l.enc_w), params.view(l.enc_b), patch,
                          kLatent, kPatch);
        h[t].resize(kLatent);
        for (int k = 0; k < kLatent; ++k) h[t][k] = std::tanh(pre[k]);
    }
    return h;
}

FullForwardResult forward_full(const ToySignal& signal, const ModelParams& params,
                               const FsqConfig& fsq, NfeCounter* nfe) {
    const auto& l = ModelParams::layout();
    auto h = encode(signal, params);
    FullForwardResult res;
    res.recon.resize(kSignalLength);
    res.per_element_sq_errors.resize(kSignalLength);
    for (int t = 0; t < kTokens; ++t) {
        auto hq = dequantize(quantize(h[t], fsq), fsq);
        auto patch = affine(params.view(l.dec_w), params.view(l.dec_b), hq,
                            kPatch, kLatent);
        for (int i = 0; i < kPatch; ++i) {
            int e = t * kPatch + i;
            res.recon[e] = patch[i];
            double d = patch[i] - signal.values[e];
            res.per_element_sq_errors[e] = d * d;
            res.nll_proxy += d * d;
        }
    }
    if (nfe) {
        nfe->encoder += 1;
        nfe->decoder += 1;
    }
    return res;
}

ForwardTrace forward_adaptive(const ToySignal& signal, const TokenMask& mask,
                              const ModelParams& params, const FsqConfig& fsq,
                              bool surrogate, NfeCounter* nfe, bool count_encoder) {
    if (static_cast<int>(mask.size()) != kTokens)
        throw ValidationError("forward_adaptive: mask length must be 16");
    if (mask.popcount() < 1)
        throw ValidationError("forward_adaptive: mask must keep at least one token");
    const auto& l = ModelParams::layout();

    ForwardTrace tr;
    tr.input = signal.values;
    tr.mask = mask;
    tr.h = encode(signal, params);
    tr.enc_pre.resize(kTokens);
    for (int t = 0; t < kTokens; ++t) {
        tr.enc_pre[t].resize(kLatent);
        for (int k = 0; k < kLatent; ++k) tr.enc_pre[t][k] = std::atanh(tr.h[t][k]);
    }

    // compressor per-token MLP with the mask scalar appended, residual
    tr.c_hidden.resize(kTokens);
    tr.c_out.resize(kTokens);
    for (int t = 0; t < kTokens; ++t) {
        std::vector<double> u(kMixIn);
        std::copy(tr.h[t].begin(), tr.h[t].end(), u.begin());
        u[kLatent] = mask_scalar(mask, t);
        auto z1 = affine(params.view(l.c_w1), params.view(l.c_b1), u, kHidden, kMixIn);
        tr.c_hidden[t].resize(kHidden);
        for (int j = 0; j < kHidden; ++j) tr.c_hidden[t][j] = std::tanh(z1[j]);
        auto r = affine(params.view(l.c_w2), params.view(l.c_b2), tr.c_hidden[t],
                        kLatent, kHidden);
        tr.c_out[t].resize(kLatent);
        for (int k = 0; k < kLatent; ++k) tr.c_out[t][k] = tr.h[t][k] + r[k];
    }
    const auto gates = mask_gates(mask);
    tr.mixed = mix_forward(params.view(l.c_mix), tr.c_out, gates.kept,
                           gates.dropped);

    // quantize kept tokens (straight-through gate recorded either way)
    tr.st_gate.assign(kTokens, std::vector<double>(kLatent, 0.0));
    std::vector<std::vector<double>> quantized;
    for (int t = 0; t < kTokens; ++t) {
        if (!mask.kept[t]) continue;
        std::vector<double> q(kLatent);
        for (int k = 0; k < kLatent; ++k) {
            tr.st_gate[t][k] = fsq_surrogate_grad(tr.mixed[t][k]);
            q[k] = fsq_surrogate(tr.mixed[t][k]);
        }
        if (!surrogate) q = dequantize(quantize(tr.mixed[t], fsq), fsq);
        quantized.push_back(std::move(q));
    }

    std::vector<double> fill(params.view(l.fill).begin(), params.view(l.fill).end());
    tr.h_hat = scatter(quantized, mask, fill);

    tr.e = mix_forward(params.view(l.d_mix), tr.h_hat, gates.dropped,
                       gates.kept);

    tr.d_hidden.resize(kTokens);
    tr.f.resize(kTokens);
    for (int t = 0; t < kTokens; ++t) {
        std::vector<double> v(kMixIn);
        std::copy(tr.e[t].begin(), tr.e[t].end(), v.begin());
        v[kLatent] = mask_scalar(mask, t);
        auto z2 = affine(params.view(l.d_w1), params.view(l.d_b1), v, kHidden, kMixIn);
        tr.d_hidden[t].resize(kHidden);
        for (int j = 0; j < kHidden; ++j) tr.d_hidden[t][j] = std::tanh(z2[j]);
        auto r = affine(params.view(l.d_w2), params.view(l.d_b2), tr.d_hidden[t],
                        kLatent, kHidden);
        tr.f[t].resize(kLatent);
        for (int k = 0; k < kLatent; ++k) tr.f[t][k] = tr.e[t][k] + r[k];
    }

    tr.recon.resize(kSignalLength);
    tr.loss = 0.0;
    for (int t = 0; t < kTokens; ++t) {
        auto patch = affine(params.view(l.dec_w), params.view(l.dec_b), tr.f[t],
                            kPatch, kLatent);
        for (int i = 0; i < kPatch; ++i) {
            int e = t * kPatch + i;
            tr.recon[e] = patch[i];
            double d = patch[i] - signal.values[e];
            tr.loss += d * d;
        }
    }
    tr.loss /= kSignalLength;

    if (nfe) {
        if (count_encoder) nfe->encoder += 1;
        nfe->decoder += 1;
    }
    return tr;
}

std::vector<double> decode_adaptive(const std::vector<std::vector<double>>& quantized,
                                    const TokenMask& mask, const ModelParams& params) {
    if (static_cast<int>(mask.size()) != kTokens)
        throw ValidationError("decode_adaptive: mask length must be 16");
    const auto& l = ModelParams::layout();
    std::vector<double> fill(params.view(l.fill).begin(), params.view(l.fill).end());
    auto h_hat = scatter(quantized, mask, fill);
    const auto gates = mask_gates(mask);
    auto e = mix_forward(params.view(l.d_mix), h_hat, gates.dropped,
                         gates.kept);

    std::vector<double> recon(kSignalLength);
    for (int t = 0; t < kTokens; ++t) {
        std::vector<double> v(kMixIn);
        std::copy(e[t].begin(), e[t].end(), v.begin());
        v[kLatent] = mask_scalar(mask, t);
        auto z2 = affine(params.view(l.d_w1), params.view(l.d_b1), v, kHidden, kMixIn);
        std::vector<double> hid(kHidden);
        for (int j = 0; j < kHidden; ++j) hid[j] = std::tanh(z2[j]);
        auto r = affine(params.view(l.d_w2), params.view(l.d_b2), hid, kLatent, kHidden);
        std::vector<double> f(kLatent);
        for (int k = 0; k < kLatent; ++k) f[k] = e[t][k] + r[k];
        auto patch = affine(params.view(l.dec_w), params.view(l.dec_b), f,
                            kPatch, kLatent);
        for (int i = 0; i < kPatch; ++i) recon[t * kPatch + i] = patch[i];
    }
    return recon;
}

std::vector<double> backward(const ForwardTrace& trace, const ModelParams& params) {
    const auto& l = ModelParams::layout();
    if (static_cast<int>(trace.recon.size()) != kSignalLength ||
        static_cast<int>(trace.h.size()) != kTokens)
        throw ValidationError("backward: trace does not match the architecture");

    std::vector<double> grad(l.total, 0.0);
    ModelParams g;  // view helper over the gradient buffer
    g.flat.swap(grad);

    // dL/drecon
    std::vector<double> drecon(kSignalLength);
    for (int e = 0; e < kSignalLength; ++e)
        drecon[e] = 2.0 * (trace.recon[e] - trace.input[e]) / kSignalLength;

    Mat df(kTokens, std::vector<double>(kLatent, 0.0));
    for (int t = 0; t < kTokens; ++t) {
        std::span<const double> dpatch(drecon.data() + t * kPatch, kPatch);
        affine_backward(params.view(l.dec_w), trace.f[t], dpatch, kPatch, kLatent,
                        g.view(l.dec_w), g.view(l.dec_b), &df[t]);
    }

    // decompressor MLP (residual)
    Mat de(kTokens, std::vector<double>(kLatent, 0.0));
    for (int t = 0; t < kTokens; ++t) {
        de[t] = df[t];  // residual path
        std::vector<double> dz2(kHidden);
        {
            // through W2
            std::vector<double> dg2(kHidden, 0.0);
            affine_backward(params.view(l.d_w2), trace.d_hidden[t], df[t], kLatent,
                            kHidden, g.view(l.d_w2), g.view(l.d_b2), &dg2);
            for (int j = 0; j < kHidden; ++j)
                dz2[j] = dg2[j] * (1.0 - trace.d_hidden[t][j] * trace.d_hidden[t][j]);
        }
        std::vector<double> v(kMixIn);
        std::copy(trace.e[t].begin(), trace.e[t].end(), v.begin());
        v[kLatent] = mask_scalar(trace.mask, t);
        std::vector<double> dv(kMixIn, 0.0);
        affine_backward(params.view(l.d_w1), v, dz2, kHidden, kMixIn,
                        g.view(l.d_w1), g.view(l.d_b1), &dv);
        for (int k = 0; k < kLatent; ++k) de[t][k] += dv[k];
    }

    const auto gates = mask_gates(trace.mask);
    Mat dh_hat(kTokens, std::vector<double>(kLatent, 0.0));
    mix_backward(params.view(l.d_mix), trace.h_hat, de, gates.dropped,
                 gates.kept, g.view(l.d_mix), dh_hat);

    // scatter: dropped rows feed the fill vector; kept rows pass through the
    // straight-through gate into the pre-quantization latents.
    Mat dmixed(kTokens, std::vector<double>(kLatent, 0.0));
    auto grad_fill = g.view(l.fill);
    for (int t = 0; t < kTokens; ++t) {
        if (trace.mask.kept[t]) {
            for (int k = 0; k < kLatent; ++k)
                dmixed[t][k] = dh_hat[t][k] * trace.st_gate[t][k];
        } else {
            for (int k = 0; k < kLatent; ++k) grad_fill[k] += dh_hat[t][k];
        }
    }

    Mat dc_out(kTokens, std::vector<double>(kLatent, 0.0));
    mix_backward(params.view(l.c_mix), trace.c_out, dmixed, gates.kept,
                 gates.dropped, g.view(l.c_mix), dc_out);

    // compressor MLP (residual) back into the encoder outputs
    Mat dh(kTokens, std::vector<double>(kLatent, 0.0));
    for (int t = 0; t < kTokens; ++t) {
        dh[t] = dc_out[t];  // residual path
        std::vector<double> dg(kHidden, 0.0);
        affine_backward(params.view(l.c_w2), trace.c_hidden[t], dc_out[t], kLatent,
                        kHidden, g.view(l.c_w2), g.view(l.c_b2), &dg);
        std::vector<double> dz1(kHidden);
        for (int j = 0; j < kHidden; ++j)
            dz1[j] = dg[j] * (1.0 - trace.c_hidden[t][j] * trace.c_hidden[t][j]);
        std::vector<double> u(kMixIn);
        std::copy(trace.h[t].begin(), trace.h[t].end(), u.begin());
        u[kLatent] = mask_scalar(trace.mask, t);
        std::vector<double> du(kMixIn, 0.0);
        affine_backward(params.view(l.c_w1), u, dz1, kHidden, kMixIn,
                        g.view(l.c_w1), g.view(l.c_b1), &du);
        for (int k = 0; k < kLatent; ++k) dh[t][k] += du[k];
    }

    // encoder tanh + affine
    for (int t = 0; t < kTokens; ++t) {
        std::vector<double> da(kLatent);
        for (int k = 0; k < kLatent; ++k)
            da[k] = dh[t][k] * (1.0 - trace.h[t][k] * trace.h[t][k]);
        std::span<const double> patch(trace.input.data() + t * kPatch, kPatch);
        affine_backward(params.view(l.enc_w), patch, da, kLatent, kPatch,
                        g.view(l.enc_w), g.view(l.enc_b), nullptr);
    }

    return g.flat;
}

GradCheckResult grad_check(double params_scale, const std::vector<std::uint64_t>& seeds,
                           double fd_step, int param_begin, int param_end) {
    const auto& l = ModelParams::layout();
    if (param_end < 0) param_end = l.total;
    FsqConfig fsq = default_fsq_config();
    GradCheckResult result;

    for (std::uint64_t base_seed : seeds) {
        ModelParams params;
        ToySignal signal;
        TokenMask mask;
        bool clean = false;
        std::uint64_t seed = base_seed;
        for (int attempt = 0; attempt < 64 && !clean; ++attempt, seed += 0x9E37u) {
            params = ModelParams::random(seed, params_scale);
            signal = sample_signal(seed * 31 + 7);
            SplitMix64 rng(seed ^ 0xABCD1234u);
            std::vector<double> scores(kTokens);
            for (double& s : scores) s = rng.next_double();
            mask = build_mask(scores, 1 + static_cast<int>(rng.next_below(kTokens)));

            auto trace = forward_adaptive(signal, mask, params, fsq, /*surrogate=*/true);
            clean = true;
            for (int t = 0; t < kTokens && clean; ++t) {
                if (!mask.kept[t]) continue;
                for (int k = 0; k < kLatent; ++k) {
                    if (std::abs(std::abs(trace.mixed[t][k]) - 1.0) < 1e-3) {
                        clean = false;
                        break;
                    }
                }
            }
            if (!clean) ++result.cases_skipped;
        }
        if (!clean) continue;

        auto trace = forward_adaptive(signal, mask, params, fsq, /*surrogate=*/true);
        auto analytic = backward(trace, params);

        auto loss_at = [&](const ModelParams& p) {
            return forward_adaptive(signal, mask, p, fsq, /*surrogate=*/true).loss;
        };
        ModelParams probe = params;
        for (int i = param_begin; i < param_end; ++i) {
            double orig = probe.flat[i];
            probe.flat[i] = orig + fd_step;
            double up = loss_at(probe);
            probe.flat[i] = orig - fd_step;
            double down = loss_at(probe);
            probe.flat[i] = orig;
            double fd = (up - down) / (2.0 * fd_step);
            double scale = std::max({std::abs(analytic[i]), std::abs(fd), 1e-4});
            double rel = std::abs(analytic[i] - fd) / scale;
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.params_checked;
        }
    }
    return result;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["version"] = 1;
    header["patch"] = kPatch;
    header["tokens"] = kTokens;
    header["latent"] = kLatent;
    header["hidden"] = kHidden;
    header["param_count"] = ckpt.params.flat.size();
    header["fsq_levels"] = ckpt.fsq.levels;
    header["router"] = {
        {"beta", ckpt.router.beta},
        {"ema_nll", ckpt.router.ema_nll ? nlohmann::json(*ckpt.router.ema_nll)
                                        : nlohmann::json(nullptr)},
        {"ema_decay", ckpt.router.ema_decay},
        {"n_max", ckpt.router.n_max},
        {"n_min", ckpt.router.n_min},
        {"flex_betas", ckpt.router.flex_betas},
    };
    std::string header_str = header.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'I', 'T', 'K', 'M'});
    put_u32(out, static_cast<std::uint32_t>(header_str.size()));
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (double v : ckpt.params.flat) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i)
            out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("save_checkpoint: cannot open " + path);
    file.write(reinterpret_cast<const char*>(out.data()),
               static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("load_checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || bytes[0] != 'I' || bytes[1] != 'T' || bytes[2] != 'K' ||
        bytes[3] != 'M')
        throw ValidationError("load_checkpoint: bad magic, expected ITKM");
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) header_len |= std::uint32_t(bytes[4 + i]) << (8 * i);
    if (bytes.size() < 8 + header_len)
        throw ValidationError("load_checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(
        bytes.begin() + 8, bytes.begin() + 8 + header_len);
    if (header.value("version", 0) != 1)
        throw ValidationError("load_checkpoint: unsupported checkpoint version");
    if (header.value("patch", 0) != kPatch || header.value("tokens", 0) != kTokens ||
        header.value("latent", 0) != kLatent || header.value("hidden", 0) != kHidden)
        throw ValidationError("load_checkpoint: architecture shape mismatch");

    Checkpoint ckpt;
    ckpt.fsq.levels = header.at("fsq_levels").get<std::vector<int>>();
    const auto& r = header.at("router");
    ckpt.router.beta = r.at("beta").get<double>();
    if (!r.at("ema_nll").is_null())
        ckpt.router.ema_nll = r.at("ema_nll").get<double>();
    ckpt.router.ema_decay = r.at("ema_decay").get<double>();
    ckpt.router.n_max = r.at("n_max").get<int>();
    ckpt.router.n_min = r.at("n_min").get<int>();
    ckpt.router.flex_betas = r.at("flex_betas").get<std::vector<double>>();

    std::size_t count = header.at("param_count").get<std::size_t>();
    if (bytes.size() != 8 + header_len + count * 8)
        throw ValidationError("load_checkpoint: parameter block size mismatch");
    ckpt.params.flat.resize(count);
    const std::uint8_t* p = bytes.data() + 8 + header_len;
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(p[i * 8 + b]) << (8 * b);
        ckpt.params.flat[i] = std::bit_cast<double>(bits);
    }
    return ckpt;
}

}  // namespace itk
