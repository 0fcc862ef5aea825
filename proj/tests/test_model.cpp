#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "itk/errors.hpp"
#include "itk/model.hpp"
#include "itk/rng.hpp"

using namespace itk;

TEST_CASE("parameter layout is contiguous and complete") {
    const auto& l = ModelParams::layout();
    CHECK(l.enc_w.size == kLatent * kPatch);
    CHECK(l.c_mix.size == kTokens * kTokens);
    CHECK(l.fill.size == kLatent);
    int sum = l.enc_w.size + l.enc_b.size + l.c_w1.size + l.c_b1.size + l.c_w2.size +
              l.c_b2.size + l.c_mix.size + l.d_mix.size + l.d_w1.size + l.d_b1.size +
              l.d_w2.size + l.d_b2.size + l.dec_w.size + l.dec_b.size + l.fill.size;
    CHECK(sum == l.total);
    CHECK(l.fill.offset + l.fill.size == l.total);
    CHECK(static_cast<int>(ModelParams::init(0).flat.size()) == l.total);
}

TEST_CASE("encoder: zero params give zero latents, outputs stay inside (-1,1)") {
    ModelParams zero;
    zero.flat.assign(ModelParams::layout().total, 0.0);
    auto signal = sample_signal(3);
    auto h = encode(signal, zero);
    REQUIRE(h.size() == kTokens);
    for (const auto& row : h)
        for (double v : row) CHECK(v == 0.0);

    auto params = ModelParams::random(5, 2.0);
    for (const auto& row : encode(signal, params))
        for (double v : row) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
}

TEST_CASE("full-mask adaptive pipeline reproduces the fixed pipeline at init") {
    auto params = ModelParams::init(11);
    auto fsq = default_fsq_config();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto signal = sample_signal(seed);
        auto fixed = forward_full(signal, params, fsq);
        auto adaptive = forward_adaptive(signal, TokenMask::full(kTokens), params, fsq);
        CHECK(adaptive.recon == fixed.recon);  // bit-identical
        CHECK(adaptive.loss * kSignalLength ==
              doctest::Approx(fixed.nll_proxy).epsilon(1e-12));
    }
}

TEST_CASE("nll proxy is the exact sum of per-element squared errors") {
    auto params = ModelParams::random(7, 0.4);
    auto signal = sample_signal(7);
    auto res = forward_full(signal, params, default_fsq_config());
    double total = 0.0;
    for (double e : res.per_element_sq_errors) total += e;
    CHECK(res.nll_proxy == doctest::Approx(total).epsilon(1e-15));
}

TEST_CASE("NFE counters: 1+1 for the fixed pass, reuse skips the encoder") {
    auto params = ModelParams::init(1);
    auto fsq = default_fsq_config();
    auto signal = sample_signal(1);
    NfeCounter nfe;
    forward_full(signal, params, fsq, &nfe);
    CHECK(nfe.encoder == 1);
    CHECK(nfe.decoder == 1);
    forward_adaptive(signal, TokenMask::full(kTokens), params, fsq, false, &nfe,
                     /*count_encoder=*/false);
    CHECK(nfe.encoder == 1);
    CHECK(nfe.decoder == 2);
}

TEST_CASE("forward is deterministic and validates the mask") {
    auto params = ModelParams::random(9, 0.3);
    auto fsq = default_fsq_config();
    auto signal = sample_signal(9);
    auto mask = TokenMask::full(kTokens);
    auto a = forward_adaptive(signal, mask, params, fsq);
    auto b = forward_adaptive(signal, mask, params, fsq);
    CHECK(a.recon == b.recon);
    CHECK(a.loss == b.loss);

    CHECK_THROWS_AS(forward_adaptive(signal, TokenMask::full(8), params, fsq),
                    ValidationError);
    TokenMask empty;
    empty.kept.assign(kTokens, false);
    CHECK_THROWS_AS(forward_adaptive(signal, empty, params, fsq), ValidationError);
}

TEST_CASE("perfect reconstruction yields zero gradients") {
    // all-zero params on an all-zero signal: recon == input == 0
    ModelParams zero;
    zero.flat.assign(ModelParams::layout().total, 0.0);
    ToySignal silent;
    silent.values.assign(kSignalLength, 0.0);
    silent.segment_count = 1;
    auto trace = forward_adaptive(silent, TokenMask::full(kTokens), zero,
                                  default_fsq_config(), true);
    CHECK(trace.loss == 0.0);
    for (double g : backward(trace, zero)) CHECK(g == 0.0);
}

TEST_CASE("decode_adaptive matches the forward tail bit-exactly") {
    auto params = ModelParams::random(13, 0.3);
    auto fsq = default_fsq_config();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto signal = sample_signal(seed);
        SplitMix64 rng(seed + 100);
        std::vector<double> scores(kTokens);
        for (double& s : scores) s = rng.next_double();
        auto mask = build_mask(scores, 1 + static_cast<int>(rng.next_below(kTokens)));
        auto trace = forward_adaptive(signal, mask, params, fsq, /*surrogate=*/false);

        std::vector<std::vector<double>> rows;
        for (int t = 0; t < kTokens; ++t)
            if (mask.kept[t])
                rows.push_back(dequantize(quantize(trace.mixed[t], fsq), fsq));
        CHECK(decode_adaptive(rows, mask, params) == trace.recon);
    }
}

TEST_CASE("gradients match central differences") {
    auto full = grad_check(0.3, {1, 2, 3});
    CHECK(full.params_checked > 0);
    CHECK(full.max_rel_error < 1e-4);

    // the decoder affine slice is exact for finite differences
    const auto& l = ModelParams::layout();
    auto linear = grad_check(0.3, {4}, 1e-5, l.dec_w.offset,
                             l.dec_b.offset + l.dec_b.size);
    CHECK(linear.max_rel_error < 1e-8);
}

TEST_CASE("finite-difference error curve has its minimum at the interior step") {
    double e4 = grad_check(0.3, {6}, 1e-4).max_rel_error;
    double e5 = grad_check(0.3, {6}, 1e-5).max_rel_error;
    double e6 = grad_check(0.3, {6}, 1e-6).max_rel_error;
    CHECK(e5 <= e4);
    CHECK(e5 <= e6);
}

TEST_CASE("checkpoint roundtrip preserves every field bit-exactly") {
    auto dir = std::filesystem::temp_directory_path();
    auto path = (dir / "itk_test_ckpt.itkm").string();

    Checkpoint ckpt;
    ckpt.params = ModelParams::random(21, 0.7);
    ckpt.router = RouterState::make(6.5, 16);
    ckpt.router.ema_nll = 3.25;
    ckpt.router.flex_betas = {4.0, 8.0};
    ckpt.fsq = default_fsq_config();
    save_checkpoint(path, ckpt);

    auto back = load_checkpoint(path);
    CHECK(back.params.flat == ckpt.params.flat);
    CHECK(back.router.beta == ckpt.router.beta);
    CHECK(back.router.ema_nll == ckpt.router.ema_nll);
    CHECK(back.router.n_max == 16);
    CHECK(back.router.n_min == 1);
    CHECK(back.router.flex_betas == ckpt.router.flex_betas);
    CHECK(back.fsq.levels == ckpt.fsq.levels);

    // corrupt the magic
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ValidationError);
    CHECK_THROWS_AS(load_checkpoint((dir / "itk_missing.itkm").string()), IoError);
    std::filesystem::remove(path);
}
