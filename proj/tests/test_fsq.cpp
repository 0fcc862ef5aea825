#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "itk/errors.hpp"
#include "itk/fsq.hpp"
#include "itk/rng.hpp"

using namespace itk;

TEST_CASE("reference configuration: 64000 codes, 16 serialized bits") {
    auto cfg = default_fsq_config();
    CHECK(cfg.levels == std::vector<int>{8, 8, 8, 5, 5, 5});
    CHECK(cfg.codebook_size() == 64000);
    CHECK(cfg.serialized_bits() == 16);
    CHECK(cfg.exact_bits() == doctest::Approx(std::log2(64000.0)).epsilon(1e-15));
    CHECK(cfg.exact_bits() < 16.0);
}

TEST_CASE("config validation") {
    FsqConfig empty;
    CHECK_THROWS_AS(empty.validate(), ValidationError);
    FsqConfig bad_level{{8, 1}};
    CHECK_THROWS_AS(bad_level.validate(), ValidationError);
    FsqConfig minimal{{2}};
    minimal.validate();
}

TEST_CASE("quantize snaps to the grid, ties resolve upward") {
    FsqConfig cfg{{8}};
    // grid v(c) = 2c/7 - 1; 0 sits exactly between c = 3 and c = 4
    CHECK(quantize(std::vector<double>{0.0}, cfg).digits[0] == 4);
    CHECK(quantize(std::vector<double>{-1.0}, cfg).digits[0] == 0);
    CHECK(quantize(std::vector<double>{1.0}, cfg).digits[0] == 7);
    // clamped inputs
    CHECK(quantize(std::vector<double>{-3.5}, cfg).digits[0] == 0);
    CHECK(quantize(std::vector<double>{42.0}, cfg).digits[0] == 7);
    // exact grid point
    CHECK(quantize(std::vector<double>{2.0 * 5 / 7 - 1.0}, cfg).digits[0] == 5);

    FsqConfig five{{5}};
    // grid for L=5: {-1, -0.5, 0, 0.5, 1}; midpoint 0.25 rounds up
    CHECK(quantize(std::vector<double>{0.25}, five).digits[0] == 3);
    CHECK(quantize(std::vector<double>{0.24}, five).digits[0] == 2);
}

TEST_CASE("dequantize returns the declared grid values") {
    FsqConfig cfg{{5}};
    for (int c = 0; c < 5; ++c) {
        TokenCode code{{c}};
        CHECK(dequantize(code, cfg)[0] ==
              doctest::Approx(2.0 * c / 4 - 1.0).epsilon(1e-15));
    }
}

TEST_CASE("quantization error stays within half a grid step per dimension") {
    auto cfg = default_fsq_config();
    SplitMix64 rng(99);
    for (int trial = 0; trial < 20000; ++trial) {
        std::vector<double> v(cfg.dims());
        for (double& x : v) x = rng.next_double(-1.2, 1.2);
        auto recon = dequantize(quantize(v, cfg), cfg);
        for (std::size_t d = 0; d < v.size(); ++d) {
            double clamped = std::clamp(v[d], -1.0, 1.0);
            CHECK(std::abs(recon[d] - clamped) <= 1.0 / (cfg.levels[d] - 1) + 1e-15);
        }
    }
}

TEST_CASE("index packing is a bijection over the whole codebook") {
    auto cfg = default_fsq_config();
    for (std::uint64_t idx = 0; idx < cfg.codebook_size(); ++idx) {
        auto code = index_decode(idx, cfg);
        for (std::size_t d = 0; d < cfg.dims(); ++d) {
            REQUIRE(code.digits[d] >= 0);
            REQUIRE(code.digits[d] < cfg.levels[d]);
        }
        REQUIRE(index_encode(code, cfg) == idx);
    }
    // first dimension is most significant
    TokenCode top{{7, 7, 7, 4, 4, 4}};
    CHECK(index_encode(top, cfg) == 63999);
    TokenCode second{{0, 0, 0, 0, 0, 1}};
    CHECK(index_encode(second, cfg) == 1);
}

TEST_CASE("straight-through surrogate: clamp with an inside-only gradient") {
    CHECK(fsq_surrogate(0.3) == 0.3);
    CHECK(fsq_surrogate(-2.0) == -1.0);
    CHECK(fsq_surrogate(1.5) == 1.0);
    CHECK(fsq_surrogate_grad(0.0) == 1.0);
    CHECK(fsq_surrogate_grad(0.999) == 1.0);
    CHECK(fsq_surrogate_grad(1.0) == 0.0);
    CHECK(fsq_surrogate_grad(-1.0) == 0.0);
    CHECK(fsq_surrogate_grad(3.0) == 0.0);
}
