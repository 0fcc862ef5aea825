#include <doctest.h>

#include "itk/compressor.hpp"
#include "itk/errors.hpp"
#include "itk/rng.hpp"

using namespace itk;

TEST_CASE("per-token scores aggregate squared errors by owning patch") {
    std::vector<int> map = {0, 0, 1, 1, 2, 2};
    std::vector<double> errs = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    auto scores = per_token_scores(errs, map, 3);
    CHECK(scores == std::vector<double>{3.0, 7.0, 11.0});

    CHECK_THROWS_AS(per_token_scores(errs, map, 4), ValidationError);  // token 3 empty
    CHECK_THROWS_AS(per_token_scores({1.0}, map, 3), ValidationError); // length mismatch
    CHECK_THROWS_AS(per_token_scores(errs, {0, 0, 1, 1, 2, 9}, 3), ValidationError);
}

TEST_CASE("build_mask keeps the top-k scores, ties keep the lower index") {
    auto mask = build_mask({0.1, 0.9, 0.5, 0.9}, 2);
    CHECK(mask.kept == std::vector<bool>{false, true, false, true});

    auto tied = build_mask({0.5, 0.5, 0.5, 0.5}, 2);
    CHECK(tied.kept == std::vector<bool>{true, true, false, false});

    CHECK(build_mask({1.0, 2.0}, 2).popcount() == 2);
    CHECK_THROWS_AS(build_mask({1.0, 2.0}, 0), ValidationError);
    CHECK_THROWS_AS(build_mask({1.0, 2.0}, 3), ValidationError);
}

TEST_CASE("mask bytes are LSB-first") {
    TokenMask mask{{true, false, false, false, false, false, false, false, true}};
    auto bytes = mask.to_bytes();
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0x01);
    CHECK(bytes[1] == 0x01);
    auto back = TokenMask::from_bytes(bytes, 9);
    CHECK(back.kept == mask.kept);

    CHECK(TokenMask::full(8).to_bytes()[0] == 0xFF);
}

TEST_CASE("gather and scatter invert each other on kept positions") {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 4 + static_cast<int>(rng.next_below(13));
        std::vector<std::vector<double>> latents(n, std::vector<double>(3));
        std::vector<double> scores(n);
        for (int t = 0; t < n; ++t) {
            scores[t] = rng.next_double();
            for (double& v : latents[t]) v = rng.next_double(-1.0, 1.0);
        }
        auto mask = build_mask(scores, 1 + static_cast<int>(rng.next_below(n)));
        auto packed = gather(latents, mask);
        CHECK(static_cast<int>(packed.size()) == mask.popcount());

        std::vector<double> fill = {9.0, 9.0, 9.0};
        auto restored = scatter(packed, mask, fill);
        REQUIRE(restored.size() == latents.size());
        for (int t = 0; t < n; ++t) {
            if (mask.kept[t])
                CHECK(restored[t] == latents[t]);
            else
                CHECK(restored[t] == fill);
        }
    }
}

TEST_CASE("scatter validates the compressed row count") {
    TokenMask mask{{true, false, true}};
    std::vector<std::vector<double>> rows(1, std::vector<double>(2, 0.0));
    CHECK_THROWS_AS(scatter(rows, mask, {0.0, 0.0}), ValidationError);
}
