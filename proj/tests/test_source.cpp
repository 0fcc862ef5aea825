#include <doctest.h>

#include <cmath>
#include <set>

#include "itk/errors.hpp"
#include "itk/rng.hpp"
#include "itk/source.hpp"

using namespace itk;

namespace {

// independent oracle: long-double Kahan summation of -p log_base p
double entropy_oracle(const std::vector<double>& probs, int base) {
    long double sum = 0.0L, comp = 0.0L;
    for (double p : probs) {
        long double term = -static_cast<long double>(p) * std::log2l(p);
        long double y = term - comp;
        long double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return static_cast<double>(sum / std::log2l(static_cast<long double>(base)));
}

}  // namespace

TEST_CASE("entropy of the four-point example is exactly 1.75 bits") {
    DiscreteSource src{{0.5, 0.25, 0.125, 0.125}, std::nullopt};
    CHECK(entropy(src, 2) == doctest::Approx(1.75).epsilon(1e-15));
}

TEST_CASE("entropy matches a long-double oracle on random sources") {
    std::uint64_t state = 42;
    SplitMix64 rng(state);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng.next_below(30));
        std::vector<double> p(n);
        double total = 0.0;
        for (double& v : p) {
            v = 0.01 + rng.next_double();
            total += v;
        }
        for (double& v : p) v /= total;
        DiscreteSource src{p, std::nullopt};
        for (int base : {2, 3}) {
            CHECK(entropy(src, base) ==
                  doctest::Approx(entropy_oracle(p, base)).epsilon(1e-12));
        }
    }
}

TEST_CASE("validation rejects malformed distributions") {
    CHECK_THROWS_AS(DiscreteSource({0.5, 0.6}, std::nullopt).validate(),
                    ValidationError);
    CHECK_THROWS_AS(DiscreteSource({1.0}, std::nullopt).validate(), ValidationError);
    CHECK_THROWS_AS(DiscreteSource({0.5, 0.5, 0.0}, std::nullopt).validate(),
                    ValidationError);
    CHECK_THROWS_AS(DiscreteSource({1.5, -0.5}, std::nullopt).validate(),
                    ValidationError);
}

TEST_CASE("geometric source: exact dyadic masses and analytic entropy") {
    for (int m = 1; m <= 6; ++m) {
        auto src = geometric_source(m);
        src.validate();
        const int last = (1 << m) - 1;
        CHECK(static_cast<int>(src.size()) == (1 << m));
        REQUIRE(src.is_dyadic());

        double mass = 0.0;
        for (double p : src.probs) mass += p;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));

        // H2 = sum_{j=1..last} j 2^-j + last * 2^-last (the duplicated tail)
        double h = 0.0;
        for (int j = 1; j <= last; ++j) h += j * std::ldexp(1.0, -j);
        h += last * std::ldexp(1.0, -last);
        CHECK(entropy(src, 2) == doctest::Approx(h).epsilon(1e-13));
    }
    CHECK_THROWS_AS(geometric_source(0), ValidationError);
    CHECK_THROWS_AS(geometric_source(11), ValidationError);
}

TEST_CASE("parse_source accepts both syntaxes") {
    auto a = parse_source("geometric:3");
    auto b = geometric_source(3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.probs[i] == b.probs[i]);

    auto csv = parse_source("0.5, 0.25, 0.125, 0.125");
    CHECK(csv.size() == 4);
    CHECK(csv.probs[0] == 0.5);

    CHECK_THROWS_AS(parse_source(""), ValidationError);
    CHECK_THROWS_AS(parse_source("geometric:0"), ValidationError);
    CHECK_THROWS_AS(parse_source("0.9,0.2"), ValidationError);
}

TEST_CASE("signals are deterministic, bounded, and piecewise constant") {
    auto a = sample_signal(7);
    auto b = sample_signal(7);
    CHECK(a.values == b.values);
    CHECK(a.segment_count == b.segment_count);

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto s = sample_signal(seed);
        REQUIRE(s.values.size() == kSignalLength);
        CHECK(s.segment_count >= 1);
        CHECK(s.segment_count <= kMaxSegments);
        for (double v : s.values) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("noiseless signals have exactly segment_count runs") {
    for (int segs = 1; segs <= kMaxSegments; ++segs) {
        auto s = sample_signal_with_segments(123 + segs, segs, 0.0);
        CHECK(s.segment_count == segs);
        int runs = 1;
        for (std::size_t i = 1; i < s.values.size(); ++i)
            if (s.values[i] != s.values[i - 1]) ++runs;
        CHECK(runs == segs);
    }
    CHECK_THROWS_AS(sample_signal_with_segments(1, 0), ValidationError);
    CHECK_THROWS_AS(sample_signal_with_segments(1, 9), ValidationError);
}

TEST_CASE("segment counts cover the whole range over many seeds") {
    std::set<int> seen;
    for (std::uint64_t seed = 0; seed < 300; ++seed)
        seen.insert(sample_signal(seed).segment_count);
    CHECK(seen.size() == kMaxSegments);
}
