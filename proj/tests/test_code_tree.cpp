#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "itk/code_tree.hpp"
#include "itk/errors.hpp"
#include "itk/rng.hpp"

using namespace itk;

namespace {

DiscreteSource random_source(SplitMix64& rng, int n) {
    std::vector<double> p(n);
    double total = 0.0;
    for (double& v : p) {
        v = 0.05 + rng.next_double();
        total += v;
    }
    for (double& v : p) v /= total;
    return {p, std::nullopt};
}

// test-side generator: random full binary tree by recursive item-set splits
CodeTree random_binary_tree(SplitMix64& rng, int n_items) {
    CodeTree tree;
    tree.arity = 2;
    std::vector<int> items(n_items);
    std::iota(items.begin(), items.end(), 0);
    std::function<int(std::vector<int>)> build = [&](std::vector<int> set) {
        int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (set.size() == 1) {
            tree.nodes[id].item = set[0];
            return id;
        }
        // random nonempty proper split
        std::vector<int> left, right;
        do {
            left.clear();
            right.clear();
            for (int item : set)
                (rng.next_below(2) ? left : right).push_back(item);
        } while (left.empty() || right.empty());
        int l = build(left);
        int r = build(right);
        tree.nodes[id].children = {l, r};
        return id;
    };
    build(items);
    return tree;
}

// the section's two fixed trees over {1/2, 1/4, 1/8, 1/8}
CodeTree balanced_example() {
    CodeTree t;
    t.arity = 2;
    t.nodes.resize(7);
    t.nodes[0].children = {1, 2};
    t.nodes[1].children = {3, 4};
    t.nodes[2].children = {5, 6};
    t.nodes[3].item = 0;
    t.nodes[4].item = 1;
    t.nodes[5].item = 2;
    t.nodes[6].item = 3;
    return t;
}

CodeTree chain_example() {
    CodeTree t;
    t.arity = 2;
    t.nodes.resize(7);
    t.nodes[0].children = {1, 2};
    t.nodes[1].item = 0;
    t.nodes[2].children = {3, 4};
    t.nodes[3].item = 1;
    t.nodes[4].children = {5, 6};
    t.nodes[5].item = 2;
    t.nodes[6].item = 3;
    return t;
}

const DiscreteSource kFourPoint{{0.5, 0.25, 0.125, 0.125}, std::nullopt};

}  // namespace

TEST_CASE("Huffman reproduces the four-point example code") {
    auto tree = huffman(kFourPoint, 2);
    tree.validate(4);
    CHECK(tree.item_depths(4) == std::vector<int>{1, 2, 3, 3});
    CHECK(expected_length(tree, kFourPoint) == doctest::Approx(1.75).epsilon(1e-15));
    CHECK(tree.kraft_sum(4) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("Huffman expected length is sandwiched by the entropy") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 4 + static_cast<int>(rng.next_below(61));
        auto src = random_source(rng, n);
        for (int arity : {2, 3}) {
            auto tree = huffman(src, arity);
            tree.validate(src.size());
            double h = entropy(src, arity);
            double len = expected_length(tree, src);
            CHECK(len >= h - 1e-12);
            CHECK(len < h + 1.0);
            CHECK(tree.kraft_sum(src.size()) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("ternary Huffman pads the first merge with dummy leaves") {
    // 4 items at arity 3 need one dummy so every merge takes 3 children
    auto tree = huffman(kFourPoint, 3);
    tree.validate(4);
    auto depths = tree.item_depths(4);
    double len = expected_length(tree, kFourPoint);
    CHECK(len < entropy(kFourPoint, 3) + 1.0);
    CHECK(*std::max_element(depths.begin(), depths.end()) == 2);
}

TEST_CASE("tree loss matches hand-computed values on the fixed examples") {
    // balanced: depth-1 internal nodes weigh 0.75 * H(2/3) + 0.25 * H(1/2)
    const double balanced = 0.75 * std::log2(3.0) - 0.25;
    CHECK(tree_loss(balanced_example(), kFourPoint) ==
          doctest::Approx(balanced).epsilon(1e-12));
    CHECK(tree_loss(chain_example(), kFourPoint) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(tree_loss(huffman(kFourPoint, 3), kFourPoint), ValidationError);
}

TEST_CASE("depth-profile identities hold on random trees and sources") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 2 + static_cast<int>(rng.next_below(7));
        auto src = random_source(rng, n);
        auto tree = random_binary_tree(rng, n);
        tree.validate(n);
        auto profile = depth_profile(tree, src);
        CHECK(profile.sum() == doctest::Approx(entropy(src, 2)).epsilon(1e-12));
        CHECK(profile.weighted_sum() ==
              doctest::Approx(tree_loss(tree, src)).epsilon(1e-12));
    }
}

TEST_CASE("exhaustive uniform-loss search beats random trees") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + static_cast<int>(rng.next_below(4));
        auto src = random_source(rng, n);
        auto best = search_optimal_tree(src, TreeObjective::kUniformLoss,
                                        SearchMode::kExhaustive);
        double best_loss = tree_loss(best, src);
        for (int probe = 0; probe < 50; ++probe) {
            auto other = random_binary_tree(rng, n);
            CHECK(best_loss <= tree_loss(other, src) + 1e-12);
        }
    }
}

TEST_CASE("exhaustive expected-length search agrees with Huffman optimality") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + static_cast<int>(rng.next_below(5));
        auto src = random_source(rng, n);
        auto best = search_optimal_tree(src, TreeObjective::kExpectedLength,
                                        SearchMode::kExhaustive);
        CHECK(expected_length(best, src) ==
              doctest::Approx(expected_length(huffman(src, 2), src)).epsilon(1e-12));
    }
}

TEST_CASE("lift search never ends above the exhaustive optimum by much") {
    SplitMix64 rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + static_cast<int>(rng.next_below(5));
        auto src = random_source(rng, n);
        auto exact = search_optimal_tree(src, TreeObjective::kUniformLoss,
                                         SearchMode::kExhaustive);
        auto lifted = search_optimal_tree(src, TreeObjective::kUniformLoss,
                                          SearchMode::kLift);
        CHECK(tree_loss(lifted, src) >= tree_loss(exact, src) - 1e-12);
    }
}

TEST_CASE("uniform-loss minimizer for the four-point example is balanced") {
    auto best = search_optimal_tree(kFourPoint, TreeObjective::kUniformLoss,
                                    SearchMode::kExhaustive);
    CHECK(expected_length(best, kFourPoint) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(best.item_depths(4) == std::vector<int>{2, 2, 2, 2});
}

TEST_CASE("theorem-2 sweep: ratio starts at 1 and grows strictly") {
    auto rows = theorem2_gap(3);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[0].e_depth == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[1].ratio == doctest::Approx(2.0 / 1.75).epsilon(1e-12));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].ratio > rows[i - 1].ratio + 1e-9);
        CHECK(rows[i].exhaustive);
    }
}

TEST_CASE("theorem-3 bound: exact ELBO is tight, positive gaps stay below") {
    auto src = geometric_source(3);
    std::vector<double> zero_gaps(src.size(), 0.0);
    double h = entropy(src, 2);

    auto tight = check_theorem3_bound(src, h, zero_gaps);
    CHECK(tight.pass);
    CHECK(tight.lhs == doctest::Approx(tight.rhs).epsilon(1e-12));
    CHECK(std::abs(tight.margin) < 1e-9);

    SplitMix64 rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> gaps(src.size());
        double mean_s = 0.0;
        for (std::size_t i = 0; i < src.size(); ++i) {
            gaps[i] = rng.next_double(0.0, 2.0);
            mean_s += src.probs[i] * (-std::log2(src.probs[i]) + gaps[i]);
        }
        double beta = mean_s * (1.0 + rng.next_double());
        auto res = check_theorem3_bound(src, beta, gaps);
        CHECK(res.pass);
        CHECK(res.lhs <= res.rhs + 1e-9);
    }

    CHECK_THROWS_AS(check_theorem3_bound(src, 0.5 * h, zero_gaps), ValidationError);
}
