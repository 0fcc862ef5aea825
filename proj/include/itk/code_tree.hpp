#pragma once

#include <string>
#include <vector>

#include "itk/source.hpp"

namespace itk {

/// C-ary prefix-code tree. Node 0 is the root (depth 0). Leaves carry the
/// item index they encode; internal nodes carry child indices. Dummy leaves
/// (item == -1) appear only in Huffman trees of arity > 2, where
/// zero-probability symbols pad the first merge.
struct CodeTree {
    struct Node {
        std::vector<int> children;  // empty for leaves
        int item = -1;              // >= 0 for item leaves
    };

    int arity = 2;
    std::vector<Node> nodes;

    bool is_leaf(int n) const { return nodes[n].children.empty(); }

    // depth of each item's leaf, indexed by item; throws if an item in
    // [0, n_items) has no leaf.
    std::vector<int> item_depths(std::size_t n_items) const;

    // sum over items of arity^(-depth_i)
    double kraft_sum(std::size_t n_items) const;

    // nested-array encoding: a leaf is its item index, an internal node is
    // the list of its children (e.g. [[0,1],[2,3]])
    std::string to_nested_json() const;

    void validate(std::size_t n_items) const;
};

/// f_d = sum over internal nodes at depth d of p(j) * H(j), in bits.
struct DepthProfile {
    std::vector<double> f;  // indexed by depth, finitely supported

    double sum() const;            // equals H_2(D) for trees covering the source
    double weighted_sum() const;   // sum of d * f_d, equals the tree loss
};

// Huffman construction; E[len] lands in [H_C, H_C + 1).
CodeTree huffman(const DiscreteSource& src, int arity);

// E[N_x] = sum_i p(i) * depth(leaf_i), in tokens.
double expected_length(const CodeTree& tree, const DiscreteSource& src);

// The uniform-router tree loss L(T) = sum over internal nodes j of
// p(j) * l(j) * H(j), in bits. Binary trees only.
double tree_loss(const CodeTree& tree, const DiscreteSource& src);

DepthProfile depth_profile(const CodeTree& tree, const DiscreteSource& src);

enum class TreeObjective { kUniformLoss, kExpectedLength };
enum class SearchMode { kExhaustive, kLift };

// Exhaustive mode enumerates every unordered full binary tree over the
// items ((2n-3)!! of them, n <= 8) and returns a global minimizer; ties go
// to the lexicographically smallest per-item depth vector. Lift mode starts
// from Huffman and applies leaf-relocation moves (both directions) until no
// move improves the objective by more than 1e-12.
CodeTree search_optimal_tree(const DiscreteSource& src, TreeObjective objective,
                             SearchMode mode);

struct Theorem2Row {
    int m = 0;
    double h2 = 0.0;       // binary entropy of geometric_source(m)
    double e_depth = 0.0;  // expected depth of the uniform-loss minimizer
    double ratio = 0.0;    // e_depth / h2
    bool exhaustive = false;
};

// One row per M in [1, m_max]; exhaustive up to M = 3, lift beyond.
std::vector<Theorem2Row> theorem2_gap(int m_max);

struct Theorem3Result {
    double lhs = 0.0;  // E[N_x] under the linear budget rule with surrogate NLL
    double rhs = 0.0;  // H_C(D) + beta - E[-log_C p(x)]
    double margin = 0.0;
    bool pass = false;
};

// Checks E[N_x] <= H_C + beta - E[-log_C p] with the exact per-item
// surrogate NLL s_i = -log_C p_i + gap_i. Requires beta >= E[s]; all
// logarithms are base `arity`.
Theorem3Result check_theorem3_bound(const DiscreteSource& src, double beta,
                                    const std::vector<double>& elbo_gap,
                                    int arity = 2);

}  // namespace itk
