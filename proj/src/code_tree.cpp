#include "itk/code_tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

#include "itk/errors.hpp"

namespace itk {

namespace {

double binary_entropy(double a, double b) {
    double s = a + b;
    if (s <= 0.0) return 0.0;
    double h = 0.0;
    if (a > 0.0) h -= (a / s) * std::log2(a / s);
    if (b > 0.0) h -= (b / s) * std::log2(b / s);
    return h;
}

// Per-node depth and subtree probability mass.
struct NodeStats {
    std::vector<int> depth;
    std::vector<double> prob;
};

NodeStats node_stats(const CodeTree& tree, const DiscreteSource& src) {
    NodeStats st;
    st.depth.assign(tree.nodes.size(), 0);
    st.prob.assign(tree.nodes.size(), 0.0);
    // depths top-down
    std::vector<int> stack{0};
    while (!stack.empty()) {
        int n = stack.back();
        stack.pop_back();
        for (int c : tree.nodes[n].children) {
            st.depth[c] = st.depth[n] + 1;
            stack.push_back(c);
        }
    }
    // probs bottom-up (postorder)
    std::function<double(int)> fill = [&](int n) -> double {
        const auto& node = tree.nodes[n];
        if (node.children.empty()) {
            double p = 0.0;
            if (node.item >= 0) {
                if (static_cast<std::size_t>(node.item) >= src.probs.size())
                    throw ValidationError("CodeTree: leaf item outside the source");
                p = src.probs[node.item];
            }
            st.prob[n] = p;
            return p;
        }
        double p = 0.0;
        for (int c : node.children) p += fill(c);
        st.prob[n] = p;
        return p;
    };
    fill(0);
    return st;
}

}  // namespace

std::vector<int> CodeTree::item_depths(std::size_t n_items) const {
    std::vector<int> depths(n_items, -1);
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [n, d] = stack.back();
        stack.pop_back();
        if (is_leaf(n)) {
            if (nodes[n].item >= 0) {
                if (static_cast<std::size_t>(nodes[n].item) >= n_items)
                    throw ValidationError("CodeTree: leaf item out of range");
                if (depths[nodes[n].item] != -1)
                    throw ValidationError("CodeTree: duplicate leaf for item");
                depths[nodes[n].item] = d;
            }
        } else {
            for (int c : nodes[n].children) stack.push_back({c, d + 1});
        }
    }
    for (std::size_t i = 0; i < n_items; ++i)
        if (depths[i] < 0)
            throw ValidationError("CodeTree: item " + std::to_string(i) + " has no leaf");
    return depths;
}

double CodeTree::kraft_sum(std::size_t n_items) const {
    double sum = 0.0;
    for (int d : item_depths(n_items)) sum += std::pow(static_cast<double>(arity), -d);
    return sum;
}

std::string CodeTree::to_nested_json() const {
    std::ostringstream out;
    std::function<void(int)> emit = [&](int n) {
        if (is_leaf(n)) {
            out << nodes[n].item;
            return;
        }
        out << '[';
        bool first = true;
        for (int c : nodes[n].children) {
            if (!first) out << ',';
            first = false;
            emit(c);
        }
        out << ']';
    };
    emit(0);
    return out.str();
}

void CodeTree::validate(std::size_t n_items) const {
    if (arity < 2) throw ValidationError("CodeTree: arity must be >= 2");
    if (nodes.empty()) throw ValidationError("CodeTree: empty");
    for (const auto& node : nodes) {
        if (!node.children.empty() &&
            (node.children.size() < 2 ||
             node.children.size() > static_cast<std::size_t>(arity)))
            throw ValidationError("CodeTree: internal node with bad child count");
    }
    if (kraft_sum(n_items) > 1.0 + 1e-9)
        throw ValidationError("CodeTree: Kraft inequality violated");
}

double DepthProfile::sum() const {
    double s = 0.0;
    for (double v : f) s += v;
    return s;
}

double DepthProfile::weighted_sum() const {
    double s = 0.0;
    for (std::size_t d = 0; d < f.size(); ++d) s += static_cast<double>(d) * f[d];
    return s;
}

CodeTree huffman(const DiscreteSource& src, int arity) {
    src.validate();
    if (arity < 2) throw ValidationError("huffman: arity must be >= 2");

    CodeTree tree;
    tree.arity = arity;
    const int n = static_cast<int>(src.probs.size());
    for (int i = 0; i < n; ++i) tree.nodes.push_back({{}, i});

    // Dummy zero-probability symbols so every merge (in particular the
    // first) is full: need (n + d - 1) divisible by arity - 1.
    int dummies = 0;
    while ((n + dummies - 1) % (arity - 1) != 0) {
        tree.nodes.push_back({{}, -1});
        ++dummies;
    }

    // Min-heap keyed by (prob, insertion sequence) for deterministic ties.
    using Entry = std::pair<std::pair<double, long>, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    long seq = 0;
    for (int i = 0; i < n; ++i) heap.push({{src.probs[i], seq++}, i});
    for (int i = 0; i < dummies; ++i) heap.push({{0.0, seq++}, n + i});

    while (heap.size() > 1) {
        CodeTree::Node merged;
        double p = 0.0;
        for (int k = 0; k < arity && !heap.empty(); ++k) {
            auto [key, idx] = heap.top();
            heap.pop();
            p += key.first;
            merged.children.push_back(idx);
        }
        tree.nodes.push_back(std::move(merged));
        heap.push({{p, seq++}, static_cast<int>(tree.nodes.size()) - 1});
    }

    // Reindex so the root is node 0 (heap leaves it last).
    int root = heap.top().second;
    if (root != 0) {
        std::vector<int> remap(tree.nodes.size());
        std::vector<CodeTree::Node> reordered;
        reordered.reserve(tree.nodes.size());
        std::vector<int> order{root};
        for (std::size_t i = 0; i < order.size(); ++i)
            for (int c : tree.nodes[order[i]].children) order.push_back(c);
        for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<int>(i);
        for (int old : order) {
            CodeTree::Node node = tree.nodes[old];
            for (int& c : node.children) c = remap[c];
            reordered.push_back(std::move(node));
        }
        tree.nodes = std::move(reordered);
    }
    return tree;
}

double expected_length(const CodeTree& tree, const DiscreteSource& src) {
    src.validate();
    auto depths = tree.item_depths(src.probs.size());
    double e = 0.0;
    for (std::size_t i = 0; i < src.probs.size(); ++i) e += src.probs[i] * depths[i];
    return e;
}

double tree_loss(const CodeTree& tree, const DiscreteSource& src) {
    if (tree.arity != 2)
        throw ValidationError("tree_loss: only binary trees are supported");
    tree.item_depths(src.probs.size());  // coverage check
    auto st = node_stats(tree, src);
    double loss = 0.0;
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        if (tree.is_leaf(static_cast<int>(n))) continue;
        const auto& ch = tree.nodes[n].children;
        if (ch.size() != 2)
            throw ValidationError("tree_loss: non-binary internal node");
        loss += st.prob[n] * st.depth[n] * binary_entropy(st.prob[ch[0]], st.prob[ch[1]]);
    }
    return loss;
}

DepthProfile depth_profile(const CodeTree& tree, const DiscreteSource& src) {
    if (tree.arity != 2)
        throw ValidationError("depth_profile: only binary trees are supported");
    tree.item_depths(src.probs.size());
    auto st = node_stats(tree, src);
    DepthProfile prof;
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        if (tree.is_leaf(static_cast<int>(n))) continue;
        const auto& ch = tree.nodes[n].children;
        int d = st.depth[n];
        if (static_cast<std::size_t>(d) >= prof.f.size()) prof.f.resize(d + 1, 0.0);
        prof.f[d] += st.prob[n] * binary_entropy(st.prob[ch[0]], st.prob[ch[1]]);
    }
    return prof;
}

namespace {

// Mutable rooted binary tree used by both search modes. Leaves carry item
// indices; internal nodes have both children set.
struct BinTree {
    std::vector<int> left, right, parent, item;
    int root = 0;

    static BinTree single_leaf(int n_capacity) {
        BinTree t;
        t.left.assign(n_capacity, -1);
        t.right.assign(n_capacity, -1);
        t.parent.assign(n_capacity, -1);
        t.item.assign(n_capacity, -1);
        t.item[0] = 0;
        return t;
    }

    bool is_leaf(int n) const { return left[n] == -1; }

    void replace_child(int p, int old_child, int new_child) {
        if (p == -1) {
            root = new_child;
            parent[new_child] = -1;
        } else {
            (left[p] == old_child ? left[p] : right[p]) = new_child;
            parent[new_child] = p;
        }
    }
};

struct EvalResult {
    double objective;
    double e_depth;
};

// Single postorder pass computing the chosen objective; also records
// per-item depths when `depths` is non-null.
EvalResult evaluate(const BinTree& t, const std::vector<double>& probs,
                    TreeObjective objective, std::vector<int>* depths) {
    double loss = 0.0, e_depth = 0.0;
    std::function<double(int, int)> rec = [&](int n, int d) -> double {
        if (t.is_leaf(n)) {
            double p = probs[t.item[n]];
            e_depth += p * d;
            if (depths) (*depths)[t.item[n]] = d;
            return p;
        }
        double pl = rec(t.left[n], d + 1);
        double pr = rec(t.right[n], d + 1);
        loss += (pl + pr) * d * binary_entropy(pl, pr);
        return pl + pr;
    };
    rec(t.root, 0);
    return {objective == TreeObjective::kUniformLoss ? loss : e_depth, e_depth};
}

CodeTree to_code_tree(const BinTree& t) {
    CodeTree tree;
    tree.arity = 2;
    std::vector<int> order{t.root};
    std::vector<int> remap(t.left.size(), -1);
    for (std::size_t i = 0; i < order.size(); ++i) {
        int n = order[i];
        remap[n] = static_cast<int>(i);
        if (!t.is_leaf(n)) {
            order.push_back(t.left[n]);
            order.push_back(t.right[n]);
        }
    }
    for (int n : order) {
        CodeTree::Node node;
        node.item = t.item[n];
        if (!t.is_leaf(n)) node.children = {remap[t.left[n]], remap[t.right[n]]};
        tree.nodes.push_back(std::move(node));
    }
    return tree;
}

class ExhaustiveSearch {
public:
    ExhaustiveSearch(const std::vector<double>& probs, TreeObjective objective)
        : probs_(probs),
          objective_(objective),
          n_(static_cast<int>(probs.size())),
          tree_(BinTree::single_leaf(2 * static_cast<int>(probs.size()) - 1)),
          scratch_depths_(probs.size(), 0) {}

    BinTree run() {
        insert(1);
        return best_;
    }

private:
    void insert(int k) {
        if (k == n_) {
            consider();
            return;
        }
        // Splice a new internal node u above each existing node v (including
        // the root edge); this visits each unordered tree exactly once.
        int u = 2 * k - 1, l = 2 * k;
        for (int v = 0; v <= 2 * k - 2; ++v) {
            int p = tree_.parent[v];
            tree_.replace_child(p, v, u);
            tree_.left[u] = v;
            tree_.right[u] = l;
            tree_.parent[v] = u;
            tree_.parent[l] = u;
            tree_.item[l] = k;
            insert(k + 1);
            tree_.replace_child(p, u, v);
        }
        tree_.left[u] = -1;
        tree_.right[u] = -1;
        tree_.item[l] = -1;
    }

    void consider() {
        auto res = evaluate(tree_, probs_, objective_, &scratch_depths_);
        if (!have_best_ || res.objective < best_obj_ - 1e-12) {
            take();
            return;
        }
        // Near-tie: lowest per-item depth vector wins, deterministically.
        if (res.objective <= best_obj_ + 1e-12 && scratch_depths_ < best_depths_) take();
    }

    void take() {
        best_ = tree_;
        best_obj_ = evaluate(tree_, probs_, objective_, &scratch_depths_).objective;
        best_depths_ = scratch_depths_;
        have_best_ = true;
    }

    const std::vector<double>& probs_;
    TreeObjective objective_;
    int n_;
    BinTree tree_;
    BinTree best_;
    double best_obj_ = 0.0;
    std::vector<int> scratch_depths_, best_depths_;
    bool have_best_ = false;
};

BinTree from_code_tree(const CodeTree& tree, int n_items) {
    BinTree t = BinTree::single_leaf(2 * n_items - 1);
    // rebuild with our index layout
    std::function<int(int, int&)> rec = [&](int n, int& next) -> int {
        int idx = next++;
        if (tree.is_leaf(n)) {
            t.item[idx] = tree.nodes[n].item;
            t.left[idx] = t.right[idx] = -1;
        } else {
            t.item[idx] = -1;
            int l = rec(tree.nodes[n].children[0], next);
            int r = rec(tree.nodes[n].children[1], next);
            t.left[idx] = l;
            t.right[idx] = r;
            t.parent[l] = idx;
            t.parent[r] = idx;
        }
        return idx;
    };
    int next = 0;
    t.root = rec(0, next);
    t.parent[t.root] = -1;
    return t;
}

// First-improvement local search over leaf relocations: detach leaf a and
// re-splice it as the sibling of leaf b. Scanning all ordered (a, b) pairs
// covers both the lift (deep -> shallow) and push (shallow -> deep) moves.
BinTree lift_search(BinTree t, const std::vector<double>& probs,
                    TreeObjective objective) {
    const int n = static_cast<int>(probs.size());
    if (n < 3) return t;
    std::vector<int> dummy;
    double best = evaluate(t, probs, objective, nullptr).objective;

    // leaves ordered by probability ascending, item index breaking ties
    std::vector<int> items(n);
    for (int i = 0; i < n; ++i) items[i] = i;
    std::stable_sort(items.begin(), items.end(),
                     [&](int a, int b) { return probs[a] < probs[b]; });

    bool improved = true;
    while (improved) {
        improved = false;
        std::vector<int> leaf_of(n, -1);
        for (std::size_t idx = 0; idx < t.item.size(); ++idx)
            if (t.item[idx] >= 0 && t.is_leaf(static_cast<int>(idx)))
                leaf_of[t.item[idx]] = static_cast<int>(idx);

        for (int ia : items) {
            for (int ib : items) {
                if (ia == ib) continue;
                int a = leaf_of[ia], b = leaf_of[ib];
                int pa = t.parent[a];
                int sib = (t.left[pa] == a) ? t.right[pa] : t.left[pa];
                if (sib == b) continue;  // no-op move
                int ga = t.parent[pa];
                int old_left = t.left[pa], old_right = t.right[pa];
                // detach a (pa collapses onto its other child)
                t.replace_child(ga, pa, sib);
                // re-splice pa above b, with a as the new sibling
                int pb = t.parent[b];
                t.replace_child(pb, b, pa);
                t.left[pa] = b;
                t.right[pa] = a;
                t.parent[b] = pa;
                t.parent[a] = pa;

                double obj = evaluate(t, probs, objective, nullptr).objective;
                if (best - obj > 1e-12) {
                    best = obj;
                    improved = true;
                    break;
                }
                // undo
                t.replace_child(pb, pa, b);
                t.replace_child(ga, sib, pa);
                t.left[pa] = old_left;
                t.right[pa] = old_right;
                t.parent[old_left] = pa;
                t.parent[old_right] = pa;
            }
            if (improved) break;
        }
    }
    return t;
}

}  // namespace

CodeTree search_optimal_tree(const DiscreteSource& src, TreeObjective objective,
                             SearchMode mode) {
    src.validate();
    const int n = static_cast<int>(src.probs.size());
    if (mode == SearchMode::kExhaustive) {
        if (n > 8)
            throw ValidationError("search_optimal_tree: exhaustive mode capped at 8 items");
        ExhaustiveSearch search(src.probs, objective);
        return to_code_tree(search.run());
    }
    BinTree start = from_code_tree(huffman(src, 2), n);
    return to_code_tree(lift_search(std::move(start), src.probs, objective));
}

std::vector<Theorem2Row> theorem2_gap(int m_max) {
    if (m_max < 1) throw ValidationError("theorem2_gap: M_max must be >= 1");
    std::vector<Theorem2Row> rows;
    for (int m = 1; m <= m_max; ++m) {
        auto src = geometric_source(m);
        Theorem2Row row;
        row.m = m;
        row.h2 = entropy(src, 2);
        row.exhaustive = (m <= 3);
        auto tree = search_optimal_tree(src, TreeObjective::kUniformLoss,
                                        row.exhaustive ? SearchMode::kExhaustive
                                                       : SearchMode::kLift);
        row.e_depth = expected_length(tree, src);
        row.ratio = row.e_depth / row.h2;
        rows.push_back(row);
    }
    return rows;
}

Theorem3Result check_theorem3_bound(const DiscreteSource& src, double beta,
                                    const std::vector<double>& elbo_gap,
                                    int arity) {
    src.validate();
    if (arity < 2) throw ValidationError("check_theorem3_bound: arity must be >= 2");
    if (elbo_gap.size() != src.probs.size())
        throw ValidationError("check_theorem3_bound: gap count mismatch");
    for (double g : elbo_gap)
        if (g < 0.0)
            throw ValidationError("check_theorem3_bound: gaps must be nonnegative");

    const double log_c = std::log(static_cast<double>(arity));
    double h_c = 0.0, e_surrogate = 0.0;
    std::vector<double> surrogate(src.probs.size());
    for (std::size_t i = 0; i < src.probs.size(); ++i) {
        double nll = -std::log(src.probs[i]) / log_c;
        surrogate[i] = nll + elbo_gap[i];
        h_c += src.probs[i] * nll;
        e_surrogate += src.probs[i] * surrogate[i];
    }
    if (beta < e_surrogate - 1e-12)
        throw ValidationError(
            "check_theorem3_bound: beta below the admissible minimum E[-ELBO] = " +
            std::to_string(e_surrogate));

    Theorem3Result res;
    // E[N_x] with the linear budget rule N_x = beta * s_x / E[s], exact reals.
    for (std::size_t i = 0; i < src.probs.size(); ++i)
        res.lhs += src.probs[i] * beta * surrogate[i] / e_surrogate;
    res.rhs = h_c + beta - h_c;  // H_C(D) + beta - E[-log_C p(x)]
    res.margin = res.rhs - res.lhs;
    res.pass = res.lhs <= res.rhs + 1e-9;
    return res;
}

}  // namespace itk
