#pragma once

#include "polp/error.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace polp::bdd {

using VarId = std::uint32_t;

enum class VarKind { Fixed, Optimizable };

struct VarMeta {
    VarKind kind = VarKind::Fixed;
    /// Probability of being true; meaningful for fixed variables only.
    double prob = 0.5;
    std::string name;
};

/// Handle to a BDD function: a node of some manager plus a complement bit.
/// Handles of different managers (or of a manager before compaction) are
/// rejected by the manager.
class NodeRef {
public:
    NodeRef() = default;

    std::uint32_t index() const { return edge_ >> 1; }
    bool complemented() const { return edge_ & 1u; }
    bool is_constant() const { return index() == 0; }
    NodeRef regular() const { return NodeRef(edge_ & ~1u, manager_); }
    std::uint32_t edge() const { return edge_; }
    std::uint32_t manager_id() const { return manager_; }

    NodeRef operator!() const { return NodeRef(edge_ ^ 1u, manager_); }

    friend bool operator==(const NodeRef&, const NodeRef&) = default;

private:
    friend class BddManager;
    NodeRef(std::uint32_t edge, std::uint32_t manager) : edge_(edge), manager_(manager) {}

    std::uint32_t edge_ = 0;
    std::uint32_t manager_ = 0;
};

/// O(1) negation: flips the complement bit.
inline NodeRef negate(NodeRef f) { return !f; }

/// Reduced ordered BDD with complemented else-edges and a single TRUE terminal.
///
/// Nodes live in an arena; node 0 is the terminal. Internal edges are encoded
/// as `index << 1 | complement`. The then-edge of every node is regular, so
/// every Boolean function has exactly one edge encoding. Variables can be
/// permuted in place by adjacent-level swaps without invalidating handles.
class BddManager {
public:
    struct Node {
        VarId var;
        std::uint32_t hi;
        std::uint32_t lo;
    };

    static constexpr VarId kTerminalVar = std::numeric_limits<VarId>::max();
    static constexpr std::uint32_t kOne = 0;
    static constexpr std::uint32_t kZero = 1;

    explicit BddManager(std::size_t max_nodes = std::size_t{1} << 26)
        : id_(next_id()), max_nodes_(max_nodes) {
        nodes_.push_back({kTerminalVar, kOne, kOne});
    }

    // Handles embed the manager id; copies would alias it.
    BddManager(const BddManager&) = delete;
    BddManager& operator=(const BddManager&) = delete;
    BddManager(BddManager&&) = default;
    BddManager& operator=(BddManager&&) = default;

    /// Registers a variable at the bottom of the current order.
    VarId add_var(VarMeta meta) {
        VarId v = static_cast<VarId>(meta_.size());
        meta_.push_back(std::move(meta));
        level_of_.push_back(static_cast<std::uint32_t>(var_at_.size()));
        var_at_.push_back(v);
        subtables_.emplace_back();
        return v;
    }

    std::size_t num_vars() const { return meta_.size(); }
    const VarMeta& meta(VarId v) const { return meta_.at(v); }
    void set_prob(VarId v, double p) { meta_.at(v).prob = p; }
    void set_kind(VarId v, VarKind k) { meta_.at(v).kind = k; }

    std::uint32_t level_of(VarId v) const { return v == kTerminalVar ? terminal_level() : level_of_.at(v); }
    VarId var_at(std::uint32_t level) const { return var_at_.at(level); }
    const std::vector<VarId>& order() const { return var_at_; }

    NodeRef one() const { return wrap(kOne); }
    NodeRef zero() const { return wrap(kZero); }
    NodeRef constant(bool value) const { return value ? one() : zero(); }

    /// Canonical single-variable function.
    NodeRef var(VarId v) {
        if (v >= meta_.size()) throw ContractError("bdd", "unknown variable " + std::to_string(v));
        return wrap(make(v, kOne, kZero));
    }

    NodeRef apply_and(NodeRef a, NodeRef b) { return wrap(and_rec(unwrap(a), unwrap(b))); }

    NodeRef apply_or(NodeRef a, NodeRef b) { return wrap(and_rec(unwrap(a) ^ 1u, unwrap(b) ^ 1u) ^ 1u); }

    /// Top variable of f; kTerminalVar for constants.
    VarId top_var(NodeRef f) const { return nodes_[check(f).index()].var; }

    /// Cofactors of the function f with respect to its top variable
    /// (complement bit of f already applied).
    NodeRef high(NodeRef f) const {
        const Node& n = nodes_[check(f).index()];
        return wrap(n.hi ^ (f.edge() & 1u));
    }
    NodeRef low(NodeRef f) const {
        const Node& n = nodes_[check(f).index()];
        return wrap(n.lo ^ (f.edge() & 1u));
    }

    /// Raw stored edges of the regular node behind f.
    NodeRef then_edge(NodeRef f) const { return wrap(nodes_[check(f).index()].hi); }
    NodeRef else_edge(NodeRef f) const { return wrap(nodes_[check(f).index()].lo); }

    /// Evaluates f under a total assignment indexed by variable id.
    bool eval(NodeRef f, const std::vector<bool>& values) const {
        std::uint32_t e = check(f).edge();
        bool parity = false;
        while (true) {
            parity ^= (e & 1u) != 0;
            const Node& n = nodes_[e >> 1];
            if (n.var == kTerminalVar) return !parity;
            e = values.at(n.var) ? n.hi : n.lo;
        }
    }

    /// Number of distinct nodes reachable from f, terminal included.
    std::size_t node_count(NodeRef f) const {
        std::vector<std::uint32_t> stack{check(f).index()};
        std::vector<bool> seen(nodes_.size(), false);
        std::size_t count = 0;
        while (!stack.empty()) {
            std::uint32_t i = stack.back();
            stack.pop_back();
            if (seen[i]) continue;
            seen[i] = true;
            ++count;
            if (i == 0) continue;
            stack.push_back(nodes_[i].hi >> 1);
            stack.push_back(nodes_[i].lo >> 1);
        }
        return count;
    }

    /// Variables f depends on, in current order.
    std::vector<VarId> support(NodeRef f) const {
        std::vector<bool> seen(nodes_.size(), false), used(meta_.size(), false);
        std::vector<std::uint32_t> stack{check(f).index()};
        while (!stack.empty()) {
            std::uint32_t i = stack.back();
            stack.pop_back();
            if (seen[i] || i == 0) continue;
            seen[i] = true;
            used[nodes_[i].var] = true;
            stack.push_back(nodes_[i].hi >> 1);
            stack.push_back(nodes_[i].lo >> 1);
        }
        std::vector<VarId> out;
        for (VarId v : var_at_)
            if (used[v]) out.push_back(v);
        return out;
    }

    std::size_t arena_size() const { return nodes_.size(); }
    const Node& node(std::uint32_t index) const { return nodes_.at(index); }

    /// Exchanges the variables at `level` and `level + 1` in place. Every
    /// existing handle keeps denoting the same function.
    void swap_adjacent(std::uint32_t level) {
        if (level + 1 >= var_at_.size()) throw ContractError("bdd", "swap level out of range");
        VarId u = var_at_[level];
        VarId w = var_at_[level + 1];
        std::vector<std::uint32_t> upper = std::move(subtables_[u]);
        subtables_[u].clear();
        // w moves up first so that nodes created below are correctly ordered.
        var_at_[level] = w;
        var_at_[level + 1] = u;
        level_of_[w] = level;
        level_of_[u] = level + 1;
        for (std::uint32_t idx : upper) {
            const std::uint32_t f1 = nodes_[idx].hi;
            const std::uint32_t f0 = nodes_[idx].lo;
            const bool f1w = nodes_[f1 >> 1].var == w;
            const bool f0w = nodes_[f0 >> 1].var == w;
            if (!f1w && !f0w) {
                subtables_[u].push_back(idx);
                continue;
            }
            auto [f11, f10] = split(f1, f1w);
            auto [f01, f00] = split(f0, f0w);
            unique_.erase(Key{u, f1, f0});
            std::uint32_t hi = make(u, f11, f01);
            std::uint32_t lo = make(u, f10, f00);
            // hi is regular because f1 and its then-child are regular.
            nodes_[idx] = {w, hi, lo};
            unique_.emplace(Key{w, hi, lo}, idx);
            subtables_[w].push_back(idx);
        }
        ++swaps_;
    }

    std::size_t swap_count() const { return swaps_; }

    /// Rebuilds the arena keeping only nodes reachable from `roots`, returning
    /// the corresponding new handles. All other handles become invalid.
    std::vector<NodeRef> compact(std::span<const NodeRef> roots) {
        for (const auto& r : roots) check(r);
        std::vector<Node> old = std::move(nodes_);
        std::vector<std::uint32_t> remap(old.size(), std::numeric_limits<std::uint32_t>::max());
        nodes_.clear();
        unique_.clear();
        cache_.clear();
        for (auto& s : subtables_) s.clear();
        nodes_.push_back({kTerminalVar, kOne, kOne});
        remap[0] = 0;
        std::function<std::uint32_t(std::uint32_t)> copy = [&](std::uint32_t i) -> std::uint32_t {
            if (remap[i] != std::numeric_limits<std::uint32_t>::max()) return remap[i];
            const Node n = old[i];
            std::uint32_t hi = copy(n.hi >> 1) << 1 | (n.hi & 1u);
            std::uint32_t lo = copy(n.lo >> 1) << 1 | (n.lo & 1u);
            std::uint32_t idx = static_cast<std::uint32_t>(nodes_.size());
            nodes_.push_back({n.var, hi, lo});
            unique_.emplace(Key{n.var, hi, lo}, idx);
            subtables_[n.var].push_back(idx);
            remap[i] = idx;
            return idx;
        };
        id_ = next_id();
        std::vector<NodeRef> out;
        for (const auto& r : roots) out.push_back(wrap(copy(r.index()) << 1 | (r.edge() & 1u)));
        return out;
    }

    /// Verifies reducedness, uniqueness, ordering and the regular-then-edge
    /// convention over the whole arena. Returns an empty string when sound.
    std::string check_invariants() const {
        std::unordered_map<Key, std::uint32_t, KeyHash> seen;
        for (std::uint32_t i = 1; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            std::ostringstream err;
            if (n.hi == n.lo) err << "node " << i << " is redundant";
            else if (n.hi & 1u) err << "node " << i << " has a complemented then-edge";
            else if (level_of(nodes_[n.hi >> 1].var) <= level_of(n.var) ||
                     level_of(nodes_[n.lo >> 1].var) <= level_of(n.var))
                err << "node " << i << " violates the variable order";
            else if (!seen.emplace(Key{n.var, n.hi, n.lo}, i).second)
                err << "node " << i << " duplicates another node";
            if (!err.str().empty()) return err.str();
        }
        return {};
    }

    /// Graphviz rendering: solid 1-edges, dashed 0-edges, dotted complemented
    /// 0-edges.
    std::string to_dot(NodeRef root) const {
        check(root);
        std::ostringstream out;
        out << "digraph bdd {\n  root [shape=box,label=\"root\"];\n  n0 [shape=box,label=\"1\"];\n";
        out << "  root -> n" << root.index() << (root.complemented() ? " [style=dotted]" : " [style=solid]")
            << ";\n";
        std::vector<bool> seen(nodes_.size(), false);
        std::vector<std::uint32_t> stack{root.index()};
        while (!stack.empty()) {
            std::uint32_t i = stack.back();
            stack.pop_back();
            if (seen[i] || i == 0) continue;
            seen[i] = true;
            const Node& n = nodes_[i];
            const std::string& name = meta_[n.var].name;
            out << "  n" << i << " [label=\"" << (name.empty() ? "x" + std::to_string(n.var) : name) << "\"];\n";
            out << "  n" << i << " -> n" << (n.hi >> 1) << " [style=solid];\n";
            out << "  n" << i << " -> n" << (n.lo >> 1) << ((n.lo & 1u) ? " [style=dotted]" : " [style=dashed]")
                << ";\n";
            stack.push_back(n.hi >> 1);
            stack.push_back(n.lo >> 1);
        }
        out << "}\n";
        return out.str();
    }

    NodeRef wrap(std::uint32_t edge) const { return NodeRef(edge, id_); }

    std::uint32_t unwrap(NodeRef f) const { return check(f).edge(); }

    const NodeRef& check(const NodeRef& f) const {
        if (f.manager_id() != id_) throw ContractError("bdd", "node handle belongs to a different manager");
        if (f.index() >= nodes_.size()) throw ContractError("bdd", "node handle out of range");
        return f;
    }

private:
    struct Key {
        VarId var;
        std::uint32_t hi;
        std::uint32_t lo;
        friend bool operator==(const Key&, const Key&) = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = (std::uint64_t(k.var) * 0x9E3779B97F4A7C15ULL) ^
                              (std::uint64_t(k.hi) << 32 | k.lo) * 0xC2B2AE3D27D4EB4FULL;
            return static_cast<std::size_t>(h ^ (h >> 29));
        }
    };

    static std::uint32_t next_id() {
        static std::atomic<std::uint32_t> counter{1};
        return counter++;
    }

    std::uint32_t terminal_level() const { return static_cast<std::uint32_t>(var_at_.size()); }

    std::uint32_t edge_level(std::uint32_t e) const { return level_of(nodes_[e >> 1].var); }

    std::pair<std::uint32_t, std::uint32_t> split(std::uint32_t e, bool at_level) const {
        if (!at_level) return {e, e};
        const Node& n = nodes_[e >> 1];
        return {n.hi ^ (e & 1u), n.lo ^ (e & 1u)};
    }

    std::uint32_t make(VarId v, std::uint32_t hi, std::uint32_t lo) {
        if (hi == lo) return hi;
        std::uint32_t comp = hi & 1u;
        hi ^= comp;
        lo ^= comp;
        Key key{v, hi, lo};
        if (auto it = unique_.find(key); it != unique_.end()) return it->second << 1 | comp;
        if (nodes_.size() >= max_nodes_) throw ResourceError("bdd", "node arena exhausted");
        std::uint32_t idx = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({v, hi, lo});
        unique_.emplace(key, idx);
        subtables_[v].push_back(idx);
        return idx << 1 | comp;
    }

    std::uint32_t and_rec(std::uint32_t a, std::uint32_t b) {
        if (a == kOne) return b;
        if (b == kOne || a == b) return a;
        if (a == kZero || b == kZero || a == (b ^ 1u)) return kZero;
        if (a > b) std::swap(a, b);
        std::uint64_t key = std::uint64_t(a) << 32 | b;
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        std::uint32_t la = edge_level(a), lb = edge_level(b);
        std::uint32_t top = std::min(la, lb);
        auto [a1, a0] = split(a, la == top);
        auto [b1, b0] = split(b, lb == top);
        std::uint32_t hi = and_rec(a1, b1);
        std::uint32_t lo = and_rec(a0, b0);
        std::uint32_t r = make(var_at_[top], hi, lo);
        cache_.emplace(key, r);
        return r;
    }

    std::uint32_t id_;
    std::size_t max_nodes_;
    std::vector<Node> nodes_;
    std::vector<VarMeta> meta_;
    std::vector<std::uint32_t> level_of_;
    std::vector<VarId> var_at_;
    std::vector<std::vector<std::uint32_t>> subtables_;
    std::unordered_map<Key, std::uint32_t, KeyHash> unique_;
    std::unordered_map<std::uint64_t, std::uint32_t> cache_;
    std::size_t swaps_ = 0;
};

inline NodeRef mk_var(BddManager& m, VarId v) { return m.var(v); }
inline NodeRef apply_and(BddManager& m, NodeRef a, NodeRef b) { return m.apply_and(a, b); }
inline NodeRef apply_or(BddManager& m, NodeRef a, NodeRef b) { return m.apply_or(a, b); }

/// Dynamic-programming probability of BDD nodes whose variables are all
/// fixed. Results are memoized per regular node, so one evaluator can be
/// shared by many queries against the same manager state.
class ProbEvaluator {
public:
    explicit ProbEvaluator(const BddManager& m) : m_(m) {}

    double operator()(NodeRef f) {
        double p = regular(m_.check(f).index());
        return f.complemented() ? 1.0 - p : p;
    }

    /// Probability of the uncomplemented node with the given arena index.
    double regular(std::uint32_t index) {
        if (index == 0) return 1.0;
        if (auto it = table_.find(index); it != table_.end()) return it->second;
        const auto& n = m_.node(index);
        const VarMeta& meta = m_.meta(n.var);
        if (meta.kind != VarKind::Fixed)
            throw ContractError("bdd", "prob reached optimizable variable " +
                                           (meta.name.empty() ? std::to_string(n.var) : meta.name));
        double p0 = regular(n.lo >> 1);
        double p1 = regular(n.hi >> 1);
        if (n.lo & 1u) p0 = 1.0 - p0;
        double res = p1 * meta.prob + p0 * (1.0 - meta.prob);
        table_.emplace(index, res);
        return res;
    }

    std::size_t table_size() const { return table_.size(); }

private:
    const BddManager& m_;
    std::unordered_map<std::uint32_t, double> table_;
};

/// Probability of f; every variable reachable from f must be fixed.
inline double prob(const BddManager& m, NodeRef f) { return ProbEvaluator(m)(f); }

/// Moves every optimizable variable above every fixed variable by adjacent
/// swaps, keeping the relative order inside both blocks. Returns `root`,
/// which still denotes the same function.
inline NodeRef reorder_optimizable_first(BddManager& m, NodeRef root) {
    m.check(root);
    const auto n = static_cast<std::uint32_t>(m.num_vars());
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::uint32_t l = 0; l + 1 < n; ++l) {
            if (m.meta(m.var_at(l)).kind == VarKind::Fixed && m.meta(m.var_at(l + 1)).kind == VarKind::Optimizable) {
                m.swap_adjacent(l);
                changed = true;
            }
        }
    }
    return root;
}

struct PathLiteral {
    VarId var;
    bool value;

    friend bool operator==(const PathLiteral&, const PathLiteral&) = default;
    friend auto operator<=>(const PathLiteral&, const PathLiteral&) = default;
};

/// One path through the optimizable block of a reordered BDD: the literals
/// chosen for optimizable variables and the probability of the fixed
/// sub-BDD reached at its end.
struct PathTerm {
    double coeff = 0.0;
    std::vector<PathLiteral> literals;

    friend bool operator==(const PathTerm&, const PathTerm&) = default;
};

struct PathsStats {
    std::size_t expanded_nodes = 0; // optimizable nodes whose paths were computed
    std::size_t frontier_nodes = 0; // fixed or terminal nodes whose probability was computed
    std::size_t swaps = 0;
};

/// Enumerates the paths of `root` over optimizable variables after
/// reordering them to the top. Summing coeff * prod(x or 1-x) over the
/// returned terms gives the probability of `root` as a function of the
/// optimizable variables. Terms with zero coefficient are dropped.
///
/// Path lists are memoized per node for the uncomplemented function; a
/// complemented edge reuses them with coefficients c -> 1 - c, which is exact
/// because the paths of a node partition the optimizable assignments.
inline std::vector<PathTerm> paths_prob(BddManager& m, NodeRef root, PathsStats* stats = nullptr) {
    const std::size_t swaps_before = m.swap_count();
    root = reorder_optimizable_first(m, root);
    ProbEvaluator prob_table(m);
    std::unordered_map<std::uint32_t, std::vector<PathTerm>> table_paths;
    PathsStats local;

    std::function<const std::vector<PathTerm>&(std::uint32_t)> rec =
        [&](std::uint32_t index) -> const std::vector<PathTerm>& {
        if (auto it = table_paths.find(index); it != table_paths.end()) return it->second;
        const auto& n = m.node(index);
        std::vector<PathTerm> res;
        if (index == 0 || m.meta(n.var).kind == VarKind::Fixed) {
            ++local.frontier_nodes;
            res.push_back({prob_table.regular(index), {}});
        } else {
            ++local.expanded_nodes;
            const std::uint32_t lo = n.lo, hi = n.hi;
            const VarId v = n.var;
            // Copy: the recursive calls may rehash table_paths.
            std::vector<PathTerm> lp0 = rec(lo >> 1);
            const bool comp0 = lo & 1u;
            for (auto& t : lp0) {
                if (comp0) t.coeff = 1.0 - t.coeff;
                t.literals.push_back({v, false});
                res.push_back(std::move(t));
            }
            std::vector<PathTerm> lp1 = rec(hi >> 1);
            for (auto& t : lp1) {
                t.literals.push_back({v, true});
                res.push_back(std::move(t));
            }
        }
        return table_paths.emplace(index, std::move(res)).first->second;
    };

    std::vector<PathTerm> out;
    for (PathTerm t : rec(root.index())) {
        if (root.complemented()) t.coeff = 1.0 - t.coeff;
        if (t.coeff > 0.0) out.push_back(std::move(t));
    }
    local.swaps = m.swap_count() - swaps_before;
    if (stats) *stats = local;
    return out;
}

} // namespace polp::bdd
