#include "polp/bdd.hpp"
#include "polp/grounder.hpp"
#include "polp/parser.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace polp;
using namespace polp::bdd;
using Catch::Approx;

namespace {

// Random formula as a BDD plus an independent truth table over `n` variables.
struct Formula {
    NodeRef f;
    std::vector<bool> table;
};

Formula random_formula(BddManager& m, std::mt19937_64& rng, std::size_t n, int depth) {
    const std::size_t rows = std::size_t{1} << n;
    if (depth == 0 || rng() % 4 == 0) {
        VarId v = static_cast<VarId>(rng() % n);
        std::vector<bool> t(rows);
        for (std::size_t w = 0; w < rows; ++w) t[w] = (w >> v) & 1u;
        return {m.var(v), t};
    }
    Formula a = random_formula(m, rng, n, depth - 1);
    Formula b = random_formula(m, rng, n, depth - 1);
    std::vector<bool> t(rows);
    switch (rng() % 3) {
    case 0:
        for (std::size_t w = 0; w < rows; ++w) t[w] = a.table[w] && b.table[w];
        return {m.apply_and(a.f, b.f), t};
    case 1:
        for (std::size_t w = 0; w < rows; ++w) t[w] = a.table[w] || b.table[w];
        return {m.apply_or(a.f, b.f), t};
    default:
        for (std::size_t w = 0; w < rows; ++w) t[w] = !a.table[w];
        return {!a.f, t};
    }
}

std::vector<bool> bits(std::size_t w, std::size_t n) {
    std::vector<bool> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (w >> i) & 1u;
    return v;
}

void add_vars(BddManager& m, std::size_t n, std::mt19937_64& rng, bool mixed) {
    for (std::size_t i = 0; i < n; ++i) {
        VarKind kind = mixed && rng() % 2 ? VarKind::Optimizable : VarKind::Fixed;
        m.add_var({kind, 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0, "v" + std::to_string(i)});
    }
}

} // namespace

TEST_CASE("constants and negation") {
    BddManager m;
    m.add_var({});
    NodeRef a = m.var(0);
    CHECK(m.one() != m.zero());
    CHECK((!m.one()) == m.zero());
    CHECK((!!a) == a);
    CHECK(m.apply_and(a, !a) == m.zero());
    CHECK(m.apply_or(a, !a) == m.one());
    CHECK(m.apply_and(a, m.one()) == a);
    CHECK(m.apply_or(a, m.zero()) == a);
    CHECK(negate(a) == !a);
    CHECK_FALSE(m.var(0).complemented());
    CHECK(m.low(a) == m.zero());
    CHECK(m.high(a) == m.one());
    CHECK(m.low(!a) == m.one());
    CHECK_THROWS_AS(m.var(7), ContractError);
}

TEST_CASE("equal functions share one handle") {
    BddManager m;
    for (int i = 0; i < 3; ++i) m.add_var({});
    NodeRef a = m.var(0), b = m.var(1), c = m.var(2);
    NodeRef f = m.apply_or(m.apply_and(a, b), m.apply_and(a, c));
    NodeRef g = m.apply_and(a, m.apply_or(c, b));
    CHECK(f == g);
    CHECK((!m.apply_and(!a, !b)) == m.apply_or(a, b));
    CHECK(m.check_invariants().empty());
}

TEST_CASE("then-edges are never complemented") {
    std::mt19937_64 rng(1);
    BddManager m;
    add_vars(m, 6, rng, false);
    for (int i = 0; i < 50; ++i) random_formula(m, rng, 6, 5);
    for (std::uint32_t i = 1; i < m.arena_size(); ++i) CHECK((m.node(i).hi & 1u) == 0);
    CHECK(m.check_invariants().empty());
}

TEST_CASE("random formulas agree with their truth tables") {
    std::mt19937_64 rng(2);
    for (int round = 0; round < 40; ++round) {
        BddManager m;
        add_vars(m, 6, rng, false);
        Formula f = random_formula(m, rng, 6, 6);
        for (std::size_t w = 0; w < 64; ++w) REQUIRE(m.eval(f.f, bits(w, 6)) == f.table[w]);
    }
}

TEST_CASE("probability by dynamic programming equals the weighted truth table") {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 40; ++round) {
        BddManager m;
        add_vars(m, 6, rng, false);
        Formula f = random_formula(m, rng, 6, 6);
        double expected = 0.0;
        for (std::size_t w = 0; w < 64; ++w) {
            if (!f.table[w]) continue;
            double pw = 1.0;
            for (VarId v = 0; v < 6; ++v) pw *= ((w >> v) & 1u) ? m.meta(v).prob : 1.0 - m.meta(v).prob;
            expected += pw;
        }
        CHECK(prob(m, f.f) == Approx(expected).margin(1e-12));
        CHECK(prob(m, !f.f) == Approx(1.0 - expected).margin(1e-12));
    }
}

TEST_CASE("probability refuses optimizable variables") {
    BddManager m;
    m.add_var({VarKind::Optimizable, 0.5, "x"});
    CHECK_THROWS_AS(prob(m, m.var(0)), ContractError);
}

TEST_CASE("adjacent swaps keep every handle's function") {
    std::mt19937_64 rng(4);
    for (int round = 0; round < 30; ++round) {
        BddManager m;
        add_vars(m, 6, rng, false);
        std::vector<Formula> fs;
        for (int i = 0; i < 4; ++i) fs.push_back(random_formula(m, rng, 6, 5));
        for (int s = 0; s < 10; ++s) {
            m.swap_adjacent(static_cast<std::uint32_t>(rng() % 5));
            REQUIRE(m.check_invariants().empty());
        }
        for (const auto& f : fs)
            for (std::size_t w = 0; w < 64; ++w) REQUIRE(m.eval(f.f, bits(w, 6)) == f.table[w]);
    }
}

TEST_CASE("reordering puts optimizable variables first, stably") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 30; ++round) {
        BddManager m;
        add_vars(m, 7, rng, true);
        Formula f = random_formula(m, rng, 7, 6);
        std::vector<VarId> opt, fixed;
        for (VarId v : m.order()) (m.meta(v).kind == VarKind::Optimizable ? opt : fixed).push_back(v);
        NodeRef r = reorder_optimizable_first(m, f.f);
        std::vector<VarId> expected = opt;
        expected.insert(expected.end(), fixed.begin(), fixed.end());
        CHECK(m.order() == expected);
        CHECK(m.check_invariants().empty());
        for (std::size_t w = 0; w < 128; ++w) REQUIRE(m.eval(r, bits(w, 7)) == f.table[w]);
    }
}

TEST_CASE("compaction keeps the roots and invalidates other handles") {
    std::mt19937_64 rng(6);
    BddManager m;
    add_vars(m, 5, rng, false);
    Formula keep = random_formula(m, rng, 5, 5);
    Formula drop = random_formula(m, rng, 5, 5);
    std::vector<NodeRef> roots{keep.f};
    auto fresh = m.compact(roots);
    CHECK(m.arena_size() == m.node_count(fresh[0]));
    for (std::size_t w = 0; w < 32; ++w) CHECK(m.eval(fresh[0], bits(w, 5)) == keep.table[w]);
    CHECK_THROWS_AS(m.eval(drop.f, bits(0, 5)), ContractError);
}

TEST_CASE("handles of another manager are rejected") {
    BddManager a, b;
    a.add_var({});
    b.add_var({});
    CHECK_THROWS_AS(a.apply_and(a.var(0), b.var(0)), ContractError);
}

TEST_CASE("node arena limit raises a resource error") {
    BddManager m(4);
    for (int i = 0; i < 8; ++i) m.add_var({});
    NodeRef f = m.one();
    auto build = [&] {
        for (VarId v = 0; v < 8; ++v) f = m.apply_and(f, m.var(v));
    };
    CHECK_THROWS_AS(build(), ResourceError);
}

TEST_CASE("network query has three path terms") {
    GroundProgram gp = ground(parse_program(test::kNetwork));
    BddManager m;
    register_variables(gp, m);
    NodeRef root = compile_query(gp, m, parse_atom_text("path(a,e)"));
    PathsStats stats;
    auto paths = paths_prob(m, root, &stats);
    REQUIRE(paths.size() == 3);
    // Vars 1 and 2 are edge(b,c) and edge(b,d).
    auto find = [&](bool bc, bool bd) -> const PathTerm* {
        for (const auto& t : paths) {
            std::optional<bool> vbc, vbd;
            for (const auto& l : t.literals) (l.var == 1 ? vbc : vbd) = l.value;
            if (vbc == bc && vbd == bd) return &t;
        }
        return nullptr;
    };
    const PathTerm* both = find(true, true);
    const PathTerm* only_bc = find(true, false);
    const PathTerm* only_bd = find(false, true);
    REQUIRE(both);
    REQUIRE(only_bc);
    REQUIRE(only_bd);
    CHECK(std::abs(both->coeff - 0.774) < 1e-12);
    CHECK(std::abs(only_bd->coeff - 0.72) < 1e-12);
    CHECK(std::abs(only_bc->coeff - 0.27) < 1e-12);
    CHECK(stats.expanded_nodes + stats.frontier_nodes <= m.node_count(root));
    CHECK(m.order()[0] == 1);
    CHECK(m.order()[1] == 2);
}

TEST_CASE("each BDD node is visited at most once during path extraction") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 40; ++round) {
        BddManager m;
        add_vars(m, 8, rng, true);
        Formula f = random_formula(m, rng, 8, 7);
        PathsStats stats;
        auto paths = paths_prob(m, f.f, &stats);
        CHECK(stats.expanded_nodes + stats.frontier_nodes <= m.node_count(f.f));
        for (const auto& t : paths) {
            CHECK(t.coeff > 0.0);
            CHECK(t.coeff <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("graphviz output lists every node") {
    BddManager m;
    for (int i = 0; i < 2; ++i) m.add_var({VarKind::Fixed, 0.5, "x" + std::to_string(i)});
    NodeRef f = m.apply_or(m.var(0), m.var(1));
    std::string dot = m.to_dot(f);
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("x0") != std::string::npos);
    CHECK(dot.find("x1") != std::string::npos);
}
