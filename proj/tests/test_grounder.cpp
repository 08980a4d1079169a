#include "polp/grounder.hpp"
#include "polp/oracle.hpp"
#include "polp/parser.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace polp;
using Catch::Approx;

namespace {

struct Compiled {
    GroundProgram gp;
    bdd::BddManager m;
};

Compiled build(const std::string& text, GroundOptions opts = {}) {
    Compiled c{ground(parse_program(text), opts), bdd::BddManager()};
    register_variables(c.gp, c.m);
    return c;
}

} // namespace

TEST_CASE("fact variables follow declaration order") {
    Compiled c = build(test::kNetwork);
    REQUIRE(c.gp.num_vars() == 5);
    CHECK(c.gp.facts[0].atom.to_string() == "edge(a,b)");
    CHECK(c.gp.facts[1].kind == bdd::VarKind::Optimizable);
    CHECK(c.gp.facts[1].opt_index == 0u);
    CHECK(c.gp.facts[2].opt_index == 1u);
    CHECK(c.gp.facts[3].prob == 0.3);
    CHECK(c.gp.universe == std::vector<std::string>{"a", "b", "c", "d", "e"});
    CHECK(c.m.num_vars() == 5);
    CHECK(c.m.meta(2).kind == bdd::VarKind::Optimizable);
}

TEST_CASE("bodyless rules hold for every constant") {
    Compiled c = build(test::kNetwork);
    for (const char* x : {"a", "b", "c", "d", "e"}) {
        Atom q = parse_atom_text(std::string("path(") + x + "," + x + ")");
        CHECK(compile_query(c.gp, c.m, q) == c.m.one());
    }
}

TEST_CASE("on_time is the conjunction of its two causes") {
    Compiled c = build(test::kOnTime);
    bdd::NodeRef f = compile_query(c.gp, c.m, parse_atom_text("on_time"));
    CHECK(f == c.m.apply_and(c.m.var(0), c.m.var(1)));
    CHECK(bdd::prob(c.m, f) == Approx(0.45).margin(1e-15));
}

TEST_CASE("query on a fact is the fact variable") {
    Compiled c = build(test::kNetwork);
    CHECK(compile_query(c.gp, c.m, parse_atom_text("edge(c,e)")) == c.m.var(3));
    CHECK(compile_query(c.gp, c.m, parse_atom_text("edge(e,a)")) == c.m.zero());
}

TEST_CASE("underivable atoms compile to false and unknown predicates are rejected") {
    Compiled c = build(test::kNetwork);
    CHECK(compile_query(c.gp, c.m, parse_atom_text("path(e,a)")) == c.m.zero());
    CHECK_THROWS_AS(compile_query(c.gp, c.m, parse_atom_text("reach(a,e)")), ContractError);
    CHECK_THROWS_AS(compile_query(c.gp, c.m, parse_atom_text("path(a,X)")), ContractError);
}

TEST_CASE("query constants extend the universe") {
    GroundOptions opts;
    opts.extra_constants = {"z"};
    Compiled c = build(test::kNetwork, opts);
    CHECK(compile_query(c.gp, c.m, parse_atom_text("path(z,z)")) == c.m.one());
    Compiled plain = build(test::kNetwork);
    CHECK(compile_query(plain.gp, plain.m, parse_atom_text("path(z,z)")) == plain.m.zero());
}

TEST_CASE("network query BDD matches world enumeration") {
    Compiled c = build(test::kNetwork);
    bdd::NodeRef f = compile_query(c.gp, c.m, parse_atom_text("path(a,e)"));
    c.m.set_kind(1, bdd::VarKind::Fixed);
    c.m.set_kind(2, bdd::VarKind::Fixed);
    c.m.set_prob(1, 0.5);
    c.m.set_prob(2, 0.5);
    double oracle = oracle::enumerate_worlds(c.gp, {{1, 0.5}, {2, 0.5}}, parse_atom_text("path(a,e)"));
    CHECK(bdd::prob(c.m, f) == Approx(oracle).margin(1e-12));
    CHECK(c.m.check_invariants().empty());
}

TEST_CASE("cyclic rules reach their least fixpoint") {
    const char* text = "0.5::a.\n0.4::b.\np :- q.\nq :- p.\nq :- a.\np :- b.\n";
    Compiled c = build(text);
    bdd::NodeRef p = compile_query(c.gp, c.m, parse_atom_text("p"));
    CHECK(p == c.m.apply_or(c.m.var(0), c.m.var(1)));
    CHECK(bdd::prob(c.m, p) == Approx(1 - 0.5 * 0.6).margin(1e-15));

    const char* loop = "0.5::e(a,b).\n0.5::e(b,a).\nr(X,Y) :- e(X,Y).\nr(X,Y) :- r(X,Z), r(Z,Y).\n";
    Compiled l = build(loop);
    bdd::NodeRef aa = compile_query(l.gp, l.m, parse_atom_text("r(a,a)"));
    CHECK(aa == l.m.apply_and(l.m.var(0), l.m.var(1)));
}

TEST_CASE("schematic probabilistic facts ground to independent instances") {
    Compiled c = build("0.5::e(X).\n0.5::n(a).\n0.5::n(b).\nboth :- e(a), e(b).\n");
    CHECK(c.gp.num_vars() == 4);
    bdd::NodeRef f = compile_query(c.gp, c.m, parse_atom_text("both"));
    CHECK(bdd::prob(c.m, f) == Approx(0.25).margin(1e-15));
}

TEST_CASE("grounding respects the rule cap and the deadline") {
    GroundOptions capped;
    capped.max_ground_rules = 3;
    CHECK_THROWS_AS(build(test::kNetwork, capped), ResourceError);
    GroundOptions late;
    late.deadline = Deadline::after(std::chrono::seconds(-1));
    Compiled c = build(test::kNetwork);
    CHECK_THROWS_AS(compile_query(c.gp, c.m, parse_atom_text("path(a,e)"), late.deadline), ResourceError);
}

TEST_CASE("ground rules are instantiated only over derivable bodies") {
    Compiled c = build(test::kNetwork);
    for (const auto& r : c.gp.ground_rules)
        for (auto b : r.body) {
            bool derivable = c.gp.fact_var[b].has_value();
            for (const auto& other : c.gp.ground_rules) derivable = derivable || other.head == b;
            CHECK(derivable);
        }
}

TEST_CASE("each rule instance is produced once") {
    GroundProgram gp = ground(parse_program(test::kNetwork));
    std::set<std::pair<std::uint32_t, std::vector<std::uint32_t>>> seen;
    for (const auto& r : gp.ground_rules) CHECK(seen.insert({r.head, r.body}).second);
    // path(X,X) for 5 constants, path(X,Y) :- path(X,Z), edge(Z,Y) for every derivable pair.
    CHECK(gp.ground_rules.size() > 5);
}
