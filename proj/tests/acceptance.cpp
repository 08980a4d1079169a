// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include "polp/cli.hpp"
#include "polp/oracle.hpp"
#include "polp/pipeline.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace polp;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

class Recorder {
public:
    void require(bool cond, const std::string& what) {
        if (!cond && out_.ok) {
            out_.ok = false;
            out_.detail = what;
        }
    }
    void note(const std::string& s) {
        if (out_.ok) out_.detail = s;
    }
    Outcome result() const { return out_; }

private:
    Outcome out_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(8);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProblemSpec network_spec(const Program& prog) {
    return parse_problem(prog, "path(a,e)", "edge(b,c) + edge(b,d)", test::kNetworkConstraints);
}

/// Network query equation with the ids of edge(b,c) and edge(b,d).
struct NetworkEquation {
    QueryEquations eq;
    bdd::VarId bc = 0, bd = 0;
};

NetworkEquation network_equation() {
    Program prog = parse_program(test::kNetwork);
    NetworkEquation n{compile_queries(prog, {parse_atom_text("path(a,e)")}), 0, 0};
    n.bc = *n.eq.ground.var_of(parse_atom_text("edge(b,c)"));
    n.bd = *n.eq.ground.var_of(parse_atom_text("edge(b,d)"));
    return n;
}

Outcome golden_run() {
    Recorder r;
    const auto t0 = std::chrono::steady_clock::now();
    Program prog = parse_program(test::kNetwork);
    PipelineResult res = optimize_prob(prog, network_spec(prog));
    const double secs = seconds_since(t0);
    r.require(res.solution.status == opt::Status::Converged, "status " + std::string(opt::to_string(res.solution.status)));
    r.require(std::abs(res.solution.objective_value - 1.3704) <= 5e-3, "objective " + fmt(res.solution.objective_value));
    r.require(std::abs(res.query_probability - 0.6) <= 1e-3, "query probability " + fmt(res.query_probability));
    r.require(secs < 5.0, "took " + fmt(secs) + " s");
    r.note("objective " + fmt(res.solution.objective_value) + ", probability " + fmt(res.query_probability) + ", " +
           fmt(secs * 1e3) + " ms");
    return r.result();
}

Outcome network_paths() {
    Recorder r;
    NetworkEquation n = network_equation();
    const auto& paths = n.eq.paths[0];
    r.require(paths.size() == 3, std::to_string(paths.size()) + " paths");
    struct Expected {
        double coeff;
        bool bc, bd;
    };
    for (Expected e : {Expected{0.774, true, true}, Expected{0.27, true, false}, Expected{0.72, false, true}}) {
        std::size_t hits = 0;
        for (const auto& t : paths) {
            std::vector<bdd::PathLiteral> lits = t.literals;
            std::sort(lits.begin(), lits.end());
            std::vector<bdd::PathLiteral> want = {{n.bc, e.bc}, {n.bd, e.bd}};
            std::sort(want.begin(), want.end());
            if (lits == want && std::abs(t.coeff - e.coeff) <= 1e-12) ++hits;
        }
        r.require(hits == 1, "no path with coefficient " + fmt(e.coeff) + " and the expected signs");
    }
    r.note("3 paths, coefficients 0.774 0.27 0.72");
    return r.result();
}

Outcome network_polynomial() {
    Recorder r;
    NetworkEquation n = network_equation();
    const auto& poly = n.eq.polynomials[0];
    std::map<symbolic::Monomial, double> want = {
        {{std::min(n.bc, n.bd), std::max(n.bc, n.bd)}, -0.216}, {{n.bc}, 0.27}, {{n.bd}, 0.72}};
    r.require(poly.size() == 3, std::to_string(poly.size()) + " monomials");
    for (const auto& [m, c] : want) {
        auto it = poly.terms().find(m);
        r.require(it != poly.terms().end() && std::abs(it->second - c) <= 1e-12, "coefficient " + fmt(c) + " missing");
    }
    const std::size_t ops = poly.operation_count(), raw = symbolic::operation_count(n.eq.paths[0]);
    r.require(ops == 6, std::to_string(ops) + " operations in the polynomial");
    r.require(raw == 10, std::to_string(raw) + " operations in the path sum");
    r.note("-0.216 bc bd + 0.27 bc + 0.72 bd, " + std::to_string(ops) + " vs " + std::to_string(raw) + " operations");
    return r.result();
}

Outcome on_time() {
    Recorder r;
    Program prog = parse_program(test::kOnTime);
    GroundProgram gp = ground(prog);
    bdd::BddManager m;
    register_variables(gp, m);
    const Atom q = parse_atom_text("on_time");
    const double by_bdd = bdd::prob(m, compile_query(gp, m, q));
    const double by_worlds = oracle::enumerate_worlds(gp, {}, q);
    r.require(std::abs(by_bdd - 0.45) <= 1e-12, "bdd gives " + fmt(by_bdd));
    r.require(std::abs(by_worlds - 0.45) <= 1e-12, "world enumeration gives " + fmt(by_worlds));
    r.note("bdd " + fmt(by_bdd) + ", worlds " + fmt(by_worlds));
    return r.result();
}

Outcome complete_graphs() {
    Recorder r;
    cli::BenchOptions o;
    o.min_n = 3;
    o.max_n = 6;
    std::string summary;
    for (const auto& row : cli::bench_complete(o)) {
        const std::string n = "n=" + std::to_string(row.n);
        r.require(row.status == "converged", n + " status " + row.status + " " + row.error);
        r.require(std::abs(row.probability - 0.8) <= 5e-3, n + " probability " + fmt(row.probability));
        r.require(row.total_ms < 60'000.0, n + " took " + fmt(row.total_ms) + " ms");
        summary += (summary.empty() ? "" : ", ") + n + " p=" + fmt(row.probability) + " " + fmt(row.total_ms) + " ms";
    }
    r.note(summary);
    return r.result();
}

struct RandomCase {
    std::string text;
    Program prog;
    std::vector<Atom> queries;
};

RandomCase random_case(std::mt19937_64& rng) {
    auto rp = test::random_program(rng, 12, 10);
    RandomCase c{rp.text, parse_program(rp.text), {}};
    for (const auto& q : rp.queries) c.queries.push_back(parse_atom_text(q));
    return c;
}

Outcome random_equivalence() {
    Recorder r;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    std::size_t checks = 0, cyclic = 0;
    for (int k = 0; k < 100; ++k) {
        RandomCase c = random_case(rng);
        QueryEquations eq = compile_queries(c.prog, c.queries);
        r.require(eq.ground.num_vars() <= 12, "program with " + std::to_string(eq.ground.num_vars()) + " fact variables");
        auto recursive = [](const Rule& rule) {
            return std::any_of(rule.body.begin(), rule.body.end(),
                               [&](const Atom& b) { return b.signature() == rule.head.signature(); });
        };
        if (std::any_of(c.prog.rules.begin(), c.prog.rules.end(), recursive)) ++cyclic;
        for (int a = 0; a < 10; ++a) {
            std::map<bdd::VarId, double> probs;
            symbolic::Assignment x;
            for (std::size_t v = 0; v < eq.ground.num_vars(); ++v)
                if (eq.ground.facts[v].kind == bdd::VarKind::Optimizable)
                    x[static_cast<bdd::VarId>(v)] = probs[static_cast<bdd::VarId>(v)] = u(rng);
            for (std::size_t i = 0; i < c.queries.size(); ++i) {
                const double got = eq.polynomials[i].evaluate(x);
                const double want = oracle::enumerate_worlds(eq.ground, probs, c.queries[i]);
                worst = std::max(worst, std::abs(got - want));
                ++checks;
            }
        }
    }
    r.require(worst <= 1e-9, "largest difference " + fmt(worst));
    r.note(std::to_string(checks) + " comparisons, " + std::to_string(cyclic) +
           " programs with recursive rules, largest difference " + fmt(worst));
    return r.result();
}

Outcome reorder_and_expansion() {
    Recorder r;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t mismatches = 0, assignments = 0;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        RandomCase c = random_case(rng);
        GroundProgram gp = ground(c.prog);
        bdd::BddManager m;
        register_variables(gp, m);
        const bdd::NodeRef before = compile_query(gp, m, c.queries[0]);
        std::vector<std::vector<bool>> worlds(100, std::vector<bool>(m.num_vars()));
        std::vector<bool> truth;
        for (auto& w : worlds) {
            for (std::size_t v = 0; v < w.size(); ++v) w[v] = rng() & 1u;
            truth.push_back(m.eval(before, w));
        }
        const bdd::NodeRef after = bdd::reorder_optimizable_first(m, before);
        for (std::size_t i = 0; i < worlds.size(); ++i) {
            ++assignments;
            if (m.eval(after, worlds[i]) != truth[i]) ++mismatches;
        }
        auto paths = bdd::paths_prob(m, after);
        auto poly = symbolic::to_polynomial(paths);
        for (int a = 0; a < 100; ++a) {
            symbolic::Assignment x;
            for (std::size_t v = 0; v < gp.num_vars(); ++v)
                if (gp.facts[v].kind == bdd::VarKind::Optimizable) x[static_cast<bdd::VarId>(v)] = u(rng);
            worst = std::max(worst, std::abs(poly.evaluate(x) - symbolic::evaluate_paths(paths, x)));
        }
    }
    r.require(mismatches == 0, std::to_string(mismatches) + " of " + std::to_string(assignments) + " assignments changed");
    r.require(worst <= 1e-12, "polynomial and path sum differ by " + fmt(worst));
    r.note(std::to_string(assignments) + " assignments unchanged, polynomial vs path sum " + fmt(worst));
    return r.result();
}

Outcome gradients() {
    Recorder r;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    double worst = 0.0;
    std::size_t exprs = 0;
    auto check = [&](const opt::OptProblem& p) {
        std::vector<const symbolic::CompiledExpr*> all = {&p.objective};
        for (const auto& c : p.constraints) all.push_back(&c);
        for (const auto* e : all) {
            ++exprs;
            for (int a = 0; a < 5; ++a) {
                std::vector<double> x(p.n), grad(p.n);
                for (auto& v : x) v = u(rng);
                e->value_and_gradient(x, grad);
                auto fd = test::finite_gradient([&](std::span<const double> y) { return e->value(y); }, x);
                for (std::size_t i = 0; i < p.n; ++i) worst = std::max(worst, test::rel_error(grad[i], fd[i]));
            }
        }
    };
    {
        Program prog = parse_program(test::kNetwork);
        ProblemSpec spec = network_spec(prog);
        QueryEquations eq = compile_queries(prog, spec.query_atoms);
        symbolic::VarSpace space;
        check(make_opt_problem(prog, spec, eq, space));
    }
    for (int k = 0; k < 60; ++k) {
        RandomCase c = random_case(rng);
        if (c.prog.opt_facts.empty()) continue;
        const std::string o0 = c.prog.opt_facts[0].atom.to_string();
        const std::string o1 = c.prog.opt_facts.back().atom.to_string();
        const std::string q0 = c.queries[0].to_string(), q1 = c.queries.back().to_string();
        ProblemSpec spec = parse_problem(c.prog, q0, o0 + " * " + o1 + " - 2 * " + o0,
                                         {q0 + " * " + q1 + " - " + q0 + " + 0.5 * " + o1 + " >= 0.1",
                                          "3 * " + q1 + " - " + q0 + " * " + o0 + " <= 0.9"});
        QueryEquations eq = compile_queries(c.prog, spec.query_atoms);
        symbolic::VarSpace space;
        check(make_opt_problem(c.prog, spec, eq, space));
    }
    r.require(worst <= 1e-6, "largest relative error " + fmt(worst));
    r.note(std::to_string(exprs) + " expressions, largest relative error " + fmt(worst));
    return r.result();
}

struct SmallProblem {
    std::string name;
    std::string text, query, objective;
    std::vector<std::string> constraints;
    Direction direction = Direction::Minimize;
};

std::vector<SmallProblem> small_problems() {
    const char* chain = "0.9::edge(a,b).\noptimizable [0.3,0.999]::edge(b,d).\n0.8::edge(d,e).\n"
                        "path(X,X).\npath(X,Y) :- path(X,Z), edge(Z,Y).\n";
    const char* mixed = "optimizable::a.\noptimizable [0.2,0.9]::b.\n0.5::c.\nq :- a, c.\nq :- b.\n";
    std::vector<SmallProblem> out = {
        {"network", test::kNetwork, "path(a,e)", "edge(b,c) + edge(b,d)", test::kNetworkConstraints},
        {"network box only", test::kNetwork, "path(a,e)", "edge(b,c) + edge(b,d)", {}},
        {"network capped", test::kNetwork, "path(a,e)", "edge(b,c) + edge(b,d)", {"path(a,e) <= 0.5"},
         Direction::Maximize},
        {"network weighted", test::kNetwork, "path(a,e)", "2 * edge(b,c) + edge(b,d)", {"path(a,e) >= 0.55"}},
        {"chain", chain, "path(a,e)", "edge(b,d)", {"path(a,e) >= 0.6"}},
        {"mixed", mixed, "q", "a * b - a", {"q <= 0.7"}, Direction::Maximize},
        {"mixed min", mixed, "q", "a + b", {"q > 0.6"}},
    };
    {
        cli::IngestOptions io;
        io.seed = 1;
        out.push_back({"complete graph n=3", cli::complete_graph_program(3, io), "path(1,3)", "", {"path(1,3) > 0.8"}});
        Program prog = parse_program(out.back().text);
        for (const auto& f : prog.opt_facts)
            out.back().objective += (out.back().objective.empty() ? "" : " + ") + f.atom.to_string();
    }

    // Seeded random programs with one or two optimizable facts; the threshold
    // sits inside the achievable range of the query.
    std::mt19937_64 rng(99);
    while (out.size() < 48) {
        RandomCase c = random_case(rng);
        if (c.prog.opt_facts.empty() || c.prog.opt_facts.size() > 2) continue;
        const std::string q = c.queries[rng() % c.queries.size()].to_string();
        std::string objective;
        for (const auto& f : c.prog.opt_facts)
            objective += (objective.empty() ? "" : " + ") + std::to_string(1 + rng() % 3) + " * " + f.atom.to_string();
        ProblemSpec spec = parse_problem(c.prog, q, "0", {});
        QueryEquations eq = compile_queries(c.prog, spec.query_atoms);
        const auto& poly = eq.polynomials[0];
        if (poly.vars().empty()) continue;
        symbolic::VarSpace space;
        opt::OptProblem probe = make_opt_problem(c.prog, spec, eq, space);
        probe.objective = probe.constraints.empty() ? symbolic::CompiledExpr{} : probe.constraints[0];
        double lo = 1.0, hi = 0.0;
        for (int s = 0; s < 200; ++s) {
            std::vector<double> x(probe.n);
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] = probe.lower[i] + (probe.upper[i] - probe.lower[i]) * static_cast<double>(rng() % 1001) / 1000.0;
            symbolic::Assignment a;
            for (std::size_t i = 0; i < x.size(); ++i) a[space.var_of_opt[i]] = x[i];
            const double v = poly.evaluate(a);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo < 1e-3) continue;
        const double t = lo + (0.2 + 0.6 * static_cast<double>(rng() % 1000) / 1000.0) * (hi - lo);
        const bool maximize = rng() % 4 == 0;
        out.push_back({"random " + std::to_string(out.size()), c.text, q, objective,
                       {q + (maximize ? " <= " : " >= ") + format_double(t)},
                       maximize ? Direction::Maximize : Direction::Minimize});
    }
    return out;
}

Outcome oracle_gap() {
    Recorder r;
    double worst_gap = 0.0, worst_violation = 0.0;
    std::size_t solved = 0, converged = 0;
    for (const auto& sp : small_problems()) {
        Program prog = parse_program(sp.text);
        ProblemSpec spec = parse_problem(prog, sp.query, sp.objective, sp.constraints, {}, sp.direction);
        QueryEquations eq = compile_queries(prog, spec.query_atoms);
        symbolic::VarSpace space;
        opt::OptProblem p = make_opt_problem(prog, spec, eq, space);
        if (p.n < 1 || p.n > 2) continue;
        ++solved;
        opt::Solution s = opt::solve(p);
        oracle::GridResult g = oracle::grid_search(p, 1e-3);
        if (!g.feasible) {
            r.require(s.status == opt::Status::Infeasible, sp.name + ": grid infeasible but solver " +
                                                               std::string(opt::to_string(s.status)));
            continue;
        }
        r.require(s.status == opt::Status::Converged, sp.name + ": status " + std::string(opt::to_string(s.status)));
        if (s.status != opt::Status::Converged) continue;
        ++converged;
        const double gap = std::abs(s.objective_value - g.objective);
        worst_gap = std::max(worst_gap, gap);
        r.require(gap <= 5e-3, sp.name + ": solver " + fmt(s.objective_value) + " vs grid " + fmt(g.objective));
        double viol = 0.0;
        for (const auto& c : p.constraints) viol = std::max(viol, c.value(s.assignment));
        for (std::size_t i = 0; i < p.n; ++i)
            viol = std::max({viol, p.lower[i] - s.assignment[i], s.assignment[i] - p.upper[i]});
        worst_violation = std::max(worst_violation, viol);
        r.require(viol <= 1e-5, sp.name + ": violation " + fmt(viol));
    }
    r.note(std::to_string(solved) + " problems, " + std::to_string(converged) + " converged, largest gap " +
           fmt(worst_gap) + ", largest violation " + fmt(worst_violation));
    return r.result();
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* title;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria = {
        {1, "network golden run", golden_run},
        {2, "network path terms", network_paths},
        {3, "network query polynomial and operation counts", network_polynomial},
        {4, "on_time by bdd and by world enumeration", on_time},
        {5, "complete graphs n=3..6", complete_graphs},
        {6, "random programs agree with world enumeration", random_equivalence},
        {7, "reordering and expansion preserve the function", reorder_and_expansion},
        {8, "gradients agree with central differences", gradients},
        {9, "solver against grid search on 1-2 variable problems", oracle_gap},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.ok) ++failed;
        std::cout << (o.ok ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
