#pragma once

#include "polp/bdd.hpp"
#include "polp/deadline.hpp"
#include "polp/grounder.hpp"
#include "polp/optimizer.hpp"
#include "polp/problem.hpp"
#include "polp/program.hpp"
#include "polp/symbolic.hpp"

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace polp {

/// Per-phase wall-clock limits in seconds; zero disables a limit.
struct PhaseLimits {
    double grounding = 300.0;
    double compile = 300.0;
    double extract = 300.0;
    double solve = 300.0;
};

struct PipelineOptions {
    PhaseLimits limits;
    std::size_t max_ground_rules = 10'000'000;
    std::size_t max_bdd_nodes = std::size_t{1} << 26;
    std::size_t max_monomials = 1'000'000;
    /// Render the reordered query BDD as Graphviz text.
    bool want_dot = false;
};

struct PhaseTimings {
    double grounding_ms = 0.0;
    double compile_ms = 0.0;
    double reorder_ms = 0.0;
    double extract_ms = 0.0;
    double solve_ms = 0.0;

    friend bool operator==(const PhaseTimings&, const PhaseTimings&) = default;
};

struct BddStats {
    std::size_t nodes = 0;
    std::size_t path_terms = 0;
    std::size_t monomials = 0;
    std::size_t swaps = 0;

    friend bool operator==(const BddStats&, const BddStats&) = default;
};

struct PipelineResult {
    ProblemSpec spec;
    opt::Solution solution;
    /// Names of the optimizable facts, indexed like the solution assignment.
    std::vector<std::string> opt_names;
    /// Query equation of each query atom (same order as spec.query_atoms).
    std::vector<symbolic::QueryPolynomial> polynomials;
    std::vector<std::string> polynomial_text;
    /// Probability of the main query at the solution, clamped to [0, 1].
    double query_probability = 0.0;
    PhaseTimings timings;
    BddStats stats;
    std::string dot;
};

namespace detail {

class Stopwatch {
public:
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace detail

/// Ground program, BDDs and query equations of a list of ground atoms.
struct QueryEquations {
    GroundProgram ground;
    bdd::BddManager manager;
    /// Reordered BDD of each atom.
    std::vector<bdd::NodeRef> roots;
    std::vector<std::vector<bdd::PathTerm>> paths;
    std::vector<symbolic::QueryPolynomial> polynomials;
    PhaseTimings timings;
    /// Statistics of the first atom.
    BddStats stats;
    std::string dot;

    std::string var_name(bdd::VarId v) const { return ground.facts.at(v).atom.to_string(); }
};

/// Grounds the program, compiles every atom to a BDD, moves the optimizable
/// variables to the top and extracts one query equation per atom.
inline QueryEquations compile_queries(const Program& prog, const std::vector<Atom>& atoms,
                                      const PipelineOptions& opts = {}) {
    if (atoms.empty()) throw ContractError("pipeline", "no query atoms");
    detail::Stopwatch ground_clock;
    GroundOptions gopts;
    gopts.max_ground_rules = opts.max_ground_rules;
    gopts.deadline = Deadline::seconds(opts.limits.grounding);
    for (const auto& q : atoms)
        for (const auto& t : q.args) gopts.extra_constants.push_back(t.name);
    QueryEquations out{ground(prog, gopts), bdd::BddManager(opts.max_bdd_nodes), {}, {}, {}, {}, {}, {}};
    out.timings.grounding_ms = ground_clock.elapsed_ms();

    detail::Stopwatch compile_clock;
    bdd::BddManager& m = out.manager;
    register_variables(out.ground, m);
    const Deadline compile_deadline = Deadline::seconds(opts.limits.compile);
    for (const auto& q : atoms) out.roots.push_back(compile_query(out.ground, m, q, compile_deadline));
    out.roots = m.compact(out.roots);
    out.timings.compile_ms = compile_clock.elapsed_ms();

    detail::Stopwatch reorder_clock;
    const std::size_t swaps_before = m.swap_count();
    for (auto& r : out.roots) r = bdd::reorder_optimizable_first(m, r);
    out.stats.swaps = m.swap_count() - swaps_before;
    out.stats.nodes = m.node_count(out.roots[0]);
    out.timings.reorder_ms = reorder_clock.elapsed_ms();
    if (opts.want_dot) out.dot = m.to_dot(out.roots[0]);

    detail::Stopwatch extract_clock;
    const Deadline extract_deadline = Deadline::seconds(opts.limits.extract);
    symbolic::PolyOptions popts;
    popts.max_monomials = opts.max_monomials;
    for (const auto& r : out.roots) {
        out.paths.push_back(bdd::paths_prob(m, r));
        extract_deadline.check("symbolic", "query equation extraction");
        out.polynomials.push_back(symbolic::to_polynomial(out.paths.back(), popts));
        extract_deadline.check("symbolic", "query equation extraction");
    }
    out.stats.path_terms = out.paths[0].size();
    out.stats.monomials = out.polynomials[0].size();
    out.timings.extract_ms = extract_clock.elapsed_ms();
    return out;
}

/// Nonlinear program of `spec` over the optimizable facts of `prog`, in
/// declaration order. `space` receives the coordinate of each fact variable.
inline opt::OptProblem make_opt_problem(const Program& prog, const ProblemSpec& spec, const QueryEquations& eq,
                                        symbolic::VarSpace& space) {
    std::vector<bdd::VarId> opt_vars(prog.opt_facts.size());
    for (std::size_t v = 0; v < eq.ground.facts.size(); ++v)
        if (auto k = eq.ground.facts[v].opt_index) opt_vars[*k] = static_cast<bdd::VarId>(v);
    space = {};
    for (bdd::VarId v : opt_vars) space.add(v);
    std::vector<double> lower(prog.opt_facts.size()), upper(prog.opt_facts.size());
    for (const auto& b : spec.bounds) (b.side == BoundConstraint::Side::Lower ? lower : upper)[b.opt_index] = b.value;
    return opt::build_problem(spec, eq.polynomials, space, lower, upper);
}

/// Full pipeline: query equations of every atom the problem mentions, then
/// the nonlinear program over the optimizable facts, then the query
/// probabilities at the optimum.
inline PipelineResult optimize_prob(const Program& prog, const ProblemSpec& spec, const PipelineOptions& opts = {}) {
    PipelineResult out;
    out.spec = spec;
    QueryEquations eq = compile_queries(prog, spec.query_atoms, opts);
    out.timings = eq.timings;
    out.stats = eq.stats;
    out.dot = std::move(eq.dot);
    out.polynomials = eq.polynomials;
    for (const auto& p : out.polynomials)
        out.polynomial_text.push_back(p.to_string([&](bdd::VarId v) { return eq.var_name(v); }));

    detail::Stopwatch solve_clock;
    symbolic::VarSpace space;
    opt::OptProblem problem = make_opt_problem(prog, spec, eq, space);
    for (const auto& f : prog.opt_facts) out.opt_names.push_back(f.atom.to_string());
    problem.config.deadline = Deadline::seconds(opts.limits.solve);
    opt::Solution sol = spec.solver.multistart > 1 ? opt::multistart(problem, spec.solver.multistart, spec.solver.seed)
                                                   : opt::solve(problem);
    out.timings.solve_ms = solve_clock.elapsed_ms();

    symbolic::Assignment at;
    for (std::size_t k = 0; k < space.size(); ++k) at[space.var_of_opt[k]] = sol.assignment[k];
    for (std::size_t i = 0; i < spec.query_atoms.size(); ++i)
        sol.query_probs[spec.query_atoms[i].to_string()] = symbolic::clamp_probability(out.polynomials[i].evaluate(at));
    out.query_probability = sol.query_probs[spec.query.to_string()];
    out.solution = std::move(sol);
    return out;
}

} // namespace polp
