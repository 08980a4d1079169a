#pragma once

// Brute-force reference implementations. Exponential by design; used to
// check the compiled pipeline and to regenerate expected test values.

#include "polp/error.hpp"
#include "polp/grounder.hpp"
#include "polp/optimizer.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

namespace polp::oracle {

inline constexpr std::size_t kMaxWorldVars = 20;

namespace detail {

inline std::vector<double> fact_probs(const GroundProgram& gp, const std::map<bdd::VarId, double>& probs) {
    if (gp.num_vars() > kMaxWorldVars)
        throw ResourceError("oracle", "world enumeration is capped at " + std::to_string(kMaxWorldVars) +
                                          " fact variables, program has " + std::to_string(gp.num_vars()));
    std::vector<double> p(gp.num_vars());
    for (std::size_t v = 0; v < p.size(); ++v) {
        auto it = probs.find(static_cast<bdd::VarId>(v));
        if (it != probs.end()) p[v] = it->second;
        else if (gp.facts[v].kind == bdd::VarKind::Fixed) p[v] = gp.facts[v].prob;
        else throw ContractError("oracle", "no probability for optimizable fact " + gp.facts[v].atom.to_string());
    }
    return p;
}

/// Least model of the ground rules given the true facts of one world.
inline std::vector<char> least_model(const GroundProgram& gp, std::uint64_t world) {
    std::vector<char> truth(gp.atoms.size(), 0);
    for (std::size_t a = 0; a < gp.atoms.size(); ++a)
        if (gp.fact_var[a] && ((world >> *gp.fact_var[a]) & 1u)) truth[a] = 1;
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& r : gp.ground_rules) {
            if (truth[r.head]) continue;
            bool all = true;
            for (auto b : r.body)
                if (!truth[b]) {
                    all = false;
                    break;
                }
            if (all) {
                truth[r.head] = 1;
                changed = true;
            }
        }
    }
    return truth;
}

inline void for_each_world(const std::vector<double>& p, const std::function<void(std::uint64_t, double)>& visit) {
    const std::uint64_t count = std::uint64_t{1} << p.size();
    for (std::uint64_t w = 0; w < count; ++w) {
        double pw = 1.0;
        for (std::size_t v = 0; v < p.size(); ++v) pw *= ((w >> v) & 1u) ? p[v] : 1.0 - p[v];
        visit(w, pw);
    }
}

} // namespace detail

/// Exact query probability as the total probability of the worlds whose
/// least model contains `q`. `probs` gives the optimizable facts (and may
/// override fixed ones).
inline double enumerate_worlds(const GroundProgram& gp, const std::map<bdd::VarId, double>& probs, const Atom& q) {
    std::vector<double> p = detail::fact_probs(gp, probs);
    auto id = gp.atom_id(q);
    if (!id) return 0.0;
    double total = 0.0;
    detail::for_each_world(p, [&](std::uint64_t w, double pw) {
        if (detail::least_model(gp, w)[*id]) total += pw;
    });
    return total;
}

/// Sum of all world probabilities; 1 up to rounding.
inline double world_mass(const GroundProgram& gp, const std::map<bdd::VarId, double>& probs) {
    double total = 0.0;
    detail::for_each_world(detail::fact_probs(gp, probs), [&](std::uint64_t, double pw) { total += pw; });
    return total;
}

struct GridResult {
    bool feasible = false;
    std::vector<double> assignment;
    /// Objective in the problem's direction; NaN when infeasible.
    double objective = std::numeric_limits<double>::quiet_NaN();
};

/// Best grid point of the box with every residual g_k <= 0. Each axis runs
/// from its lower bound in increments of `step`, with the upper bound added.
inline GridResult grid_search(const opt::OptProblem& p, double step) {
    if (p.n > 3) throw ContractError("oracle", "grid search supports at most 3 variables");
    if (!(step > 0.0)) throw ContractError("oracle", "grid step must be positive");
    p.validate();
    std::vector<std::vector<double>> axes(p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        const double lo = p.lower[i], hi = p.upper[i];
        for (std::size_t k = 0;; ++k) {
            const double v = lo + static_cast<double>(k) * step;
            if (v >= hi - 1e-12) break;
            axes[i].push_back(v);
        }
        axes[i].push_back(hi);
    }
    GridResult best;
    std::vector<double> x(p.n);
    std::function<void(std::size_t)> sweep = [&](std::size_t dim) {
        if (dim < p.n) {
            for (double v : axes[dim]) {
                x[dim] = v;
                sweep(dim + 1);
            }
            return;
        }
        for (const auto& c : p.constraints)
            if (c.value(x) > 0.0) return;
        const double f = p.objective.node_count() ? p.objective.value(x) : 0.0;
        const bool improves = !best.feasible || (p.direction == Direction::Maximize ? f > best.objective : f < best.objective);
        if (improves) {
            best.feasible = true;
            best.objective = f;
            best.assignment = x;
        }
    };
    sweep(0);
    return best;
}

} // namespace polp::oracle
