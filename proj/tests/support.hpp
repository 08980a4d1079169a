#pragma once

#include "polp/grounder.hpp"
#include "polp/parser.hpp"
#include "polp/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace polp::test {

inline const char* const kNetwork = R"(0.9::edge(a,b).
optimizable [0.3,0.8]::edge(b,c).
optimizable [0.3,0.8]::edge(b,d).
0.3::edge(c,e).
0.8::edge(d,e).

path(X,X).
path(X,Y) :- path(X,Z), edge(Z,Y).
)";

inline const std::vector<std::string> kNetworkConstraints = {
    "path(a,e) > 0.6", "edge(b,c) - edge(b,d) < 0.1", "edge(b,d) - edge(b,c) < 0.1"};

inline const char* const kOnTime = R"(0.5::no_traffic.
0.9::no_accidents.
on_time :- no_traffic, no_accidents.
)";

/// Random programs for equivalence tests: ground binary facts and rules
/// over derived binary predicates, recursive ones included.
struct RandomProgram {
    std::string text;
    std::vector<std::string> queries;
};

inline RandomProgram random_program(std::mt19937_64& rng, std::size_t max_facts = 12, std::size_t max_rules = 10) {
    const std::vector<std::string> consts = {"a", "b", "c", "d"};
    const std::vector<std::string> fact_preds = {"e", "f", "g"};
    const std::vector<std::string> derived = {"p", "q", "r"};
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    auto constant = [&] { return consts[pick(consts.size())]; };

    RandomProgram out;
    std::vector<std::string> atoms;
    std::vector<std::string> used_preds;
    const std::size_t n_facts = 1 + pick(max_facts);
    for (std::size_t tries = 0; atoms.size() < n_facts && tries < 500; ++tries) {
        const std::string pred = fact_preds[pick(fact_preds.size())];
        const std::string atom = pred + "(" + constant() + "," + constant() + ")";
        if (std::find(atoms.begin(), atoms.end(), atom) != atoms.end()) continue;
        atoms.push_back(atom);
        if (std::find(used_preds.begin(), used_preds.end(), pred) == used_preds.end()) used_preds.push_back(pred);
        if (pick(3) == 0) {
            out.text += "optimizable [0.1,0.9]::" + atom + ".\n";
        } else {
            const double p = static_cast<double>(5 + pick(91)) / 100.0;
            out.text += format_double(p) + "::" + atom + ".\n";
        }
    }

    std::vector<std::string> heads;
    const std::size_t n_rules = 1 + pick(max_rules);
    for (std::size_t r = 0; r < n_rules; ++r) {
        const std::string head = derived[pick(std::min(heads.size() + 1, derived.size()))];
        const bool defined = std::find(heads.begin(), heads.end(), head) != heads.end();
        // Body predicates: facts or derived predicates that already have a rule.
        auto body_pred = [&] {
            if (!heads.empty() && pick(2) == 0) return heads[pick(heads.size())];
            return used_preds[pick(used_preds.size())];
        };
        std::string rule;
        switch (defined ? pick(5) : 0) {
        case 0: rule = head + "(X,Y) :- " + body_pred() + "(X,Y)."; break;
        case 1: rule = head + "(X,Y) :- " + body_pred() + "(X,Z), " + body_pred() + "(Z,Y)."; break;
        case 2: rule = head + "(X,Y) :- " + body_pred() + "(Y,X)."; break;
        case 3: rule = head + "(X,Y) :- " + body_pred() + "(X,Y), " + body_pred() + "(Y,Y)."; break;
        default:
            rule = head + "(" + constant() + "," + constant() + ") :- " + body_pred() + "(" + constant() + "," +
                   constant() + ").";
            break;
        }
        if (!defined) heads.push_back(head);
        out.text += rule + "\n";
    }
    for (const auto& h : heads)
        for (int k = 0; k < 2; ++k) out.queries.push_back(h + "(" + constant() + "," + constant() + ")");
    return out;
}

/// Central finite-difference gradient.
inline std::vector<double> finite_gradient(const std::function<double(std::span<const double>)>& f,
                                           std::vector<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + h;
        const double fp = f(x);
        x[i] = xi - h;
        const double fm = f(x);
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// |a - b| relative to max(1, |b|): plain relative error away from zero,
/// absolute error near it.
inline double rel_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

} // namespace polp::test
