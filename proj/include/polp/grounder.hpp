#pragma once

#include "polp/bdd.hpp"
#include "polp/deadline.hpp"
#include "polp/error.hpp"
#include "polp/program.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace polp {

struct GroundFact {
    Atom atom;
    bdd::VarKind kind = bdd::VarKind::Fixed;
    double prob = 0.5;
    double lower = 0.0;
    double upper = 1.0;
    /// Index into Program::opt_facts for optimizable facts.
    std::optional<std::size_t> opt_index;
};

/// Ground clause over interned atom ids; an empty body makes the head
/// certain.
struct GroundRule {
    std::uint32_t head = 0;
    std::vector<std::uint32_t> body;
};

/// Program instantiated over its finite Herbrand universe. Fact variables
/// are numbered 0..n-1 in declaration order.
struct GroundProgram {
    std::vector<std::string> universe;
    std::vector<Atom> atoms;
    std::unordered_map<Atom, std::uint32_t> atom_ids;
    std::vector<GroundFact> facts;
    /// Fact variable of each atom id, or nullopt for derived atoms.
    std::vector<std::optional<bdd::VarId>> fact_var;
    std::vector<GroundRule> ground_rules;
    /// Signatures of predicates declared anywhere in the program.
    std::vector<std::string> predicates;

    std::optional<std::uint32_t> atom_id(const Atom& a) const {
        auto it = atom_ids.find(a);
        if (it == atom_ids.end()) return std::nullopt;
        return it->second;
    }

    std::optional<bdd::VarId> var_of(const Atom& a) const {
        auto id = atom_id(a);
        if (!id) return std::nullopt;
        return fact_var[*id];
    }

    bool has_predicate(const std::string& signature) const {
        return std::find(predicates.begin(), predicates.end(), signature) != predicates.end();
    }

    std::size_t num_vars() const { return facts.size(); }
};

struct GroundOptions {
    std::size_t max_ground_rules = 10'000'000;
    /// Constants added to the Herbrand universe, e.g. those of query atoms.
    std::vector<std::string> extra_constants;
    Deadline deadline;
};

namespace detail {

/// Bottom-up instantiation: a rule instance is produced only when each body
/// atom is a fact or the head of an already produced instance. New instances
/// are found semi-naively, each combination of body atoms exactly once.
class Grounder {
public:
    Grounder(const Program& prog, const GroundOptions& opts) : prog_(prog), opts_(opts) {}

    GroundProgram run() {
        collect_universe();
        for (const auto& ref : prog_.fact_order) {
            if (ref.kind == ItemKind::ProbFact) {
                const auto& f = prog_.prob_facts[ref.index];
                for (auto& a : instances(f.atom)) add_fact(std::move(a), bdd::VarKind::Fixed, f.prob, 0.0, 1.0, {});
            } else {
                const auto& f = prog_.opt_facts[ref.index];
                add_fact(f.atom, bdd::VarKind::Optimizable, 0.5, f.lower, f.upper, ref.index);
            }
        }
        std::vector<std::size_t> body_rules;
        for (std::size_t r = 0; r < prog_.rules.size(); ++r) {
            const Rule& rule = prog_.rules[r];
            if (!rule.body.empty()) {
                body_rules.push_back(r);
                continue;
            }
            for (auto& a : instances(rule.head)) {
                std::uint32_t id = intern(std::move(a));
                emit(GroundRule{id, {}});
            }
        }
        saturate(body_rules);
        std::vector<std::string> sigs;
        for (const auto& f : prog_.prob_facts) sigs.push_back(f.atom.signature());
        for (const auto& f : prog_.opt_facts) sigs.push_back(f.atom.signature());
        for (const auto& r : prog_.rules) sigs.push_back(r.head.signature());
        for (auto& s : sigs)
            if (!gp_.has_predicate(s)) gp_.predicates.push_back(std::move(s));
        return std::move(gp_);
    }

private:
    struct PredTable {
        std::vector<std::uint32_t> atoms;
        // by_arg[position][constant] -> positions in `atoms`, increasing.
        std::vector<std::unordered_map<std::string, std::vector<std::uint32_t>>> by_arg;
    };

    void collect_universe() {
        std::unordered_map<std::string, bool> seen;
        auto add = [&](const std::string& c) {
            if (seen.emplace(c, true).second) gp_.universe.push_back(c);
        };
        auto scan = [&](const Atom& a) {
            for (const auto& t : a.args)
                if (!t.is_variable()) add(t.name);
        };
        for (const auto& ref : prog_.fact_order)
            scan(ref.kind == ItemKind::ProbFact ? prog_.prob_facts[ref.index].atom : prog_.opt_facts[ref.index].atom);
        for (const auto& r : prog_.rules) {
            scan(r.head);
            for (const auto& b : r.body) scan(b);
        }
        for (const auto& c : opts_.extra_constants) add(c);
    }

    /// All ground instances of `a` over the universe (variables repeated in
    /// `a` take equal values).
    std::vector<Atom> instances(const Atom& a) {
        std::vector<std::string> vars;
        for (const auto& t : a.args)
            if (t.is_variable() && std::find(vars.begin(), vars.end(), t.name) == vars.end()) vars.push_back(t.name);
        std::vector<Atom> out;
        if (vars.empty()) {
            out.push_back(a);
            return out;
        }
        if (gp_.universe.empty()) return out;
        double total = 1.0;
        for (std::size_t i = 0; i < vars.size(); ++i) total *= static_cast<double>(gp_.universe.size());
        if (total > static_cast<double>(opts_.max_ground_rules))
            throw ResourceError("grounder", "grounding of " + a.to_string() + " exceeds the ground-rule cap");
        std::vector<std::size_t> pick(vars.size(), 0);
        while (true) {
            Atom g = a;
            for (auto& t : g.args) {
                if (!t.is_variable()) continue;
                auto pos = std::find(vars.begin(), vars.end(), t.name) - vars.begin();
                t = Term::constant(gp_.universe[pick[pos]]);
            }
            out.push_back(std::move(g));
            std::size_t k = 0;
            while (k < pick.size() && ++pick[k] == gp_.universe.size()) pick[k++] = 0;
            if (k == pick.size()) break;
        }
        return out;
    }

    std::uint32_t intern(Atom a) {
        if (auto it = gp_.atom_ids.find(a); it != gp_.atom_ids.end()) return it->second;
        auto id = static_cast<std::uint32_t>(gp_.atoms.size());
        std::string sig = a.signature();
        auto& table = tables_[sig];
        if (table.by_arg.empty()) table.by_arg.resize(a.arity());
        auto pos = static_cast<std::uint32_t>(table.atoms.size());
        table.atoms.push_back(id);
        for (std::size_t i = 0; i < a.arity(); ++i) table.by_arg[i][a.args[i].name].push_back(pos);
        gp_.atom_ids.emplace(a, id);
        gp_.atoms.push_back(std::move(a));
        gp_.fact_var.push_back(std::nullopt);
        return id;
    }

    void add_fact(Atom a, bdd::VarKind kind, double prob, double lo, double hi, std::optional<std::size_t> opt) {
        std::uint32_t id = intern(a);
        gp_.fact_var[id] = static_cast<bdd::VarId>(gp_.facts.size());
        gp_.facts.push_back({std::move(a), kind, prob, lo, hi, opt});
    }

    void emit(GroundRule r) {
        if (gp_.ground_rules.size() >= opts_.max_ground_rules)
            throw ResourceError("grounder", "ground-rule cap of " + std::to_string(opts_.max_ground_rules) +
                                                " exceeded");
        gp_.ground_rules.push_back(std::move(r));
        if ((gp_.ground_rules.size() & 0xFFF) == 0) opts_.deadline.check("grounder", "grounding");
    }

    using Ends = std::unordered_map<std::string, std::uint32_t>;

    std::uint32_t end_of(const Ends& ends, const std::string& sig) const {
        auto it = ends.find(sig);
        return it == ends.end() ? 0 : it->second;
    }

    Ends snapshot() const {
        Ends e;
        for (const auto& [sig, t] : tables_) e[sig] = static_cast<std::uint32_t>(t.atoms.size());
        return e;
    }

    void saturate(const std::vector<std::size_t>& rule_ids) {
        Ends old_end;             // atoms before the current delta
        Ends cur_end = snapshot(); // end of the current delta
        while (true) {
            for (std::size_t r : rule_ids) {
                const Rule& rule = prog_.rules[r];
                for (std::size_t d = 0; d < rule.body.size(); ++d) {
                    std::string sig = rule.body[d].signature();
                    if (end_of(old_end, sig) == end_of(cur_end, sig)) continue;
                    std::unordered_map<std::string, std::string> binding;
                    std::vector<std::uint32_t> body(rule.body.size());
                    join(rule, 0, d, old_end, cur_end, binding, body);
                }
            }
            Ends next = snapshot();
            if (next == cur_end) break;
            old_end = std::move(cur_end);
            cur_end = std::move(next);
        }
    }

    /// Enumerates matches of body position `pos` and onward. Positions before
    /// `delta` range over old atoms, `delta` over the delta, later ones over
    /// old and delta atoms.
    void join(const Rule& rule, std::size_t pos, std::size_t delta, const Ends& old_end, const Ends& cur_end,
              std::unordered_map<std::string, std::string>& binding, std::vector<std::uint32_t>& body) {
        if (pos == rule.body.size()) {
            Atom head = rule.head;
            for (auto& t : head.args)
                if (t.is_variable()) t = Term::constant(binding.at(t.name));
            std::uint32_t id = intern(std::move(head));
            emit(GroundRule{id, body});
            return;
        }
        const Atom& pattern = rule.body[pos];
        std::string sig = pattern.signature();
        auto tit = tables_.find(sig);
        if (tit == tables_.end()) return;
        std::uint32_t lo = pos == delta ? end_of(old_end, sig) : 0;
        std::uint32_t hi = pos < delta ? end_of(old_end, sig) : end_of(cur_end, sig);
        if (lo >= hi) return;

        // Candidate positions: narrowest index list among bound arguments.
        const std::vector<std::uint32_t>* candidates = nullptr;
        for (std::size_t i = 0; i < pattern.arity(); ++i) {
            const Term& t = pattern.args[i];
            const std::string* value = nullptr;
            if (!t.is_variable()) value = &t.name;
            else if (auto b = binding.find(t.name); b != binding.end()) value = &b->second;
            if (!value) continue;
            const auto& idx = tit->second.by_arg[i];
            auto hit = idx.find(*value);
            if (hit == idx.end()) return;
            if (!candidates || hit->second.size() < candidates->size()) candidates = &hit->second;
        }

        auto visit = [&](std::uint32_t p) {
            // `p` indexes into tables_[sig].atoms, which may grow during recursion.
            std::uint32_t atom_id = tables_.at(sig).atoms[p];
            const Atom ground = gp_.atoms[atom_id];
            std::vector<std::string> bound_here;
            bool ok = true;
            for (std::size_t i = 0; i < pattern.arity() && ok; ++i) {
                const Term& t = pattern.args[i];
                const std::string& c = ground.args[i].name;
                if (!t.is_variable()) {
                    ok = t.name == c;
                } else if (auto b = binding.find(t.name); b != binding.end()) {
                    ok = b->second == c;
                } else {
                    binding.emplace(t.name, c);
                    bound_here.push_back(t.name);
                }
            }
            if (ok) {
                body[pos] = atom_id;
                join(rule, pos + 1, delta, old_end, cur_end, binding, body);
            }
            for (const auto& v : bound_here) binding.erase(v);
        };

        if (candidates) {
            // Copy the slice: interning during recursion can append to the list.
            auto first = std::lower_bound(candidates->begin(), candidates->end(), lo);
            auto last = std::lower_bound(first, candidates->end(), hi);
            std::vector<std::uint32_t> slice(first, last);
            for (std::uint32_t p : slice) visit(p);
        } else {
            for (std::uint32_t p = lo; p < hi; ++p) visit(p);
        }
    }

    const Program& prog_;
    const GroundOptions& opts_;
    GroundProgram gp_;
    std::unordered_map<std::string, PredTable> tables_;
};

} // namespace detail

/// Grounds `prog` over its Herbrand universe (plus any extra constants).
inline GroundProgram ground(const Program& prog, const GroundOptions& opts = {}) {
    return detail::Grounder(prog, opts).run();
}

/// Registers one BDD variable per ground fact, in fact-id order, so that BDD
/// variable ids coincide with fact variable ids.
inline void register_variables(const GroundProgram& gp, bdd::BddManager& m) {
    if (m.num_vars() != 0) throw ContractError("grounder", "manager already has variables");
    for (const auto& f : gp.facts) m.add_var({f.kind, f.prob, f.atom.to_string()});
}

/// Compiles a ground query into a BDD by least-fixpoint iteration over the
/// ground rules relevant to it: each derived atom starts at FALSE and a rule
/// is re-fired whenever a body formula changed, OR-ing the conjunction of its
/// body into its head until nothing changes.
inline bdd::NodeRef compile_query(const GroundProgram& gp, bdd::BddManager& m, const Atom& q,
                                  const Deadline& deadline = {}) {
    if (m.num_vars() != gp.num_vars()) throw ContractError("grounder", "manager variables do not match the program");
    if (!q.is_ground()) throw ContractError("grounder", "query " + q.to_string() + " is not ground");
    if (!gp.has_predicate(q.signature()))
        throw ContractError("grounder", "unknown predicate " + q.signature() + " in query");
    auto qid = gp.atom_id(q);
    if (!qid) return m.zero();
    if (auto v = gp.fact_var[*qid]) return m.var(*v);
    deadline.check("grounder", "query compilation");

    const std::size_t n_atoms = gp.atoms.size();
    std::vector<std::vector<std::uint32_t>> rules_by_head(n_atoms);
    for (std::uint32_t r = 0; r < gp.ground_rules.size(); ++r) rules_by_head[gp.ground_rules[r].head].push_back(r);

    // Rules in the dependency cone of q.
    std::vector<bool> relevant_atom(n_atoms, false);
    std::vector<std::uint32_t> rules;
    std::vector<std::uint32_t> stack{*qid};
    relevant_atom[*qid] = true;
    while (!stack.empty()) {
        std::uint32_t a = stack.back();
        stack.pop_back();
        for (std::uint32_t r : rules_by_head[a]) {
            rules.push_back(r);
            for (std::uint32_t b : gp.ground_rules[r].body)
                if (!relevant_atom[b]) {
                    relevant_atom[b] = true;
                    stack.push_back(b);
                }
        }
    }
    std::sort(rules.begin(), rules.end());

    std::vector<bdd::NodeRef> formula(n_atoms, m.zero());
    std::vector<std::vector<std::uint32_t>> users(n_atoms);
    for (std::uint32_t a = 0; a < n_atoms; ++a)
        if (relevant_atom[a] && gp.fact_var[a]) formula[a] = m.var(*gp.fact_var[a]);
    for (std::uint32_t r : rules)
        for (std::uint32_t b : gp.ground_rules[r].body) users[b].push_back(r);

    std::deque<std::uint32_t> queue(rules.begin(), rules.end());
    std::vector<bool> queued(gp.ground_rules.size(), false);
    for (std::uint32_t r : rules) queued[r] = true;
    std::size_t firings = 0;
    while (!queue.empty()) {
        std::uint32_t r = queue.front();
        queue.pop_front();
        queued[r] = false;
        if ((++firings & 0x3FF) == 0) deadline.check("grounder", "query compilation");
        const GroundRule& rule = gp.ground_rules[r];
        bdd::NodeRef conj = m.one();
        for (std::uint32_t b : rule.body) {
            conj = m.apply_and(conj, formula[b]);
            if (conj == m.zero()) break;
        }
        bdd::NodeRef updated = m.apply_or(formula[rule.head], conj);
        if (updated == formula[rule.head]) continue;
        formula[rule.head] = updated;
        for (std::uint32_t u : users[rule.head])
            if (!queued[u]) {
                queued[u] = true;
                queue.push_back(u);
            }
    }
    return formula[*qid];
}

} // namespace polp
