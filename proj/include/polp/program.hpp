#pragma once

#include <charconv>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace polp {

/// Argument of an atom. Function symbols are not supported, so a term is
/// either a constant or a variable.
struct Term {
    enum class Kind { Constant, Variable };

    Kind kind = Kind::Constant;
    std::string name;

    static Term constant(std::string n) { return {Kind::Constant, std::move(n)}; }
    static Term variable(std::string n) { return {Kind::Variable, std::move(n)}; }

    bool is_variable() const { return kind == Kind::Variable; }

    friend bool operator==(const Term&, const Term&) = default;
    friend auto operator<=>(const Term&, const Term&) = default;
};

struct Atom {
    std::string predicate;
    std::vector<Term> args;

    std::size_t arity() const { return args.size(); }

    bool is_ground() const {
        for (const auto& t : args)
            if (t.is_variable()) return false;
        return true;
    }

    std::string signature() const { return predicate + "/" + std::to_string(args.size()); }

    std::string to_string() const {
        std::string out = predicate;
        if (!args.empty()) {
            out += '(';
            for (std::size_t i = 0; i < args.size(); ++i) {
                if (i) out += ',';
                out += args[i].name;
            }
            out += ')';
        }
        return out;
    }

    friend bool operator==(const Atom&, const Atom&) = default;
    friend auto operator<=>(const Atom&, const Atom&) = default;
};

/// Most general unifier test for two function-free atoms with variables
/// renamed apart.
inline bool unifiable(const Atom& a, const Atom& b) {
    if (a.predicate != b.predicate || a.arity() != b.arity()) return false;
    // Variables of `a` are prefixed with 0, those of `b` with 1.
    std::map<std::string, std::string> parent;
    auto find = [&](std::string x) {
        while (true) {
            auto it = parent.find(x);
            if (it == parent.end() || it->second == x) return x;
            x = it->second;
        }
    };
    auto key = [](int side, const Term& t) {
        return t.is_variable() ? std::string(1, char('0' + side)) + t.name : "#" + t.name;
    };
    for (std::size_t i = 0; i < a.arity(); ++i) {
        auto x = find(key(0, a.args[i]));
        auto y = find(key(1, b.args[i]));
        if (x == y) continue;
        bool xc = x[0] == '#', yc = y[0] == '#';
        if (xc && yc) return false;
        if (xc) parent[y] = x;
        else parent[x] = y;
    }
    return true;
}

struct SourceLoc {
    std::size_t line = 0;
    std::size_t column = 0;

    friend bool operator==(const SourceLoc&, const SourceLoc&) = default;
};

/// `prob::atom.`; every ground instance is an independent Bernoulli variable.
struct ProbFact {
    Atom atom;
    double prob = 1.0;

    friend bool operator==(const ProbFact&, const ProbFact&) = default;
};

inline constexpr double kDefaultOptLower = 0.001;
inline constexpr double kDefaultOptUpper = 0.999;

/// `optimizable [lower,upper]::atom.`; the probability is a decision variable.
struct OptFact {
    Atom atom;
    double lower = kDefaultOptLower;
    double upper = kDefaultOptUpper;
    /// False when the range was omitted in the source (defaults apply).
    bool explicit_range = false;

    friend bool operator==(const OptFact&, const OptFact&) = default;
};

/// Definite clause. An empty body denotes a deterministic fact such as
/// `path(X,X).`, whose variables range over the Herbrand universe.
struct Rule {
    Atom head;
    std::vector<Atom> body;

    friend bool operator==(const Rule&, const Rule&) = default;
};

enum class ItemKind { ProbFact, OptFact, Rule, Directive };

struct ItemRef {
    ItemKind kind;
    std::size_t index;

    friend bool operator==(const ItemRef&, const ItemRef&) = default;
    friend auto operator<=>(const ItemRef&, const ItemRef&) = default;
};

/// A parsed probabilistic optimizable logic program.
struct Program {
    std::vector<ProbFact> prob_facts;
    std::vector<OptFact> opt_facts;
    std::vector<Rule> rules;
    /// Bodies of `% polp:` directive lines, in file order.
    std::vector<std::string> directives;
    /// Declaration order of facts: the i-th fact declared in the text.
    std::vector<ItemRef> fact_order;
    std::map<ItemRef, SourceLoc> source_spans;

    /// Structural equality; source locations are not compared.
    friend bool operator==(const Program& a, const Program& b) {
        return a.prob_facts == b.prob_facts && a.opt_facts == b.opt_facts && a.rules == b.rules &&
               a.directives == b.directives && a.fact_order == b.fact_order;
    }

    std::optional<std::size_t> find_opt_fact(const Atom& ground) const {
        for (std::size_t i = 0; i < opt_facts.size(); ++i)
            if (opt_facts[i].atom == ground) return i;
        return std::nullopt;
    }

    bool defines_by_rule(const std::string& signature) const {
        for (const auto& r : rules)
            if (r.head.signature() == signature) return true;
        return false;
    }

    bool defines_by_fact(const std::string& signature) const {
        for (const auto& f : prob_facts)
            if (f.atom.signature() == signature) return true;
        for (const auto& f : opt_facts)
            if (f.atom.signature() == signature) return true;
        return false;
    }
};

/// Shortest decimal text that reads back to the same binary64 value.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Canonical program text; reparsing it yields a structurally equal Program.
inline std::string to_string(const Program& p) {
    std::string out;
    for (const auto& d : p.directives) out += "% polp: " + d + "\n";
    for (const auto& ref : p.fact_order) {
        if (ref.kind == ItemKind::ProbFact) {
            const auto& f = p.prob_facts[ref.index];
            out += format_double(f.prob) + "::" + f.atom.to_string() + ".\n";
        } else {
            const auto& f = p.opt_facts[ref.index];
            out += "optimizable ";
            if (f.explicit_range)
                out += "[" + format_double(f.lower) + "," + format_double(f.upper) + "]";
            out += "::" + f.atom.to_string() + ".\n";
        }
    }
    for (const auto& r : p.rules) {
        out += r.head.to_string();
        if (!r.body.empty()) {
            out += " :- ";
            for (std::size_t i = 0; i < r.body.size(); ++i) {
                if (i) out += ", ";
                out += r.body[i].to_string();
            }
        }
        out += ".\n";
    }
    return out;
}

} // namespace polp

template <>
struct std::hash<polp::Atom> {
    std::size_t operator()(const polp::Atom& a) const noexcept {
        std::size_t h = std::hash<std::string>{}(a.predicate);
        for (const auto& t : a.args)
            h ^= std::hash<std::string>{}(t.name) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};
