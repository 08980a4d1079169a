#pragma once

#include "polp/error.hpp"
#include "polp/lexer.hpp"
#include "polp/parser.hpp"
#include "polp/program.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace polp {

/// Arithmetic over optimizable-fact probabilities and query probabilities.
/// Division is intentionally absent so every expression is polynomial.
struct Expr {
    enum class Kind { Constant, OptRef, QueryRef, Add, Sub, Mul, Neg };

    Kind kind = Kind::Constant;
    double value = 0.0;
    /// Index into Program::opt_facts (OptRef) or ProblemSpec::query_atoms (QueryRef).
    std::size_t index = 0;
    std::vector<Expr> operands;

    static Expr constant(double v) { return {Kind::Constant, v, 0, {}}; }
    static Expr opt_ref(std::size_t i) { return {Kind::OptRef, 0.0, i, {}}; }
    static Expr query_ref(std::size_t i) { return {Kind::QueryRef, 0.0, i, {}}; }
    static Expr binary(Kind k, Expr a, Expr b) {
        Expr e{k, 0.0, 0, {}};
        e.operands.push_back(std::move(a));
        e.operands.push_back(std::move(b));
        return e;
    }
    static Expr negate(Expr a) {
        Expr e{Kind::Neg, 0.0, 0, {}};
        e.operands.push_back(std::move(a));
        return e;
    }

    bool mentions_query() const {
        if (kind == Kind::QueryRef) return true;
        for (const auto& o : operands)
            if (o.mentions_query()) return true;
        return false;
    }

    friend bool operator==(const Expr&, const Expr&) = default;
};

enum class Cmp { Less, LessEq, Greater, GreaterEq };
enum class Direction { Minimize, Maximize };

struct Constraint {
    Expr lhs;
    Cmp cmp = Cmp::LessEq;
    Expr rhs;
    std::string text;

    bool strict() const { return cmp == Cmp::Less || cmp == Cmp::Greater; }

    /// Residual g with the constraint holding iff g <= 0. Strict comparisons
    /// are tightened by `strict_eps`.
    Expr residual(double strict_eps) const {
        bool upper = cmp == Cmp::Less || cmp == Cmp::LessEq;
        Expr g = upper ? Expr::binary(Expr::Kind::Sub, lhs, rhs) : Expr::binary(Expr::Kind::Sub, rhs, lhs);
        if (strict() && strict_eps != 0.0) g = Expr::binary(Expr::Kind::Add, std::move(g), Expr::constant(strict_eps));
        return g;
    }
};

/// Implicit box constraint on one optimizable fact.
struct BoundConstraint {
    enum class Side { Lower, Upper };

    std::size_t opt_index = 0;
    Side side = Side::Lower;
    double value = 0.0;

    friend bool operator==(const BoundConstraint&, const BoundConstraint&) = default;
};

struct SolverConfig {
    std::string algorithm = "sqp";
    double tolerance = 1e-5;
    std::size_t max_iters = 1000;
    double strict_eps = 0.0;
    std::size_t multistart = 1;
    std::uint64_t seed = 0;
};

struct ProblemSpec {
    Atom query;
    Direction direction = Direction::Minimize;
    Expr objective;
    std::vector<Constraint> constraints;
    std::vector<BoundConstraint> bounds;
    /// Ground atoms whose probability the problem needs: the query first,
    /// then every query atom referenced by a constraint.
    std::vector<Atom> query_atoms;
    SolverConfig solver;
};

namespace detail {

/// Recursive-descent parser for expressions and comparisons. Atoms resolve
/// against the program: declared optimizable facts become OptRef, atoms of
/// rule-defined predicates or probabilistic facts become QueryRef.
class ExprParser {
public:
    ExprParser(std::string_view text, const Program& prog, std::vector<Atom>& query_atoms)
        : lexer_(text), ts_(lexer_.tokenize()), prog_(prog), queries_(query_atoms) {}

    Expr expression_only() {
        Expr e = sum();
        finish();
        return e;
    }

    /// Objective text; a single-element list `[e]` is accepted as sugar for `e`.
    Expr objective() {
        bool bracketed = ts_.accept(Tok::LBracket);
        Expr e = sum();
        if (bracketed) {
            if (ts_.at(Tok::Comma)) ts_.fail("only a single objective expression is supported");
            ts_.expect(Tok::RBracket, "to close the objective list");
        }
        finish();
        return e;
    }

    Constraint comparison() {
        Constraint c;
        c.lhs = sum();
        switch (ts_.peek().kind) {
        case Tok::Less: c.cmp = Cmp::Less; break;
        case Tok::LessEq: c.cmp = Cmp::LessEq; break;
        case Tok::Greater: c.cmp = Cmp::Greater; break;
        case Tok::GreaterEq: c.cmp = Cmp::GreaterEq; break;
        default: ts_.fail("expected a comparison operator (<, <=, >, >=)");
        }
        ts_.next();
        c.rhs = sum();
        finish();
        return c;
    }

private:
    void finish() {
        if (!ts_.at_end()) ts_.fail("unexpected '" + ts_.peek().text + "' in expression");
    }

    Expr sum() {
        Expr e = product();
        while (ts_.at(Tok::Plus) || ts_.at(Tok::Minus)) {
            auto k = ts_.next().kind == Tok::Plus ? Expr::Kind::Add : Expr::Kind::Sub;
            e = Expr::binary(k, std::move(e), product());
        }
        return e;
    }

    Expr product() {
        Expr e = unary();
        while (ts_.accept(Tok::Star)) e = Expr::binary(Expr::Kind::Mul, std::move(e), unary());
        return e;
    }

    Expr unary() {
        if (ts_.accept(Tok::Minus)) return Expr::negate(unary());
        if (ts_.accept(Tok::Plus)) return unary();
        return primary();
    }

    Expr primary() {
        const Token& t = ts_.peek();
        if (t.kind == Tok::Number) return Expr::constant(ts_.next().number);
        if (ts_.accept(Tok::LParen)) {
            Expr e = sum();
            ts_.expect(Tok::RParen, "to close the parenthesis");
            return e;
        }
        if (t.kind == Tok::Ident) {
            std::size_t line = t.line, col = t.column;
            Atom a = parse_atom(ts_, "in expression");
            return resolve(a, line, col);
        }
        ts_.fail(t.kind == Tok::End ? "unexpected end of expression"
                                    : "unexpected '" + t.text + "' in expression");
    }

    Expr resolve(const Atom& a, std::size_t line, std::size_t col) {
        if (!a.is_ground()) throw ParseError(line, col, "atom " + a.to_string() + " in expression is not ground");
        if (auto i = prog_.find_opt_fact(a)) return Expr::opt_ref(*i);
        std::string sig = a.signature();
        bool probabilistic = false;
        for (const auto& f : prog_.prob_facts)
            if (unifiable(f.atom, a)) probabilistic = true;
        if (prog_.defines_by_rule(sig) || probabilistic) {
            for (std::size_t i = 0; i < queries_.size(); ++i)
                if (queries_[i] == a) return Expr::query_ref(i);
            queries_.push_back(a);
            return Expr::query_ref(queries_.size() - 1);
        }
        if (prog_.defines_by_fact(sig))
            throw ResolutionError("unresolved optimizable reference " + a.to_string() + " at column " +
                                  std::to_string(col));
        throw ResolutionError("unresolved atom " + a.to_string() + " at column " + std::to_string(col));
    }

    Lexer lexer_;
    TokenStream ts_;
    const Program& prog_;
    std::vector<Atom>& queries_;
};

inline void check_objective(const Expr& e) {
    if (e.mentions_query())
        throw ResolutionError("objective may reference only optimizable facts");
}

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

} // namespace detail

/// Builds a ProblemSpec from query, objective and constraint texts, resolving
/// names against `prog` and adding the implicit box bounds of every
/// optimizable fact.
inline ProblemSpec parse_problem(const Program& prog, std::string_view query_text, std::string_view objective_text,
                                 const std::vector<std::string>& constraint_texts, const SolverConfig& config = {},
                                 Direction direction = Direction::Minimize) {
    ProblemSpec spec;
    spec.solver = config;
    spec.direction = direction;
    spec.query = parse_atom_text(query_text);
    if (!spec.query.is_ground()) throw ResolutionError("query " + spec.query.to_string() + " is not ground");
    std::string sig = spec.query.signature();
    if (!prog.defines_by_rule(sig) && !prog.defines_by_fact(sig))
        throw ResolutionError("unresolved atom " + spec.query.to_string() + ": unknown predicate " + sig);
    spec.query_atoms.push_back(spec.query);

    std::string objective = detail::trim(objective_text);
    if (objective.empty()) objective = "0";
    spec.objective = detail::ExprParser(objective, prog, spec.query_atoms).objective();
    detail::check_objective(spec.objective);

    for (const auto& text : constraint_texts) {
        Constraint c = detail::ExprParser(text, prog, spec.query_atoms).comparison();
        c.text = detail::trim(text);
        spec.constraints.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < prog.opt_facts.size(); ++i) {
        spec.bounds.push_back({i, BoundConstraint::Side::Lower, prog.opt_facts[i].lower});
        spec.bounds.push_back({i, BoundConstraint::Side::Upper, prog.opt_facts[i].upper});
    }
    return spec;
}

/// Query, objective and constraints extracted from `% polp:` directives.
struct DirectiveSpec {
    std::string query;
    std::string objective;
    std::vector<std::string> constraints;
    std::optional<Direction> direction;
};

/// Splits the concatenated directive lines of a program into their
/// `key=value` fields. Recognized keys: query, objective, constraint
/// (repeatable) and direction (minimize|maximize).
inline std::optional<DirectiveSpec> parse_directives(const Program& prog) {
    if (prog.directives.empty()) return std::nullopt;
    std::string all;
    for (const auto& d : prog.directives) {
        if (!all.empty()) all += ' ';
        all += d;
    }
    static constexpr std::string_view keys[] = {"query=", "objective=", "constraint=", "direction="};
    // A key starts at the beginning or right after whitespace.
    auto key_at = [&](std::size_t pos) -> std::string_view {
        if (pos > 0 && !std::isspace(static_cast<unsigned char>(all[pos - 1]))) return {};
        for (auto k : keys)
            if (std::string_view(all).substr(pos, k.size()) == k) return k;
        return {};
    };
    DirectiveSpec out;
    std::size_t pos = 0;
    while (pos < all.size() && std::isspace(static_cast<unsigned char>(all[pos]))) ++pos;
    while (pos < all.size()) {
        auto key = key_at(pos);
        if (key.empty()) {
            auto line = prog.source_spans.at({ItemKind::Directive, 0}).line;
            throw ParseError(line, pos + 1, "malformed polp directive near '" + all.substr(pos, 20) + "'");
        }
        std::size_t start = pos + key.size();
        std::size_t end = start;
        while (end < all.size() && key_at(end).empty()) ++end;
        std::string value = detail::trim(std::string_view(all).substr(start, end - start));
        if (key == "query=") out.query = value;
        else if (key == "objective=") out.objective = value;
        else if (key == "constraint=") out.constraints.push_back(value);
        else if (value == "minimize" || value == "min") out.direction = Direction::Minimize;
        else if (value == "maximize" || value == "max") out.direction = Direction::Maximize;
        else throw ResolutionError("unknown direction '" + value + "' in polp directive");
        pos = end;
    }
    if (out.query.empty()) throw ResolutionError("polp directive lacks query=");
    return out;
}

} // namespace polp
