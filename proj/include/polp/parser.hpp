#pragma once

#include "polp/error.hpp"
#include "polp/lexer.hpp"
#include "polp/program.hpp"

#include <set>
#include <string>
#include <string_view>

namespace polp {

namespace detail {

inline Term parse_term(TokenStream& ts) {
    const Token& t = ts.peek();
    switch (t.kind) {
    case Tok::Ident:
    case Tok::Number: return Term::constant(ts.next().text);
    case Tok::Variable: return Term::variable(ts.next().text);
    default: ts.fail("expected a constant or variable argument");
    }
}

inline Atom parse_atom(TokenStream& ts, const char* context) {
    Atom a;
    a.predicate = ts.expect(Tok::Ident, context).text;
    if (ts.accept(Tok::LParen)) {
        a.args.push_back(parse_term(ts));
        while (ts.accept(Tok::Comma)) a.args.push_back(parse_term(ts));
        ts.expect(Tok::RParen, "to close the argument list");
    }
    return a;
}

class ProgramParser {
public:
    explicit ProgramParser(std::string_view text) : lexer_(text), ts_(lexer_.tokenize()) {}

    Program run() {
        while (!ts_.at_end()) clause();
        for (const auto& d : lexer_.directives()) {
            prog_.source_spans[{ItemKind::Directive, prog_.directives.size()}] = {d.line, 1};
            prog_.directives.push_back(d.text);
        }
        validate();
        return std::move(prog_);
    }

private:
    void clause() {
        const Token& first = ts_.peek();
        SourceLoc loc{first.line, first.column};
        if (first.kind == Tok::Number) {
            prob_fact(loc);
        } else if (first.kind == Tok::Ident && first.text == "optimizable" &&
                   (ts_.peek(1).kind == Tok::LBracket || ts_.peek(1).kind == Tok::ColonColon)) {
            opt_fact(loc);
        } else if (first.kind == Tok::Ident) {
            rule(loc);
        } else {
            ts_.fail("expected a clause, found '" + first.text + "'");
        }
    }

    void prob_fact(SourceLoc loc) {
        const Token& num = ts_.next();
        ts_.expect(Tok::ColonColon, "after the probability");
        ProbFact f{parse_atom(ts_, "after '::'"), num.number};
        ts_.expect(Tok::Dot, "to end the fact");
        if (!(f.prob > 0.0 && f.prob <= 1.0))
            throw ParseError(num.line, num.column, "probability out of range (0,1]: " + num.text);
        add_fact(ItemKind::ProbFact, loc);
        prog_.prob_facts.push_back(std::move(f));
    }

    void opt_fact(SourceLoc loc) {
        ts_.next();
        OptFact f;
        if (ts_.accept(Tok::LBracket)) {
            const Token& lo = ts_.expect(Tok::Number, "as lower bound");
            ts_.expect(Tok::Comma, "between bounds");
            const Token& hi = ts_.expect(Tok::Number, "as upper bound");
            ts_.expect(Tok::RBracket, "after the bounds");
            f.lower = lo.number;
            f.upper = hi.number;
            f.explicit_range = true;
            if (!(f.lower > 0.0 && f.upper < 1.0))
                throw ParseError(lo.line, lo.column, "optimizable bounds must lie strictly inside (0,1)");
            if (!(f.lower < f.upper))
                throw ParseError(lo.line, lo.column, "optimizable lower bound must be below the upper bound");
        }
        ts_.expect(Tok::ColonColon, "before the optimizable atom");
        const Token& at = ts_.peek();
        f.atom = parse_atom(ts_, "after '::'");
        if (!f.atom.is_ground()) throw ParseError(at.line, at.column, "optimizable fact must be ground");
        ts_.expect(Tok::Dot, "to end the fact");
        add_fact(ItemKind::OptFact, loc);
        prog_.opt_facts.push_back(std::move(f));
    }

    void rule(SourceLoc loc) {
        Rule r;
        r.head = parse_atom(ts_, "as rule head");
        if (ts_.accept(Tok::ColonDash)) {
            r.body.push_back(parse_atom(ts_, "in rule body"));
            while (ts_.accept(Tok::Comma)) r.body.push_back(parse_atom(ts_, "in rule body"));
        }
        ts_.expect(Tok::Dot, "to end the clause");
        prog_.source_spans[{ItemKind::Rule, prog_.rules.size()}] = loc;
        prog_.rules.push_back(std::move(r));
    }

    void add_fact(ItemKind kind, SourceLoc loc) {
        std::size_t index = kind == ItemKind::ProbFact ? prog_.prob_facts.size() : prog_.opt_facts.size();
        ItemRef ref{kind, index};
        prog_.fact_order.push_back(ref);
        prog_.source_spans[ref] = loc;
    }

    [[noreturn]] void fail_at(ItemRef ref, const std::string& message) const {
        auto it = prog_.source_spans.find(ref);
        SourceLoc loc = it == prog_.source_spans.end() ? SourceLoc{} : it->second;
        throw ParseError(loc.line, loc.column, message);
    }

    const Atom& fact_atom(ItemRef ref) const {
        return ref.kind == ItemKind::ProbFact ? prog_.prob_facts[ref.index].atom
                                              : prog_.opt_facts[ref.index].atom;
    }

    void validate() const {
        const auto& order = prog_.fact_order;
        for (std::size_t i = 0; i < order.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (!unifiable(fact_atom(order[i]), fact_atom(order[j]))) continue;
                if (order[i].kind != order[j].kind)
                    fail_at(order[i], "atom " + fact_atom(order[i]).to_string() +
                                          " declared both as probabilistic and optimizable fact");
                fail_at(order[i], "duplicate fact declaration " + fact_atom(order[i]).to_string());
            }
        }
        std::set<std::string> defined;
        for (const auto& ref : order) defined.insert(fact_atom(ref).signature());
        for (const auto& r : prog_.rules) defined.insert(r.head.signature());

        for (std::size_t ri = 0; ri < prog_.rules.size(); ++ri) {
            const Rule& r = prog_.rules[ri];
            ItemRef here{ItemKind::Rule, ri};
            for (const auto& ref : order)
                if (unifiable(r.head, fact_atom(ref)))
                    fail_at(here, "rule head " + r.head.to_string() + " clashes with fact " +
                                      fact_atom(ref).to_string());
            std::set<std::string> body_vars;
            for (const auto& b : r.body) {
                if (!defined.count(b.signature()))
                    fail_at(here, "undefined predicate " + b.signature() + " in body of " + r.head.to_string());
                for (const auto& t : b.args)
                    if (t.is_variable()) body_vars.insert(t.name);
            }
            if (r.body.empty()) continue;
            for (const auto& t : r.head.args)
                if (t.is_variable() && !body_vars.count(t.name))
                    fail_at(here, "head variable " + t.name + " of " + r.head.to_string() +
                                      " does not occur in the body");
        }
    }

    Lexer lexer_;
    TokenStream ts_;
    Program prog_;
};

} // namespace detail

/// Parses POLP program text. Deterministic; throws ParseError with the
/// location of the first offending token or clause.
inline Program parse_program(std::string_view text) { return detail::ProgramParser(text).run(); }

/// Parses a single atom such as `path(a,e)`.
inline Atom parse_atom_text(std::string_view text) {
    Lexer lx(text);
    TokenStream ts(lx.tokenize());
    Atom a = detail::parse_atom(ts, "as atom");
    if (!ts.at_end()) ts.fail("unexpected trailing input after atom");
    return a;
}

} // namespace polp
