#pragma once

#include "polp/bdd.hpp"
#include "polp/error.hpp"
#include "polp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace polp::symbolic {

using bdd::PathTerm;
using bdd::VarId;

/// Sorted set of variable ids; the empty monomial is the constant term.
using Monomial = std::vector<VarId>;
using Assignment = std::map<VarId, double>;

struct PolyOptions {
    std::size_t max_monomials = 1'000'000;
    /// Coefficients below this magnitude are dropped as rounding noise.
    double drop_below = 1e-15;
};

/// Multilinear polynomial in the optimizable variables, stored in canonical
/// form: unique sorted monomials, no zero coefficients.
class QueryPolynomial {
public:
    QueryPolynomial() = default;

    static QueryPolynomial constant(double c) {
        QueryPolynomial p;
        if (c != 0.0) p.terms_[{}] = c;
        return p;
    }

    static QueryPolynomial from_terms(std::map<Monomial, double> terms, double drop_below = 1e-15) {
        QueryPolynomial p;
        for (auto& [m, c] : terms) {
            if (std::abs(c) < drop_below) continue;
            for (std::size_t i = 1; i < m.size(); ++i)
                if (m[i - 1] >= m[i]) throw ContractError("symbolic", "monomial is not a sorted set");
            p.terms_.emplace(m, c);
        }
        p.collect_vars();
        return p;
    }

    const std::map<Monomial, double>& terms() const { return terms_; }
    const std::vector<VarId>& vars() const { return vars_; }
    std::size_t size() const { return terms_.size(); }

    double coefficient(const Monomial& m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? 0.0 : it->second;
    }

    /// Raw value (not clamped). Monomials are summed in key order; with
    /// `compensated` the sum uses Kahan compensation.
    double evaluate(const Assignment& x, bool compensated = false) const {
        double sum = 0.0, carry = 0.0;
        for (const auto& [m, c] : terms_) {
            double term = c;
            for (VarId v : m) term *= lookup(x, v);
            if (compensated) {
                double y = term - carry;
                double t = sum + y;
                carry = (t - sum) - y;
                sum = t;
            } else {
                sum += term;
            }
        }
        return sum;
    }

    /// Exact partial derivatives with respect to every variable in vars().
    std::map<VarId, double> gradient(const Assignment& x) const {
        std::map<VarId, double> g;
        for (VarId v : vars_) g[v] = 0.0;
        for (const auto& [m, c] : terms_) {
            for (std::size_t i = 0; i < m.size(); ++i) {
                double d = c;
                for (std::size_t j = 0; j < m.size(); ++j)
                    if (j != i) d *= lookup(x, m[j]);
                g[m[i]] += d;
            }
        }
        for (VarId v : vars_) lookup(x, v);
        return g;
    }

    /// Multiplications and additions needed to evaluate the polynomial term by
    /// term: one multiplication per variable occurrence, one addition between
    /// consecutive terms.
    std::size_t operation_count() const {
        std::size_t ops = terms_.empty() ? 0 : terms_.size() - 1;
        for (const auto& [m, c] : terms_) ops += m.size();
        return ops;
    }

    /// Human-readable form, highest degree first, e.g.
    /// `-0.216*edge(b,c)*edge(b,d) + 0.27*edge(b,c) + 0.72*edge(b,d)`.
    std::string to_string(const std::function<std::string(VarId)>& name) const {
        std::vector<std::pair<const Monomial*, double>> order;
        for (const auto& [m, c] : terms_) order.emplace_back(&m, c);
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a.first->size() > b.first->size(); });
        if (order.empty()) return "0";
        std::string out;
        for (std::size_t i = 0; i < order.size(); ++i) {
            double c = order[i].second;
            if (i) out += c < 0 ? " - " : " + ";
            else if (c < 0) out += "-";
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6g", std::abs(c));
            out += buf;
            for (VarId v : *order[i].first) out += "*" + name(v);
        }
        return out;
    }

    friend bool operator==(const QueryPolynomial&, const QueryPolynomial&) = default;

private:
    friend QueryPolynomial to_polynomial(std::span<const PathTerm>, const PolyOptions&);

    static double lookup(const Assignment& x, VarId v) {
        auto it = x.find(v);
        if (it == x.end()) throw ContractError("symbolic", "assignment lacks variable " + std::to_string(v));
        return it->second;
    }

    void collect_vars() {
        vars_.clear();
        for (const auto& [m, c] : terms_) vars_.insert(vars_.end(), m.begin(), m.end());
        std::sort(vars_.begin(), vars_.end());
        vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
    }

    std::map<Monomial, double> terms_;
    std::vector<VarId> vars_;
};

/// Expands every path term coeff * prod(x) * prod(1 - x) and collects like
/// monomials. The result is the exact normal form of the query equation.
inline QueryPolynomial to_polynomial(std::span<const PathTerm> paths, const PolyOptions& opts = {}) {
    std::map<Monomial, double> acc;
    for (const auto& t : paths) {
        Monomial pos;
        std::vector<VarId> neg;
        for (const auto& lit : t.literals) (lit.value ? pos : neg).push_back(lit.var);
        std::vector<VarId> all = pos;
        all.insert(all.end(), neg.begin(), neg.end());
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end())
            throw ContractError("symbolic", "path term mentions a variable twice");
        if (neg.size() >= 63 || (std::size_t{1} << neg.size()) > opts.max_monomials)
            throw ResourceError("symbolic", "path expansion exceeds the monomial cap");
        std::sort(pos.begin(), pos.end());
        const std::size_t subsets = std::size_t{1} << neg.size();
        for (std::size_t s = 0; s < subsets; ++s) {
            Monomial m = pos;
            int sign = 1;
            for (std::size_t k = 0; k < neg.size(); ++k)
                if (s >> k & 1u) {
                    m.push_back(neg[k]);
                    sign = -sign;
                }
            std::sort(m.begin(), m.end());
            acc[std::move(m)] += sign * t.coeff;
            if (acc.size() > opts.max_monomials)
                throw ResourceError("symbolic", "query equation exceeds " + std::to_string(opts.max_monomials) +
                                                    " monomials");
        }
    }
    return QueryPolynomial::from_terms(std::move(acc), opts.drop_below);
}

inline double evaluate(const QueryPolynomial& p, const Assignment& x) { return p.evaluate(x); }

inline std::map<VarId, double> gradient(const QueryPolynomial& p, const Assignment& x) { return p.gradient(x); }

/// Probability for reporting: the raw value clamped to [0,1].
inline double clamp_probability(double v) { return std::clamp(v, 0.0, 1.0); }

/// Direct evaluation of the unexpanded path sum.
inline double evaluate_paths(std::span<const PathTerm> paths, const Assignment& x) {
    double sum = 0.0;
    for (const auto& t : paths) {
        double term = t.coeff;
        for (const auto& lit : t.literals) {
            auto it = x.find(lit.var);
            if (it == x.end()) throw ContractError("symbolic", "assignment lacks variable " + std::to_string(lit.var));
            term *= lit.value ? it->second : 1.0 - it->second;
        }
        sum += term;
    }
    return sum;
}

/// Operation count of the unexpanded path sum: a multiplication per literal,
/// a subtraction per negative literal, an addition between terms.
inline std::size_t operation_count(std::span<const PathTerm> paths) {
    std::size_t ops = paths.empty() ? 0 : paths.size() - 1;
    for (const auto& t : paths)
        for (const auto& lit : t.literals) ops += lit.value ? 1 : 2;
    return ops;
}

/// Maps between optimizable-fact indices (the optimizer's coordinates) and
/// BDD variable ids.
struct VarSpace {
    std::vector<VarId> var_of_opt;
    std::unordered_map<VarId, std::size_t> opt_of_var;

    std::size_t size() const { return var_of_opt.size(); }

    void add(VarId v) {
        opt_of_var.emplace(v, var_of_opt.size());
        var_of_opt.push_back(v);
    }
};

/// Polynomial over dense optimizer coordinates, for fast repeated evaluation.
class DensePolynomial {
public:
    DensePolynomial() = default;

    DensePolynomial(const QueryPolynomial& p, const VarSpace& space) {
        offsets_.push_back(0);
        for (const auto& [m, c] : p.terms()) {
            for (VarId v : m) {
                auto it = space.opt_of_var.find(v);
                if (it == space.opt_of_var.end())
                    throw ContractError("symbolic", "polynomial variable " + std::to_string(v) + " is not optimizable");
                index_.push_back(it->second);
            }
            offsets_.push_back(index_.size());
            coeffs_.push_back(c);
        }
    }

    double value(std::span<const double> x) const {
        double sum = 0.0;
        for (std::size_t t = 0; t < coeffs_.size(); ++t) {
            double term = coeffs_[t];
            for (std::size_t k = offsets_[t]; k < offsets_[t + 1]; ++k) term *= x[index_[k]];
            sum += term;
        }
        return sum;
    }

    /// grad += scale * d(value)/dx.
    void add_gradient(std::span<const double> x, double scale, std::span<double> grad) const {
        for (std::size_t t = 0; t < coeffs_.size(); ++t) {
            const std::size_t b = offsets_[t], e = offsets_[t + 1];
            // Product of all other factors via a running prefix product and a
            // recomputed suffix, robust to zero factors.
            double prefix = scale * coeffs_[t];
            for (std::size_t k = b; k < e; ++k) {
                double suffix = 1.0;
                for (std::size_t j = k + 1; j < e; ++j) suffix *= x[index_[j]];
                grad[index_[k]] += prefix * suffix;
                prefix *= x[index_[k]];
            }
        }
    }

    std::size_t size() const { return coeffs_.size(); }

private:
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> index_;
    std::vector<double> coeffs_;
};

/// Expression over optimizer coordinates in which query atoms have been
/// replaced by their query equations. Gradients use reverse accumulation.
class CompiledExpr {
public:
    CompiledExpr() = default;

    double value(std::span<const double> x) const {
        std::vector<double> v(nodes_.size());
        forward(x, v);
        return v.empty() ? 0.0 : v.back();
    }

    /// Returns the value and overwrites `grad` with the gradient.
    double value_and_gradient(std::span<const double> x, std::span<double> grad) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        if (nodes_.empty()) return 0.0;
        std::vector<double> v(nodes_.size());
        forward(x, v);
        std::vector<double> adj(nodes_.size(), 0.0);
        adj.back() = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            const Node& n = nodes_[i];
            const double a = adj[i];
            switch (n.op) {
            case Op::Constant: break;
            case Op::Var: grad[n.index] += a; break;
            case Op::Poly: (*polys_)[n.index].add_gradient(x, a, grad); break;
            case Op::Add: adj[n.lhs] += a; adj[n.rhs] += a; break;
            case Op::Sub: adj[n.lhs] += a; adj[n.rhs] -= a; break;
            case Op::Mul: adj[n.lhs] += a * v[n.rhs]; adj[n.rhs] += a * v[n.lhs]; break;
            case Op::Neg: adj[n.lhs] -= a; break;
            }
        }
        return v.back();
    }

    std::size_t num_vars() const { return num_vars_; }
    std::size_t node_count() const { return nodes_.size(); }

    static CompiledExpr compile(const Expr& e, std::shared_ptr<const std::vector<DensePolynomial>> polys,
                                std::size_t num_vars) {
        CompiledExpr c;
        c.polys_ = std::move(polys);
        c.num_vars_ = num_vars;
        c.emit(e);
        return c;
    }

private:
    enum class Op { Constant, Var, Poly, Add, Sub, Mul, Neg };
    struct Node {
        Op op;
        double constant = 0.0;
        std::size_t index = 0;
        std::size_t lhs = 0;
        std::size_t rhs = 0;
    };

    std::size_t emit(const Expr& e) {
        Node n{Op::Constant};
        switch (e.kind) {
        case Expr::Kind::Constant: n.constant = e.value; break;
        case Expr::Kind::OptRef:
            if (e.index >= num_vars_) throw ContractError("symbolic", "optimizable reference out of range");
            n.op = Op::Var;
            n.index = e.index;
            break;
        case Expr::Kind::QueryRef:
            if (!polys_ || e.index >= polys_->size())
                throw ContractError("symbolic", "unresolved query atom reference " + std::to_string(e.index));
            n.op = Op::Poly;
            n.index = e.index;
            break;
        case Expr::Kind::Neg:
            n.op = Op::Neg;
            n.lhs = emit(e.operands.at(0));
            break;
        case Expr::Kind::Add:
        case Expr::Kind::Sub:
        case Expr::Kind::Mul:
            n.op = e.kind == Expr::Kind::Add ? Op::Add : e.kind == Expr::Kind::Sub ? Op::Sub : Op::Mul;
            n.lhs = emit(e.operands.at(0));
            n.rhs = emit(e.operands.at(1));
            break;
        }
        nodes_.push_back(n);
        return nodes_.size() - 1;
    }

    void forward(std::span<const double> x, std::vector<double>& v) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            switch (n.op) {
            case Op::Constant: v[i] = n.constant; break;
            case Op::Var: v[i] = x[n.index]; break;
            case Op::Poly: v[i] = (*polys_)[n.index].value(x); break;
            case Op::Add: v[i] = v[n.lhs] + v[n.rhs]; break;
            case Op::Sub: v[i] = v[n.lhs] - v[n.rhs]; break;
            case Op::Mul: v[i] = v[n.lhs] * v[n.rhs]; break;
            case Op::Neg: v[i] = -v[n.lhs]; break;
            }
        }
    }

    std::vector<Node> nodes_;
    std::shared_ptr<const std::vector<DensePolynomial>> polys_;
    std::size_t num_vars_ = 0;
};

/// Substitutes query equations for the query atoms of `e` (indexed like
/// ProblemSpec::query_atoms) and compiles the result over `space`.
inline CompiledExpr expr_compile(const Expr& e, const std::vector<QueryPolynomial>& query_polys,
                                 const VarSpace& space) {
    auto dense = std::make_shared<std::vector<DensePolynomial>>();
    for (const auto& p : query_polys) dense->emplace_back(p, space);
    return CompiledExpr::compile(e, std::move(dense), space.size());
}

} // namespace polp::symbolic
