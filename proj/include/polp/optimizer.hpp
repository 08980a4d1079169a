#pragma once

#include "polp/deadline.hpp"
#include "polp/error.hpp"
#include "polp/problem.hpp"
#include "polp/qp.hpp"
#include "polp/symbolic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace polp::opt {

using symbolic::CompiledExpr;

struct OptConfig {
    double tolerance = 1e-5;
    std::size_t max_iters = 1000;
    /// Start point; the box midpoint when empty.
    std::vector<double> start;
    /// Violation below which the restoration phase counts as successful.
    double restoration_tolerance = 1e-6;
    Deadline deadline;
};

/// Nonlinear program over the box of optimizable probabilities with
/// inequality constraints g_k(x) <= 0.
struct OptProblem {
    std::size_t n = 0;
    Direction direction = Direction::Minimize;
    CompiledExpr objective;
    std::vector<CompiledExpr> constraints;
    std::vector<std::string> constraint_names;
    std::vector<double> lower;
    std::vector<double> upper;
    OptConfig config;

    void validate() const {
        if (lower.size() != n || upper.size() != n)
            throw ContractError("optimizer", "bounds do not match the number of variables");
        for (std::size_t i = 0; i < n; ++i)
            if (!(lower[i] < upper[i])) throw ContractError("optimizer", "empty box for variable " + std::to_string(i));
        if (objective.node_count() && objective.num_vars() != n)
            throw ContractError("optimizer", "objective dimension mismatch");
        for (const auto& c : constraints)
            if (c.num_vars() != n) throw ContractError("optimizer", "constraint dimension mismatch");
    }

    double violation(std::span<const double> x) const {
        double v = 0.0;
        for (const auto& c : constraints) v = std::max(v, c.value(x));
        return v;
    }
};

enum class Status { Converged, MaxIters, Infeasible };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::Converged: return "converged";
    case Status::MaxIters: return "max-iters";
    case Status::Infeasible: return "infeasible";
    }
    return "unknown";
}

struct Solution {
    std::vector<double> assignment;
    /// Objective value in the requested direction (not negated).
    double objective_value = 0.0;
    /// Probability of each query atom at the assignment, filled by the pipeline.
    std::map<std::string, double> query_probs;
    Status status = Status::Converged;
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
    double max_violation = 0.0;
    /// max(0, max_k g_k) at every accepted iterate.
    std::vector<double> violation_history;
};

class Solver {
public:
    virtual ~Solver() = default;
    virtual std::string name() const = 0;
    virtual Solution solve(const OptProblem& p, std::span<const double> start) const = 0;
};

namespace detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::span<const double> view(const VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Objective and constraint values/gradients at one point, with the
/// objective sign-adjusted so that the solver always minimizes.
struct Point {
    VectorXd x;
    double f = 0.0;
    VectorXd grad;
    VectorXd g;
    MatrixXd jac;
    double viol = 0.0;
};

class Model {
public:
    Model(const OptProblem& p, bool with_objective) : p_(p), with_objective_(with_objective) {}

    Point at(VectorXd x) const {
        const auto n = static_cast<Eigen::Index>(p_.n);
        const auto m = static_cast<Eigen::Index>(p_.constraints.size());
        Point pt;
        pt.x = std::move(x);
        pt.grad = VectorXd::Zero(n);
        if (with_objective_ && p_.objective.node_count()) {
            pt.f = p_.objective.value_and_gradient(view(pt.x), {pt.grad.data(), p_.n});
            if (p_.direction == Direction::Maximize) {
                pt.f = -pt.f;
                pt.grad = -pt.grad;
            }
        }
        pt.g.resize(m);
        pt.jac.resize(m, n);
        VectorXd row(n);
        for (Eigen::Index k = 0; k < m; ++k) {
            pt.g(k) = p_.constraints[k].value_and_gradient(view(pt.x), {row.data(), p_.n});
            pt.jac.row(k) = row;
        }
        pt.viol = m ? std::max(0.0, pt.g.maxCoeff()) : 0.0;
        return pt;
    }

    double values(const VectorXd& x, VectorXd& g) const {
        double f = 0.0;
        if (with_objective_ && p_.objective.node_count()) {
            f = p_.objective.value(view(x));
            if (p_.direction == Direction::Maximize) f = -f;
        }
        g.resize(static_cast<Eigen::Index>(p_.constraints.size()));
        for (std::size_t k = 0; k < p_.constraints.size(); ++k) g(static_cast<Eigen::Index>(k)) = p_.constraints[k].value(view(x));
        return f;
    }

    const OptProblem& problem() const { return p_; }

private:
    const OptProblem& p_;
    bool with_objective_;
};

struct Subproblem {
    VectorXd d;
    VectorXd slack;
    VectorXd lambda;
    VectorXd mu_lower;
    VectorXd mu_upper;
};

/// Elastic QP: the linearized constraints may be relaxed by nonnegative
/// slacks charged at `elastic_weight`, so the subproblem is always feasible.
inline Subproblem solve_subproblem(const Point& pt, const MatrixXd& B, const VectorXd& lo, const VectorXd& hi,
                                   double elastic_weight) {
    const Eigen::Index n = pt.x.size();
    const Eigen::Index m = pt.g.size();
    QpProblem qp;
    qp.H = MatrixXd::Zero(n + m, n + m);
    qp.H.topLeftCorner(n, n) = B;
    qp.c.resize(n + m);
    qp.c.head(n) = pt.grad;
    qp.c.tail(m).setConstant(elastic_weight);
    qp.A = MatrixXd::Zero(m, n + m);
    qp.A.leftCols(n) = pt.jac;
    qp.A.rightCols(m) = -MatrixXd::Identity(m, m);
    qp.b = -pt.g;
    qp.lower.resize(n + m);
    qp.upper.resize(n + m);
    qp.lower.head(n) = lo - pt.x;
    qp.upper.head(n) = hi - pt.x;
    qp.lower.tail(m).setZero();
    qp.upper.tail(m).setConstant(std::numeric_limits<double>::infinity());
    QpResult r = solve_qp(qp);
    Subproblem sp;
    sp.d = r.z.head(n).cwiseMax(lo - pt.x).cwiseMin(hi - pt.x);
    sp.slack = r.z.tail(m).cwiseMax(0.0);
    sp.lambda = r.lambda.cwiseMax(0.0);
    sp.mu_lower = r.mu_lower.head(n);
    sp.mu_upper = r.mu_upper.head(n);
    return sp;
}

/// Projected stationarity and complementarity at `pt` for multipliers `lambda`.
inline double kkt_residual(const Point& pt, const VectorXd& lambda, const VectorXd& lo, const VectorXd& hi) {
    VectorXd r = pt.grad;
    if (pt.g.size()) r += pt.jac.transpose() * lambda;
    double res = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        double ri = r(i);
        const double span = hi(i) - lo(i);
        if (pt.x(i) <= lo(i) + 1e-9 * span) ri = std::min(ri, 0.0);
        if (pt.x(i) >= hi(i) - 1e-9 * span) ri = std::max(ri, 0.0);
        res = std::max(res, std::abs(ri));
    }
    for (Eigen::Index k = 0; k < pt.g.size(); ++k) {
        res = std::max(res, std::abs(lambda(k) * pt.g(k)));
        res = std::max(res, std::max(0.0, pt.g(k)));
    }
    return res;
}

struct LoopResult {
    Point best;
    VectorXd lambda;
    std::size_t iterations = 0;
    enum class End { Converged, Stalled, MaxIters } end = End::Stalled;
};

/// SQP iteration shared by the optimization and restoration phases.
class SqpLoop {
public:
    SqpLoop(const Model& model, const VectorXd& lo, const VectorXd& hi, double tol, const Deadline& deadline,
            std::vector<double>& history, bool& feasible_phase)
        : model_(model), lo_(lo), hi_(hi), tol_(tol), deadline_(deadline), history_(history),
          feasible_phase_(feasible_phase) {}

    /// Runs at most `budget` iterations from `x0`. In restoration mode the
    /// objective is ignored and the loop stops once the violation is below
    /// `target`.
    LoopResult run(VectorXd x0, std::size_t budget, bool restoration, double target) {
        const Eigen::Index n = x0.size();
        const Eigen::Index m = static_cast<Eigen::Index>(model_.problem().constraints.size());
        Point cur = model_.at(std::move(x0));
        MatrixXd B = MatrixXd::Identity(n, n);
        VectorXd lambda = VectorXd::Zero(m);
        double merit_weight = 0.0;
        LoopResult out;
        out.lambda = lambda;
        record(cur.viol);

        for (std::size_t it = 0; it < budget; ++it) {
            deadline_.check("optimizer", "optimization");
            if (restoration && cur.viol < target) {
                out.end = LoopResult::End::Converged;
                break;
            }
            const double elastic = std::max(1e3, 10.0 * (m ? lambda.lpNorm<Eigen::Infinity>() : 0.0));
            Subproblem sp = solve_subproblem(cur, B, lo_, hi_, elastic);
            lambda = sp.lambda;
            out.iterations = it + 1;

            const double lin_viol_now = m ? cur.g.cwiseMax(0.0).sum() : 0.0;
            const double lin_viol_step = m ? (cur.g + cur.jac * sp.d).cwiseMax(0.0).sum() : 0.0;
            merit_weight = std::max(merit_weight, 1.5 * (m ? lambda.lpNorm<Eigen::Infinity>() : 0.0) + 1e-3);
            const double slope = cur.grad.dot(sp.d) - merit_weight * (lin_viol_now - lin_viol_step);
            if (sp.d.lpNorm<Eigen::Infinity>() < 1e-13 || slope > -1e-16) {
                out.end = LoopResult::End::Stalled;
                break;
            }

            auto merit = [&](double f, const VectorXd& g) { return f + merit_weight * g.cwiseMax(0.0).sum(); };
            const double phi = merit(cur.f, cur.g);
            std::optional<Point> accepted;
            for (double alpha = 1.0; alpha > 1e-10; alpha *= 0.5) {
                VectorXd xt = (cur.x + alpha * sp.d).cwiseMax(lo_).cwiseMin(hi_);
                VectorXd gt;
                double ft = model_.values(xt, gt);
                double vt = m ? std::max(0.0, gt.maxCoeff()) : 0.0;
                if (feasible_phase_ && vt > cur.viol) {
                    if (!correct(xt, cur.viol)) continue;
                    ft = model_.values(xt, gt);
                    vt = m ? std::max(0.0, gt.maxCoeff()) : 0.0;
                }
                if (merit(ft, gt) <= phi + 1e-4 * alpha * slope) {
                    accepted = model_.at(std::move(xt));
                    break;
                }
            }
            if (!accepted) {
                if (!B.isIdentity()) {
                    B = MatrixXd::Identity(n, n);
                    continue;
                }
                out.end = LoopResult::End::Stalled;
                break;
            }

            Point next = std::move(*accepted);
            update_hessian(B, cur, next, lambda);
            const double df = std::abs(next.f - cur.f);
            cur = std::move(next);
            record(cur.viol);
            if (restoration) continue;
            if (cur.viol <= tol_) {
                Subproblem check = solve_subproblem(cur, B, lo_, hi_, elastic);
                if (df < tol_ || kkt_residual(cur, check.lambda, lo_, hi_) < tol_) {
                    lambda = check.lambda;
                    out.end = LoopResult::End::Converged;
                    break;
                }
            }
            if (it + 1 == budget) out.end = LoopResult::End::MaxIters;
        }
        if (out.iterations >= budget && out.end == LoopResult::End::Stalled) out.end = LoopResult::End::MaxIters;
        out.best = std::move(cur);
        out.lambda = lambda;
        return out;
    }

private:
    void record(double viol) {
        history_.push_back(viol);
        if (viol <= tol_) feasible_phase_ = true;
    }

    /// Newton projection of xt onto the near-active constraints, aiming
    /// slightly inside the feasible side. Succeeds when the violation does not
    /// exceed `target`.
    bool correct(VectorXd& xt, double target) const {
        constexpr double margin = 1e-10;
        for (int round = 0; round < 6; ++round) {
            Point pt = model_.at(xt);
            if (pt.viol <= target) {
                xt = pt.x;
                return true;
            }
            std::vector<Eigen::Index> active;
            for (Eigen::Index k = 0; k < pt.g.size(); ++k)
                if (pt.g(k) > -margin) active.push_back(k);
            MatrixXd J(active.size(), pt.x.size());
            VectorXd r(active.size());
            for (std::size_t a = 0; a < active.size(); ++a) {
                J.row(static_cast<Eigen::Index>(a)) = pt.jac.row(active[a]);
                r(static_cast<Eigen::Index>(a)) = -(pt.g(active[a]) + margin);
            }
            MatrixXd JJt = J * J.transpose();
            JJt.diagonal().array() += 1e-14;
            VectorXd step = J.transpose() * JJt.ldlt().solve(r);
            xt = (pt.x + step).cwiseMax(lo_).cwiseMin(hi_);
        }
        return model_.at(xt).viol <= target;
    }

    /// Damped BFGS update of the Lagrangian Hessian approximation.
    static void update_hessian(MatrixXd& B, const Point& from, const Point& to, const VectorXd& lambda) {
        VectorXd s = to.x - from.x;
        VectorXd y = to.grad - from.grad;
        if (lambda.size()) y += (to.jac - from.jac).transpose() * lambda;
        VectorXd Bs = B * s;
        const double sBs = s.dot(Bs);
        if (sBs <= 1e-20) return;
        double sy = s.dot(y);
        if (sy < 0.2 * sBs) {
            const double theta = 0.8 * sBs / (sBs - sy);
            y = theta * y + (1.0 - theta) * Bs;
            sy = s.dot(y);
        }
        if (sy <= 1e-20) return;
        B += (y * y.transpose()) / sy - (Bs * Bs.transpose()) / sBs;
    }

    const Model& model_;
    const VectorXd& lo_;
    const VectorXd& hi_;
    double tol_;
    const Deadline& deadline_;
    std::vector<double>& history_;
    bool& feasible_phase_;
};

} // namespace detail

/// Sequential quadratic programming with elastic QP subproblems, a damped
/// BFGS Hessian, an l1 merit line search and a restoration phase for
/// infeasible iterates.
///
/// Stops when the iterate satisfies every constraint within the tolerance and
/// either the objective changed by less than the tolerance or the KKT
/// residual is below it. Once an iterate is feasible, later iterates never
/// increase the constraint violation.
class SqpSolver final : public Solver {
public:
    std::string name() const override { return "sqp"; }

    Solution solve(const OptProblem& p, std::span<const double> start) const override {
        using detail::VectorXd;
        p.validate();
        const auto n = static_cast<Eigen::Index>(p.n);
        VectorXd lo = Eigen::Map<const VectorXd>(p.lower.data(), n);
        VectorXd hi = Eigen::Map<const VectorXd>(p.upper.data(), n);
        VectorXd x0(n);
        if (start.empty()) x0 = 0.5 * (lo + hi);
        else if (start.size() != p.n) throw ContractError("optimizer", "start point has wrong dimension");
        else x0 = Eigen::Map<const VectorXd>(start.data(), n).cwiseMax(lo).cwiseMin(hi);

        Solution sol;
        const double tol = p.config.tolerance;
        detail::Model model(p, true);
        detail::Model feasibility(p, false);
        bool feasible_phase = false;

        if (p.n == 0) {
            detail::Point pt = model.at(x0);
            sol.violation_history.push_back(pt.viol);
            return finish(p, pt, VectorXd::Zero(pt.g.size()), pt.viol <= tol ? Status::Converged : Status::Infeasible,
                          0, std::move(sol), lo, hi);
        }

        std::size_t budget = p.config.max_iters;
        detail::SqpLoop loop(model, lo, hi, tol, p.config.deadline, sol.violation_history, feasible_phase);
        detail::LoopResult run = loop.run(x0, budget, false, 0.0);
        std::size_t used = run.iterations;

        if (run.best.viol > tol && used < budget) {
            detail::SqpLoop restore(feasibility, lo, hi, tol, p.config.deadline, sol.violation_history, feasible_phase);
            detail::LoopResult rest = restore.run(run.best.x, budget - used, true, p.config.restoration_tolerance);
            used += rest.iterations;
            if (rest.best.viol >= p.config.restoration_tolerance) {
                const detail::Point& most = rest.best.viol < run.best.viol ? rest.best : run.best;
                return finish(p, model.at(most.x), run.lambda, Status::Infeasible, used, std::move(sol), lo, hi);
            }
            if (used < budget) {
                run = loop.run(rest.best.x, budget - used, false, 0.0);
                used += run.iterations;
            } else {
                run.best = model.at(rest.best.x);
                run.end = detail::LoopResult::End::MaxIters;
            }
        }

        Status status;
        if (run.best.viol > tol) status = used >= budget ? Status::MaxIters : Status::Infeasible;
        else if (run.end == detail::LoopResult::End::MaxIters) status = Status::MaxIters;
        else status = Status::Converged;
        return finish(p, run.best, run.lambda, status, used, std::move(sol), lo, hi);
    }

private:
    static Solution finish(const OptProblem& p, const detail::Point& pt, const detail::VectorXd& lambda, Status status,
                           std::size_t iterations, Solution sol, const detail::VectorXd& lo,
                           const detail::VectorXd& hi) {
        sol.assignment.assign(pt.x.data(), pt.x.data() + pt.x.size());
        sol.objective_value = p.direction == Direction::Maximize ? -pt.f : pt.f;
        sol.status = status;
        sol.iterations = iterations;
        sol.max_violation = pt.viol;
        detail::VectorXd lam = lambda.size() == pt.g.size() ? lambda : detail::VectorXd::Zero(pt.g.size());
        sol.kkt_residual = detail::kkt_residual(pt, lam, lo, hi);
        return sol;
    }
};

/// Solves from the configured start point (box midpoint by default).
inline Solution solve(const OptProblem& p, const Solver& solver = SqpSolver{}) {
    return solver.solve(p, p.config.start);
}

/// True when `a` is preferable to `b`: feasible before infeasible, then
/// better objective, lower KKT residual, lexicographically smaller assignment.
inline bool better(const Solution& a, const Solution& b, Direction dir) {
    const bool fa = a.status != Status::Infeasible, fb = b.status != Status::Infeasible;
    if (fa != fb) return fa;
    if (!fa) return a.max_violation < b.max_violation;
    const double oa = dir == Direction::Maximize ? -a.objective_value : a.objective_value;
    const double ob = dir == Direction::Maximize ? -b.objective_value : b.objective_value;
    const double tie = 1e-12 * (1.0 + std::max(std::abs(oa), std::abs(ob)));
    if (std::abs(oa - ob) > tie) return oa < ob;
    if (a.kkt_residual != b.kkt_residual) return a.kkt_residual < b.kkt_residual;
    return a.assignment < b.assignment;
}

/// Runs the solver from `k` start points, the box midpoint first and then
/// seeded uniform samples of the box, and keeps the best solution.
inline Solution multistart(const OptProblem& p, std::size_t k, std::uint64_t seed, const Solver& solver = SqpSolver{}) {
    if (k == 0) throw ContractError("optimizer", "multistart needs at least one start");
    std::mt19937_64 rng(seed);
    std::optional<Solution> best;
    for (std::size_t s = 0; s < k; ++s) {
        std::vector<double> start(p.n);
        for (std::size_t i = 0; i < p.n; ++i) {
            if (s == 0) {
                start[i] = 0.5 * (p.lower[i] + p.upper[i]);
            } else {
                std::uniform_real_distribution<double> u(p.lower[i], p.upper[i]);
                start[i] = u(rng);
            }
        }
        Solution sol = solver.solve(p, start);
        if (!best || better(sol, *best, p.direction)) best = std::move(sol);
    }
    return *best;
}

/// Builds the optimizer problem from a resolved specification and the
/// query equations of its query atoms.
inline OptProblem build_problem(const ProblemSpec& spec, const std::vector<symbolic::QueryPolynomial>& query_polys,
                                const symbolic::VarSpace& space, const std::vector<double>& lower,
                                const std::vector<double>& upper) {
    if (query_polys.size() != spec.query_atoms.size())
        throw ContractError("optimizer", "one query equation per query atom is required");
    auto dense = std::make_shared<std::vector<symbolic::DensePolynomial>>();
    for (const auto& q : query_polys) dense->emplace_back(q, space);
    OptProblem p;
    p.n = space.size();
    p.direction = spec.direction;
    p.objective = CompiledExpr::compile(spec.objective, dense, p.n);
    for (const auto& c : spec.constraints) {
        p.constraints.push_back(CompiledExpr::compile(c.residual(spec.solver.strict_eps), dense, p.n));
        p.constraint_names.push_back(c.text);
    }
    p.lower = lower;
    p.upper = upper;
    p.config.tolerance = spec.solver.tolerance;
    p.config.max_iters = spec.solver.max_iters;
    return p;
}

} // namespace polp::opt
