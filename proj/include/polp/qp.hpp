#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace polp::opt {

/// Convex quadratic program
///
///     minimize    0.5 z'Hz + c'z
///     subject to  A z <= b,  lower <= z <= upper
///
/// with H positive semidefinite. Infinite bounds are ignored.
struct QpProblem {
    Eigen::MatrixXd H;
    Eigen::VectorXd c;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

struct QpResult {
    Eigen::VectorXd z;
    /// Multipliers of the rows of A (>= 0).
    Eigen::VectorXd lambda;
    /// Multipliers of the lower and upper bounds (>= 0; zero for infinite bounds).
    Eigen::VectorXd mu_lower;
    Eigen::VectorXd mu_upper;
    bool converged = false;
    int iterations = 0;
};

struct QpOptions {
    double tolerance = 1e-11;
    int max_iterations = 200;
};

namespace detail {

/// One inequality row g'z <= h of the stacked system: either a general row of
/// A or a simple bound on one coordinate.
struct BoundRow {
    Eigen::Index var;
    double sign; // +1 for z <= upper, -1 for -z <= -lower
    double rhs;
};

} // namespace detail

/// Mehrotra predictor-corrector interior-point method on the stacked
/// inequality system G z + t = h, t >= 0, with dual multipliers lambda >= 0.
inline QpResult solve_qp(const QpProblem& qp, const QpOptions& opts = {}) {
    using Eigen::Index;
    using Eigen::VectorXd;
    const Index n = qp.c.size();
    const Index m = qp.A.rows();

    std::vector<detail::BoundRow> bounds;
    for (Index j = 0; j < n; ++j) {
        if (std::isfinite(qp.upper(j))) bounds.push_back({j, 1.0, qp.upper(j)});
        if (std::isfinite(qp.lower(j))) bounds.push_back({j, -1.0, -qp.lower(j)});
    }
    const Index nb = static_cast<Index>(bounds.size());
    const Index p = m + nb;

    auto g_times = [&](const VectorXd& z) {
        VectorXd r(p);
        if (m) r.head(m) = qp.A * z;
        for (Index k = 0; k < nb; ++k) r(m + k) = bounds[k].sign * z(bounds[k].var);
        return r;
    };
    auto gt_times = [&](const VectorXd& y) {
        VectorXd r = VectorXd::Zero(n);
        if (m) r += qp.A.transpose() * y.head(m);
        for (Index k = 0; k < nb; ++k) r(bounds[k].var) += bounds[k].sign * y(m + k);
        return r;
    };
    VectorXd h(p);
    if (m) h.head(m) = qp.b;
    for (Index k = 0; k < nb; ++k) h(m + k) = bounds[k].rhs;

    // Start from the box centre (or the bound, or zero), then shift slacks
    // and duals by one affine-scaling step so that they match the scale of
    // the data.
    VectorXd z = VectorXd::Zero(n);
    for (Index j = 0; j < n; ++j) {
        bool lo = std::isfinite(qp.lower(j)), hi = std::isfinite(qp.upper(j));
        if (lo && hi) z(j) = 0.5 * (qp.lower(j) + qp.upper(j));
        else if (lo) z(j) = std::max(0.0, qp.lower(j) + 1.0);
        else if (hi) z(j) = std::min(0.0, qp.upper(j) - 1.0);
    }
    VectorXd t = (h - g_times(z)).cwiseMax(1.0);
    VectorXd lam = VectorXd::Ones(p);

    QpResult res;
    const double scale_c = 1.0 + qp.c.lpNorm<Eigen::Infinity>();
    const double scale_h = 1.0 + (p ? h.lpNorm<Eigen::Infinity>() : 0.0);

    auto max_step = [](const VectorXd& v, const VectorXd& dv) {
        double a = 1.0;
        for (Index i = 0; i < v.size(); ++i)
            if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
        return a;
    };

    const double reg = 1e-13 * (1.0 + (n ? qp.H.cwiseAbs().maxCoeff() : 0.0));
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    VectorXd rd, rp;
    auto linearize = [&] {
        rd = qp.H * z + qp.c + gt_times(lam);
        rp = g_times(z) + t - h;
        VectorXd w = lam.cwiseQuotient(t);
        Eigen::MatrixXd M = qp.H;
        if (m) M += qp.A.transpose() * w.head(m).asDiagonal() * qp.A;
        for (Index k = 0; k < nb; ++k) M(bounds[k].var, bounds[k].var) += w(m + k);
        // Tiny regularization keeps the factorization defined when H is singular
        // on coordinates without finite bounds.
        M.diagonal().array() += reg;
        ldlt.compute(M);
    };
    auto direction = [&](const VectorXd& rc, VectorXd& dz, VectorXd& dt, VectorXd& dl) {
        VectorXd tmp = (rc + lam.cwiseProduct(rp)).cwiseQuotient(t);
        dz = ldlt.solve(-rd - gt_times(tmp));
        dt = -rp - g_times(dz);
        dl = (rc - lam.cwiseProduct(dt)).cwiseQuotient(t);
    };

    VectorXd dz, dt, dl;
    if (p) {
        linearize();
        direction(-t.cwiseProduct(lam), dz, dt, dl);
        z += dz;
        t = (t + dt).cwiseAbs().cwiseMax(1.0);
        lam = (lam + dl).cwiseAbs().cwiseMax(1.0);
    }

    for (int it = 0; it < opts.max_iterations; ++it) {
        res.iterations = it;
        linearize();
        double mu = p ? t.dot(lam) / static_cast<double>(p) : 0.0;
        if (rd.lpNorm<Eigen::Infinity>() <= opts.tolerance * scale_c &&
            (p == 0 || rp.lpNorm<Eigen::Infinity>() <= opts.tolerance * scale_h) && mu <= opts.tolerance) {
            res.converged = true;
            break;
        }

        direction(-t.cwiseProduct(lam), dz, dt, dl);
        double a_aff = std::min(max_step(t, dt), max_step(lam, dl));
        double mu_aff = p ? (t + a_aff * dt).dot(lam + a_aff * dl) / static_cast<double>(p) : 0.0;
        double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;

        VectorXd rc = VectorXd::Constant(p, sigma * mu) - t.cwiseProduct(lam) - dt.cwiseProduct(dl);
        direction(rc, dz, dt, dl);
        double eta = std::max(0.9, 1.0 - mu);
        double a = std::min(1.0, eta * std::min(max_step(t, dt), max_step(lam, dl)));
        if (!dz.allFinite() || !dt.allFinite() || !dl.allFinite() || a <= 0.0) break;
        z += a * dz;
        t += a * dt;
        lam += a * dl;
        res.iterations = it + 1;
    }

    res.z = z;
    res.lambda = m ? VectorXd(lam.head(m)) : VectorXd();
    res.mu_lower = VectorXd::Zero(n);
    res.mu_upper = VectorXd::Zero(n);
    for (Index k = 0; k < nb; ++k) {
        if (bounds[k].sign > 0) res.mu_upper(bounds[k].var) = lam(m + k);
        else res.mu_lower(bounds[k].var) = lam(m + k);
    }
    return res;
}

} // namespace polp::opt
