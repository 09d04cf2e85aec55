// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference solutions: an augmented-Lagrangian local solver with L-BFGS inner
// solves for every family, and an exhaustive grid search for n <= 3.

#pragma once

#include "fsnet/fs.hpp"
#include "fsnet/problems.hpp"
#include "fsnet/seed.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace fsnet {

struct OracleResult {
    Eigen::VectorXd y_star;
    double f_star = 0.0;
    double kkt_residual = 0.0;
    double eq_violation = 0.0;    // ||h||_1
    double ineq_violation = 0.0;  // ||g+||_1
    bool converged = false;
    int outer_iterations = 0;
};

struct AugLagOptions {
    double tol = 1e-8;             // L1 equality / inequality violation
    double kkt_tol = 1e-6;         // stationarity and complementarity
    int max_outer = 60;
    double mu0 = 10.0;
    double mu_growth = 10.0;
    double mu_max = 1e8;
    int inner_max_iters = 2000;
    int inner_memory = 20;
    /// Additional random starts in the box; the best converged result wins.
    int extra_starts = 0;
    std::uint64_t seed = 0;
};

namespace detail {

struct AugLagObjective {
    const ProblemFamily* fam;
    const Eigen::VectorXd* x;
    const Eigen::VectorXd* lam;
    const Eigen::VectorXd* nu;
    double mu;

    // f + lam^T h + mu/2 ||h||^2 + (||max(nu + mu g, 0)||^2 - ||nu||^2) / (2 mu)
    double value(const Eigen::VectorXd& y) const {
        auto [h, g] = constraints(*fam, y, *x);
        const Eigen::VectorXd shifted = (*nu + mu * g).cwiseMax(0.0);
        return objective(*fam, y) + lam->dot(h) + 0.5 * mu * h.squaredNorm() +
               (shifted.squaredNorm() - nu->squaredNorm()) / (2.0 * mu);
    }
    template <class B>
    Eigen::VectorXd gradient(B&, const Eigen::VectorXd& y) const {
        auto [h, g] = constraints(*fam, y, *x);
        const Eigen::VectorXd shifted = (*nu + mu * g).cwiseMax(0.0);
        return objective_gradient(*fam, y) + fam->A.transpose() * (*lam + mu * h) + inequality_vjp(*fam, y, shifted);
    }
};

/// Max of stationarity, feasibility and complementarity. Stationarity and
/// complementarity are divided by max(1, ||grad f||_inf) so the tolerance
/// does not fall below roundoff on problems with large objective values.
inline double kkt_residual(const ProblemFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& lam, const Eigen::VectorXd& nu) {
    auto [h, g] = constraints(fam, y, x);
    const Eigen::VectorXd grad_f = objective_gradient(fam, y);
    const double scale = std::max(1.0, grad_f.lpNorm<Eigen::Infinity>());
    const Eigen::VectorXd stationarity = grad_f + fam.A.transpose() * lam + inequality_vjp(fam, y, nu);
    double r = stationarity.lpNorm<Eigen::Infinity>() / scale;
    r = std::max(r, h.lpNorm<Eigen::Infinity>());
    if (g.size()) {
        r = std::max(r, g.cwiseMax(0.0).maxCoeff());
        r = std::max(r, nu.cwiseProduct(g).cwiseAbs().maxCoeff() / scale);
    }
    return r;
}

inline OracleResult aug_lagrangian_from(const ProblemFamily& fam, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& start, const AugLagOptions& opt) {
    Eigen::VectorXd y = start;
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(fam.n_eq);
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(fam.inequality_rows());
    double mu = opt.mu0;
    double prev_measure = std::numeric_limits<double>::infinity();

    FSConfig inner;
    inner.method = FsMethod::lbfgs;
    inner.memory = opt.inner_memory;
    inner.max_iters = opt.inner_max_iters;
    inner.stop_on_value = false;
    inner.max_backtracks = 60;

    OracleResult res;
    double inner_tol = 1e-2;
    for (int k = 0; k < opt.max_outer; ++k) {
        res.outer_iterations = k + 1;
        const double scale = std::max(1.0, objective_gradient(fam, y).lpNorm<Eigen::Infinity>());
        inner.tol_grad = inner_tol * scale;
        inner_tol = std::max(0.1 * inner_tol, 0.5 * opt.kkt_tol);
        y = minimize(AugLagObjective{&fam, &x, &lam, &nu, mu}, y, inner).point;

        auto [h, g] = constraints(fam, y, x);
        double measure = h.lpNorm<Eigen::Infinity>();
        if (g.size()) measure = std::max(measure, g.cwiseMax(-nu / mu).lpNorm<Eigen::Infinity>());
        lam += mu * h;
        if (g.size()) nu = (nu + mu * g).cwiseMax(0.0);

        res.eq_violation = h.lpNorm<1>();
        res.ineq_violation = g.size() ? g.cwiseMax(0.0).sum() : 0.0;
        res.kkt_residual = kkt_residual(fam, y, x, lam, nu);
        if (res.eq_violation <= opt.tol && res.ineq_violation <= opt.tol && res.kkt_residual <= opt.kkt_tol) {
            res.converged = true;
            break;
        }
        if (measure > opt.tol && measure > 0.25 * prev_measure) mu = std::min(opt.mu_max, mu * opt.mu_growth);
        prev_measure = measure;
    }
    res.y_star = y;
    res.f_star = objective(fam, y);
    return res;
}

}  // namespace detail

/// Local solve from the instance's feasible point (plus optional random
/// restarts). Non-convergence is reported through `converged`, not thrown.
inline OracleResult aug_lagrangian_solve(const ProblemFamily& fam, const Instance& inst,
                                         const AugLagOptions& opt = {}) {
    require_dims(fam, inst.interior, inst.x);
    OracleResult best = detail::aug_lagrangian_from(fam, inst.x, inst.interior, opt);
    std::mt19937_64 rng(derive_seed(opt.seed ^ inst.seed, "oracle-restart"));
    for (int r = 0; r < opt.extra_starts; ++r) {
        Eigen::VectorXd start(fam.n);
        for (int i = 0; i < fam.n; ++i) start[i] = std::uniform_real_distribution<double>(fam.lower[i], fam.upper[i])(rng);
        OracleResult cand = detail::aug_lagrangian_from(fam, inst.x, start, opt);
        const bool better = (cand.converged && !best.converged) ||
                            (cand.converged == best.converged && cand.f_star < best.f_star);
        if (better) best = std::move(cand);
    }
    return best;
}

/// Overload taking an explicit start point.
inline OracleResult aug_lagrangian_solve(const ProblemFamily& fam, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& start, const AugLagOptions& opt = {}) {
    require_dims(fam, start, x);
    return detail::aug_lagrangian_from(fam, x, start, opt);
}

/// Enumerates a resolution^n grid over the box, moves each point onto
/// {A y = x} by the minimal-norm correction, keeps near-feasible points and
/// refines the best one with projected gradient steps that never increase the
/// inequality violation.
inline OracleResult grid_oracle(const ProblemFamily& fam, const Eigen::VectorXd& x, int resolution) {
    if (fam.n > 3) throw std::invalid_argument("grid_oracle: n must be <= 3");
    if (resolution < 2 || resolution > 400) throw std::invalid_argument("grid_oracle: resolution must be in [2, 400]");
    if (x.size() != fam.n_eq) throw std::invalid_argument("grid_oracle: parameter dimension mismatch");

    const Eigen::MatrixXd pinv = fam.n_eq == 0 ? Eigen::MatrixXd::Zero(fam.n, 0)
                                               : Eigen::MatrixXd(fam.A.transpose() * (fam.A * fam.A.transpose()).inverse());
    auto project = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return y - pinv * (fam.A * y - x); };
    auto max_violation = [&](const Eigen::VectorXd& y) {
        auto [h, g] = constraints(fam, y, x);
        return g.size() ? std::max(0.0, g.maxCoeff()) : 0.0;
    };

    constexpr double keep_tol = 1e-2;
    Eigen::VectorXd best;
    double best_f = std::numeric_limits<double>::infinity();
    double best_viol = std::numeric_limits<double>::infinity();
    std::vector<int> idx(static_cast<std::size_t>(fam.n), 0);
    Eigen::VectorXd y(fam.n);
    while (true) {
        for (int i = 0; i < fam.n; ++i)
            y[i] = fam.lower[i] + (fam.upper[i] - fam.lower[i]) * idx[static_cast<std::size_t>(i)] / (resolution - 1);
        const Eigen::VectorXd yp = project(y);
        const double v = max_violation(yp);
        if (v <= keep_tol) {
            const double f = objective(fam, yp);
            // prefer exactly feasible points, then lower objective
            const bool better = (v == 0.0 && best_viol > 0.0) || ((v == 0.0) == (best_viol == 0.0) && f < best_f);
            if (better) {
                best = yp;
                best_f = f;
                best_viol = v;
            }
        }
        int d = 0;
        while (d < fam.n && ++idx[static_cast<std::size_t>(d)] == resolution) idx[static_cast<std::size_t>(d++)] = 0;
        if (d == fam.n) break;
    }
    if (!std::isfinite(best_f)) throw std::runtime_error("grid_oracle: no near-feasible grid point found");

    // Projected gradient refinement restricted to {A y = x}.
    const Eigen::MatrixXd null_proj = Eigen::MatrixXd::Identity(fam.n, fam.n) - pinv * fam.A;
    double step = 1.0;
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd dir = null_proj * objective_gradient(fam, best);
        bool moved = false;
        for (double t = step; t > 1e-12; t *= 0.5) {
            const Eigen::VectorXd cand = project(best - t * dir);
            const double f = objective(fam, cand);
            if (f < best_f && max_violation(cand) <= best_viol) {
                best = cand;
                best_f = f;
                step = 2.0 * t;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }

    OracleResult res;
    res.y_star = best;
    res.f_star = best_f;
    const auto v = violation_l1(fam, best, x);
    res.eq_violation = v.eq;
    res.ineq_violation = v.ineq;
    res.kkt_residual = (null_proj * objective_gradient(fam, best)).lpNorm<Eigen::Infinity>();
    res.converged = true;
    return res;
}

/// (f_hat - f_star) / |f_star|; the plain difference when f_star == 0 (see
/// gap_is_relative).
inline double optimality_gap(double f_hat, double f_star) {
    if (f_star == 0.0) return f_hat - f_star;
    return (f_hat - f_star) / std::abs(f_star);
}
inline bool gap_is_relative(double f_star) { return f_star != 0.0; }

}  // namespace fsnet
