// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-check suites run by `fsnet check`: gradient checks, the linear rate of
// gradient descent on equality-only violation functions, the geometric decay
// of the truncated-unrolling Jacobian error, and an end-to-end gradient check.

#pragma once

#include "fsnet/autodiff.hpp"
#include "fsnet/fs.hpp"
#include "fsnet/net.hpp"
#include "fsnet/problems.hpp"
#include "fsnet/seed.hpp"
#include "fsnet/training.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace fsnet::checks {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
};

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
}

/// Central finite-difference Hessian of phi built from its analytic gradient.
inline Eigen::MatrixXd violation_hessian(const ProblemFamily& fam, const Eigen::VectorXd& s, const Eigen::VectorXd& x,
                                         double step = 1e-6) {
    Eigen::MatrixXd H(s.size(), s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) {
        Eigen::VectorXd plus = s, minus = s;
        plus[j] += step;
        minus[j] -= step;
        H.col(j) = (violation_gradient(fam, plus, x) - violation_gradient(fam, minus, x)) / (2.0 * step);
    }
    return 0.5 * (H + H.transpose());
}

/// Backward pass through phi of convex QCQP, SOCP and QP families against
/// central differences.
inline CheckResult gradient_check(std::uint64_t seed) {
    CheckResult r{"grad-check", false, 0.0, 1e-6, ""};
    std::mt19937_64 rng(derive_seed(seed, "grad-check"));
    for (ProblemKind kind : {ProblemKind::qp, ProblemKind::qcqp, ProblemKind::socp}) {
        const ProblemFamily fam = generate_family(kind, ProblemVariant::convex, 6, 3, 3, derive_seed(seed, "family"));
        const Instance inst = sample_instance(fam, derive_seed(seed, "instance"));
        for (int trial = 0; trial < 5; ++trial) {
            const Eigen::VectorXd y = inst.interior + random_vector(rng, fam.n, 2.0);
            const auto g = constraints(fam, y, inst.x).second;
            if ((g.array().abs() < 1e-4).any()) continue;  // too close to a kink
            const double err = ad::grad_check(
                [&](ad::Tape& t, ad::NodeId v) { return violation(fam, t, v, inst.x); }, y);
            r.measured = std::max(r.measured, err);
        }
    }
    r.passed = r.measured <= r.threshold;
    r.detail = "max relative error of d phi / dy";
    return r;
}

/// Gradient descent with eta = 1 / L on equality-only phi must satisfy
/// phi(s_k) <= gamma^k phi(s_0) for every k.
inline CheckResult pl_rate_check(std::uint64_t seed, int instances = 50, int iterations = 200) {
    CheckResult r{"pl-rate", false, 0.0, 1e-9, ""};
    std::mt19937_64 rng(derive_seed(seed, "pl-rate"));
    double worst = -1.0;
    for (int i = 0; i < instances; ++i) {
        const auto fseed = derive_seed(seed, "pl-family", static_cast<std::uint64_t>(i));
        const ProblemFamily fam = equality_only(generate_family(ProblemKind::qp, ProblemVariant::convex, 10, 5, 3, fseed));
        const Instance inst = sample_instance(fam, derive_seed(fseed, "instance"));
        const PLConstants pl = pl_constants(fam);
        FSConfig cfg;
        cfg.method = FsMethod::gd;
        cfg.step_size = 1.0 / pl.L;
        cfg.max_iters = iterations;
        cfg.tracked_iters = 0;
        cfg.tol_phi = 1e-300;
        cfg.tol_grad = 1e-300;
        const FSResult res = fs_gd(fam, inst.x, inst.interior + random_vector(rng, fam.n, 3.0), cfg);
        const double phi0 = res.trajectory.front();
        // phi cannot be resolved below the rounding error of A s - x
        const double resid_floor = 4.0 * fam.n * std::numeric_limits<double>::epsilon() *
                                   (fam.A.norm() * inst.interior.norm() + inst.x.norm() + 1.0);
        const double floor = fam.w_eq * resid_floor * resid_floor;
        for (std::size_t k = 0; k < res.trajectory.size(); ++k) {
            const double bound = std::pow(pl.gamma, static_cast<double>(k)) * phi0;
            if (res.trajectory[k] <= floor) continue;
            worst = std::max(worst, (res.trajectory[k] - bound) / bound);
        }
    }
    r.measured = worst;
    r.passed = worst <= r.threshold;
    r.detail = "max (phi_k - gamma^k phi_0) / (gamma^k phi_0)";
    return r;
}

struct TruncationSetup {
    ProblemFamily fam;
    Eigen::VectorXd x;
    Eigen::VectorXd y0;
    double eta = 0.0;
    double delta = 0.0;  // 1 - eta mu' with mu' the smallest Hessian eigenvalue at s_K
};

/// Smoothed (softplus) QP violation with a square well-conditioned A, so phi
/// is strongly convex and twice differentiable.
inline TruncationSetup truncation_setup(std::uint64_t seed, int K) {
    TruncationSetup s;
    const int n = 6;
    s.fam = generate_family(ProblemKind::qp, ProblemVariant::convex, n, n, 4, derive_seed(seed, "trunc-family"));
    std::mt19937_64 rng(derive_seed(seed, "trunc"));
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(s.fam.A);
    Eigen::MatrixXd orth = qr.householderQ();
    Eigen::VectorXd scales = Eigen::VectorXd::LinSpaced(n, 0.6, 1.0);
    s.fam.A = scales.asDiagonal() * orth.transpose();
    s.fam.w_eq = 1.0;
    s.fam.w_ineq = 1.0;
    s.fam.softplus_beta = ad::kDefaultSoftplusBeta;
    const Instance inst = sample_instance(s.fam, derive_seed(seed, "trunc-instance"));
    s.x = inst.x;
    s.y0 = inst.interior + random_vector(rng, n, 1.0);

    // eta = 1 / (largest Hessian eigenvalue seen along a conservative run)
    double L = 0.0;
    Eigen::VectorXd p = s.y0;
    const double eta0 = 0.5 / (2.0 * (s.fam.A.transpose() * s.fam.A).eigenvalues().real().maxCoeff() + 1.0);
    for (int k = 0; k <= 4 * K; ++k) {
        L = std::max(L, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(violation_hessian(s.fam, p, s.x)).eigenvalues().maxCoeff());
        p -= eta0 * violation_gradient(s.fam, p, s.x);
    }
    s.eta = 1.0 / L;

    FSConfig cfg;
    cfg.method = FsMethod::gd;
    cfg.step_size = s.eta;
    cfg.max_iters = K;
    cfg.tracked_iters = 0;
    cfg.tol_phi = 1e-300;
    cfg.tol_grad = 1e-300;
    const Eigen::VectorXd sK = fs_gd(s.fam, s.x, s.y0, cfg).point;
    const double mu = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(violation_hessian(s.fam, sK, s.x)).eigenvalues().minCoeff();
    s.delta = 1.0 - s.eta * mu;
    return s;
}

/// d s_K / d s_0 with only the first `tracked` iterations differentiated,
/// built column by column from unit-seed backward passes.
inline Eigen::MatrixXd unrolled_jacobian(const ProblemFamily& fam, const Eigen::VectorXd& x, const Eigen::VectorXd& y0,
                                         const FSConfig& base, int tracked) {
    FSConfig cfg = base;
    cfg.tracked_iters = tracked;
    ad::Tape tape;
    const ad::NodeId s0 = tape.leaf(y0);
    const ad::NodeId out = unroll_fs(fam, x, s0, cfg, tape).point;
    Eigen::MatrixXd J(y0.size(), y0.size());
    for (Eigen::Index i = 0; i < y0.size(); ++i) {
        const Eigen::VectorXd seed = Eigen::VectorXd::Unit(y0.size(), i);
        J.row(i) = tape.backward(out, seed).wrt(s0).transpose();
    }
    return J;
}

/// Least-squares slope of log ||J_full - J_trunc(K')|| against K'.
inline CheckResult truncation_bias_check(std::uint64_t seed) {
    CheckResult r{"truncation-bias", false, 0.0, 0.0, ""};
    const int K = 30;
    const TruncationSetup s = truncation_setup(seed, K);
    FSConfig cfg;
    cfg.method = FsMethod::gd;
    cfg.step_size = s.eta;
    cfg.max_iters = K;
    cfg.tol_phi = 1e-300;
    cfg.tol_grad = 1e-300;
    const Eigen::MatrixXd full = unrolled_jacobian(s.fam, s.x, s.y0, cfg, K);
    std::vector<double> ks, logs;
    for (int kp : {5, 10, 15, 20, 25}) {
        const Eigen::MatrixXd trunc = unrolled_jacobian(s.fam, s.x, s.y0, cfg, kp);
        const double err = Eigen::JacobiSVD<Eigen::MatrixXd>(full - trunc).singularValues()[0];
        ks.push_back(kp);
        logs.push_back(std::log(err));
    }
    const double kbar = std::accumulate(ks.begin(), ks.end(), 0.0) / static_cast<double>(ks.size());
    const double lbar = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(logs.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        num += (ks[i] - kbar) * (logs[i] - lbar);
        den += (ks[i] - kbar) * (ks[i] - kbar);
    }
    r.measured = num / den;
    r.threshold = std::log(s.delta) + 0.05;
    r.passed = r.measured <= r.threshold;
    r.detail = "slope of log Jacobian error vs K'; threshold log(delta) + 0.05, delta = " + std::to_string(s.delta);
    return r;
}

/// Gradient of the mean training loss with respect to the network
/// parameters, through forward, unroll (K' = K = 10) and the loss, against
/// central differences.
inline CheckResult pipeline_gradient_check(std::uint64_t seed, int points = 3) {
    CheckResult r{"pipeline-gradient", false, 0.0, 1e-4, ""};
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, derive_seed(seed, "pipe"));
    std::vector<Instance> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(sample_instance(fam, derive_seed(seed, "pipe-instance", i)));
    TrainConfig cfg;
    cfg.hidden = {6};
    cfg.fs.method = FsMethod::gd;
    cfg.fs.step_size = 0.01;
    cfg.fs.max_iters = 10;
    cfg.fs.tracked_iters = 10;
    cfg.fs.tol_phi = 1e-300;
    cfg.fs.tol_grad = 1e-300;
    for (int pt = 0; pt < points; ++pt) {
        ModelParams model = init_mlp(fam.n_eq, cfg.hidden, fam.n, derive_seed(seed, "pipe-init", pt));
        auto loss_at = [&](const Eigen::VectorXd& theta) {
            ModelParams m = model;
            m.values = theta;
            ad::Tape tape;
            return tape.scalar(batch_loss(fam, batch, m, cfg, tape));
        };
        ad::Tape tape;
        const ad::NodeId params = bind_params(model, tape);
        const ad::NodeId loss = batch_loss(fam, batch, model, params, cfg, tape, cfg.penalty_eq, cfg.penalty_ineq);
        const Eigen::VectorXd g_ad = tape.backward(loss).wrt(params);
        Eigen::VectorXd g_fd(g_ad.size());
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < g_ad.size(); ++i) {
            Eigen::VectorXd plus = model.values, minus = model.values;
            plus[i] += h;
            minus[i] -= h;
            g_fd[i] = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
        }
        const double scale = std::max({g_ad.cwiseAbs().maxCoeff(), g_fd.cwiseAbs().maxCoeff(), 1e-8});
        r.measured = std::max(r.measured, (g_ad - g_fd).cwiseAbs().maxCoeff() / scale);
    }
    r.passed = r.measured <= r.threshold;
    r.detail = "max relative error of d loss / d theta";
    return r;
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
    return {gradient_check(seed), pl_rate_check(seed), truncation_bias_check(seed), pipeline_gradient_check(seed)};
}

}  // namespace fsnet::checks
