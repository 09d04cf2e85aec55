// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Hand-built problem families for tests.

#pragma once

#include "fsnet/problems.hpp"

#include <Eigen/Dense>

namespace fsnet::testing {

/// Convex QP with explicit data and box [lo, hi]^n.
inline ProblemFamily toy_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& p, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& G, const Eigen::VectorXd& h, double lo = -5.0, double hi = 5.0,
                            double w = 10.0) {
    ProblemFamily fam;
    fam.kind = ProblemKind::qp;
    fam.variant = ProblemVariant::convex;
    fam.n = static_cast<int>(Q.rows());
    fam.n_eq = static_cast<int>(A.rows());
    fam.n_ineq = static_cast<int>(G.rows());
    fam.Q = Q;
    fam.p = p;
    fam.A = A;
    fam.ineq = QpData{G, h};
    fam.lower = Eigen::VectorXd::Constant(fam.n, lo);
    fam.upper = Eigen::VectorXd::Constant(fam.n, hi);
    fam.w_eq = w;
    fam.w_ineq = w;
    return fam;
}

/// Scalar family with h = y - x and a single slack inequality.
inline ProblemFamily scalar_family(double w = 1.0) {
    return toy_qp(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                  Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1), -100.0, 100.0, w);
}

}  // namespace fsnet::testing
