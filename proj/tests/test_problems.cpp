// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include "fsnet/io.hpp"
#include "fsnet/problems.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

namespace {

using namespace fsnet;
using fsnet::testing::scalar_family;
using fsnet::testing::toy_qp;

const ProblemKind kKinds[] = {ProblemKind::qp, ProblemKind::qcqp, ProblemKind::socp};
const ProblemVariant kVariants[] = {ProblemVariant::convex, ProblemVariant::nonconvex, ProblemVariant::nonsmooth};

Eigen::VectorXd random_vec(std::mt19937_64& rng, Eigen::Index n, double sd) {
    std::normal_distribution<double> nd(0.0, sd);
    Eigen::VectorXd out(n);
    for (auto& x : out) x = nd(rng);
    return out;
}

// Independent evaluation of the inequality rows, box rows last.
Eigen::VectorXd reference_g(const ProblemFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
    const bool convex = fam.variant == ProblemVariant::convex;
    Eigen::VectorXd core(fam.n_ineq);
    for (int i = 0; i < fam.n_ineq; ++i) {
        if (const auto* q = std::get_if<QpData>(&fam.ineq)) {
            if (convex) {
                core[i] = q->G.row(i).dot(y) - q->h[i];
            } else {
                double s = 0.0;
                for (int j = 0; j < fam.n; ++j) s += q->G(i, j) * std::sin(y[j]);
                core[i] = s - q->h[i] * std::cos(x[i % x.size()]);
            }
        } else if (const auto* c = std::get_if<QcqpData>(&fam.ineq)) {
            const Eigen::MatrixXd H = c->H.block(static_cast<Eigen::Index>(i) * fam.n, 0, fam.n, fam.n);
            const Eigen::VectorXd lin = convex ? y : Eigen::VectorXd(y.array().cos());
            core[i] = y.dot(H * y) + c->g.row(i).dot(lin) - c->h[i];
        } else {
            const auto& s = std::get<SocpData>(fam.ineq);
            const Eigen::VectorXd z = convex ? y : Eigen::VectorXd(y.array().cos());
            const Eigen::MatrixXd Gi = s.G.middleRows(static_cast<Eigen::Index>(i) * s.rows, s.rows);
            const Eigen::VectorXd hi = s.h.segment(static_cast<Eigen::Index>(i) * s.rows, s.rows);
            core[i] = (Gi * z + hi).norm() - s.c.row(i).dot(y) - s.d[i];
        }
    }
    Eigen::VectorXd g(fam.n_ineq + 2 * fam.n);
    g << core, fam.lower - y, y - fam.upper;
    return g;
}

TEST(GenerateFamily, FullRankEqualities) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 10, 5, 5, 7);
    EXPECT_EQ(fam.A.rows(), 5);
    EXPECT_EQ(fam.A.cols(), 10);
    EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(fam.A).rank(), 5);
}

TEST(GenerateFamily, DeterministicPerSeed) {
    for (ProblemKind k : kKinds) {
        const ProblemFamily a = generate_family(k, ProblemVariant::convex, 8, 3, 4, 5);
        const ProblemFamily b = generate_family(k, ProblemVariant::convex, 8, 3, 4, 5);
        EXPECT_EQ(a.Q, b.Q);
        EXPECT_EQ(a.A, b.A);
        EXPECT_EQ(a.p, b.p);
        const Instance ia = sample_instance(a, 3), ib = sample_instance(b, 3);
        EXPECT_EQ(ia.x, ib.x);
    }
}

TEST(GenerateFamily, SpdMatricesAndBounds) {
    for (ProblemKind k : kKinds) {
        const ProblemFamily fam = generate_family(k, ProblemVariant::convex, 10, 5, 5, 21);
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fam.Q).eigenvalues().minCoeff(), 0.0);
        EXPECT_TRUE((fam.lower.array() == -5.0).all());
        EXPECT_TRUE((fam.upper.array() == 5.0).all());
        if (const auto* q = std::get_if<QcqpData>(&fam.ineq)) {
            for (int i = 0; i < fam.n_ineq; ++i) {
                EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q->H.block(i * 10, 0, 10, 10))
                              .eigenvalues()
                              .minCoeff(),
                          0.0);
            }
        }
        if (const auto* s = std::get_if<SocpData>(&fam.ineq)) {
            EXPECT_EQ(s->rows, 10);
        }
    }
}

TEST(GenerateFamily, RejectsInfeasibleDimensions) {
    EXPECT_THROW(generate_family(ProblemKind::qp, ProblemVariant::convex, 3, 5, 2, 1), std::invalid_argument);
    EXPECT_THROW(generate_family(ProblemKind::qp, ProblemVariant::convex, 0, 0, 2, 1), std::invalid_argument);
}

TEST(SampleInstance, FeasibleByConstruction) {
    for (ProblemKind k : kKinds)
        for (ProblemVariant v : kVariants) {
            const ProblemFamily fam = generate_family(k, v, 12, 6, 6, 13);
            for (std::uint64_t s = 0; s < 10; ++s) {
                const Instance inst = sample_instance(fam, s);
                EXPECT_TRUE(instance_is_valid(fam, inst));
                EXPECT_LE(violation(fam, inst.interior, inst.x), 1e-16);
                EXPECT_EQ(fam.A * inst.interior - inst.x, Eigen::VectorXd::Zero(6));
                const auto [h, g] = constraints(fam, inst.interior, inst.x);
                EXPECT_LT(g.maxCoeff(), -1e-3);
            }
        }
}

TEST(SampleInstance, DistinctSeedsGiveDistinctParameters) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 10, 5, 5, 1);
    EXPECT_NE(sample_instance(fam, 1).x, sample_instance(fam, 2).x);
}

TEST(Objective, Examples) {
    ProblemFamily fam = toy_qp(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Ones(1, 2),
                               Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Ones(1));
    EXPECT_DOUBLE_EQ(objective(fam, Eigen::Vector2d(1, 1)), 1.0);

    fam.variant = ProblemVariant::nonconvex;
    fam.p = Eigen::Vector2d(0.3, -2.0);
    EXPECT_DOUBLE_EQ(objective(fam, Eigen::Vector2d(0, 0)), 0.0);

    fam.variant = ProblemVariant::nonsmooth;
    fam.Q.setZero();
    fam.p.setZero();
    fam.lambda = 1.0;
    EXPECT_DOUBLE_EQ(objective(fam, Eigen::Vector2d(3, 4)), 5.0);
}

TEST(Objective, GradientMatchesTape) {
    std::mt19937_64 rng(4);
    for (ProblemVariant v : kVariants) {
        const ProblemFamily fam = generate_family(ProblemKind::qp, v, 6, 3, 3, 2);
        const Eigen::VectorXd y = random_vec(rng, 6, 1.0);
        const double err = ad::grad_check([&](ad::Tape& t, ad::NodeId n) { return objective(fam, t, n); }, y);
        EXPECT_LE(err, 1e-6);
        ad::Tape t;
        const ad::NodeId n = t.leaf(y);
        EXPECT_LE((t.backward(objective(fam, t, n)).wrt(n) - objective_gradient(fam, y)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Constraints, InteriorPointAndBoxRows) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 3);
    const Instance inst = sample_instance(fam, 1);
    const auto [h, g] = constraints(fam, inst.interior, inst.x);
    EXPECT_EQ(h, Eigen::VectorXd::Zero(2));
    EXPECT_TRUE((g.array() < 0.0).all());
    EXPECT_EQ(g.size(), 2 + 2 * 4);

    const Eigen::VectorXd y = fam.upper.array() + 1.0;
    const auto [h2, g2] = constraints(fam, y, inst.x);
    EXPECT_TRUE(g2.tail(4).isApprox(Eigen::VectorXd::Ones(4)));
}

TEST(Constraints, MatchIndependentEvaluation) {
    std::mt19937_64 rng(9);
    for (ProblemKind k : kKinds)
        for (ProblemVariant v : kVariants) {
            const ProblemFamily fam = generate_family(k, v, 7, 3, 4, 17);
            const Instance inst = sample_instance(fam, 2);
            for (int trial = 0; trial < 5; ++trial) {
                const Eigen::VectorXd y = random_vec(rng, 7, 2.0);
                const auto [h, g] = constraints(fam, y, inst.x);
                EXPECT_LE((h - (fam.A * y - inst.x)).cwiseAbs().maxCoeff(), 1e-13);
                EXPECT_LE((g - reference_g(fam, y, inst.x)).cwiseAbs().maxCoeff(), 1e-12);
            }
        }
}

TEST(Constraints, DimensionMismatchThrows) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 3);
    EXPECT_THROW(constraints(fam, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2)), std::invalid_argument);
    EXPECT_THROW(objective(fam, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(Violation, ScalarToy) {
    ProblemFamily fam = equality_only(scalar_family(1.0));
    EXPECT_DOUBLE_EQ(violation(fam, Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 1.0)), 4.0);
}

TEST(Violation, FeasiblePointIsZero) {
    const ProblemFamily fam = generate_family(ProblemKind::socp, ProblemVariant::convex, 6, 3, 3, 8);
    const Instance inst = sample_instance(fam, 4);
    EXPECT_EQ(violation(fam, inst.interior, inst.x), 0.0);
    const auto l1 = violation_l1(fam, inst.interior, inst.x);
    EXPECT_EQ(l1.eq, 0.0);
    EXPECT_EQ(l1.ineq, 0.0);
}

TEST(Violation, MatchesDirectReevaluation) {
    std::mt19937_64 rng(10);
    for (ProblemKind k : kKinds)
        for (ProblemVariant v : kVariants) {
            const ProblemFamily fam = generate_family(k, v, 6, 3, 3, 5);
            const Instance inst = sample_instance(fam, 6);
            for (int trial = 0; trial < 5; ++trial) {
                const Eigen::VectorXd y = random_vec(rng, 6, 3.0);
                const Eigen::VectorXd h = fam.A * y - inst.x;
                const Eigen::VectorXd gp = reference_g(fam, y, inst.x).cwiseMax(0.0);
                const double expected = fam.w_eq * h.squaredNorm() + fam.w_ineq * gp.squaredNorm();
                const double phi = violation(fam, y, inst.x);
                EXPECT_GE(phi, 0.0);
                EXPECT_NEAR(phi, expected, 1e-11 * std::max(1.0, expected));
                const auto l1 = violation_l1(fam, y, inst.x);
                EXPECT_NEAR(l1.eq, h.lpNorm<1>(), 1e-11);
                EXPECT_NEAR(l1.ineq, gp.lpNorm<1>(), 1e-11);
            }
        }
}

TEST(Violation, L1Example) {
    // h = (-1, 2) and g+ = (0, 3): the single core row is slack, the box row y1 - U = 3
    ProblemFamily fam = toy_qp(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
                               Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Ones(1),
                               -10.0, 10.0);
    const Eigen::Vector2d y(0.0, 13.0);
    const Eigen::Vector2d x(1.0, 11.0);
    const auto l1 = violation_l1(fam, y, x);
    EXPECT_DOUBLE_EQ(l1.eq, 3.0);
    EXPECT_DOUBLE_EQ(l1.ineq, 3.0);
    EXPECT_GT(violation(fam, y, x), 0.0);
}

TEST(Violation, ZeroIffFeasible) {
    std::mt19937_64 rng(12);
    const ProblemFamily fam = generate_family(ProblemKind::qcqp, ProblemVariant::convex, 5, 2, 3, 4);
    const Instance inst = sample_instance(fam, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::VectorXd y = trial == 0 ? inst.interior : Eigen::VectorXd(inst.interior + random_vec(rng, 5, trial < 25 ? 1e-3 : 2.0));
        const auto [h, g] = constraints(fam, y, inst.x);
        const bool feasible = h.cwiseAbs().maxCoeff() <= 1e-12 && g.maxCoeff() <= 1e-12;
        const auto l1 = violation_l1(fam, y, inst.x);
        EXPECT_EQ(violation(fam, y, inst.x) == 0.0, feasible);
        EXPECT_EQ(l1.eq == 0.0 && l1.ineq == 0.0, violation(fam, y, inst.x) == 0.0);
    }
}

TEST(Violation, GradientMatchesFiniteDifferencesAwayFromKinks) {
    std::mt19937_64 rng(14);
    for (ProblemKind k : kKinds)
        for (ProblemVariant v : kVariants) {
            const ProblemFamily fam = generate_family(k, v, 6, 3, 3, 19);
            const Instance inst = sample_instance(fam, 3);
            for (int trial = 0; trial < 5; ++trial) {
                const Eigen::VectorXd y = inst.interior + random_vec(rng, 6, 2.0);
                if ((reference_g(fam, y, inst.x).array().abs() < 1e-4).any()) continue;
                const double err = ad::grad_check(
                    [&](ad::Tape& t, ad::NodeId n) { return violation(fam, t, n, inst.x); }, y);
                EXPECT_LE(err, 1e-6);
                ad::Tape t;
                const ad::NodeId n = t.leaf(y);
                const Eigen::VectorXd g_tape = t.backward(violation(fam, t, n, inst.x)).wrt(n);
                EXPECT_LE((g_tape - violation_gradient(fam, y, inst.x)).cwiseAbs().maxCoeff(),
                          1e-10 * std::max(1.0, g_tape.cwiseAbs().maxCoeff()));
            }
        }
}

TEST(Violation, SoftplusVariantIsSmooth) {
    ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 5, 2, 3, 6);
    fam.softplus_beta = ad::kDefaultSoftplusBeta;
    const Instance inst = sample_instance(fam, 2);
    std::mt19937_64 rng(2);
    const Eigen::VectorXd y = inst.interior + random_vec(rng, 5, 1.0);
    EXPECT_LE(ad::grad_check([&](ad::Tape& t, ad::NodeId n) { return violation(fam, t, n, inst.x); }, y), 1e-6);
}

TEST(FamilyFiles, RoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "fsnet_test_family";
    for (ProblemKind k : kKinds) {
        std::filesystem::remove_all(dir);
        const ProblemFamily fam = generate_family(k, ProblemVariant::nonsmooth, 6, 3, 2, 31);
        io::save_family(fam, dir);
        for (const char* f : {"Q.f64", "p.f64", "A.f64", "L.f64", "U.f64", "family.json"})
            EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
        const ProblemFamily back = io::load_family(dir);
        const Instance inst = sample_instance(fam, 5);
        std::mt19937_64 rng(1);
        const Eigen::VectorXd y = random_vec(rng, 6, 2.0);
        EXPECT_EQ(violation(back, y, inst.x), violation(fam, y, inst.x));
        EXPECT_EQ(objective(back, y), objective(fam, y));
    }
    std::filesystem::remove_all(dir);
}

}  // namespace
