// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include "fsnet/checks.hpp"
#include "fsnet/training.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>

namespace {

using namespace fsnet;
using fsnet::testing::toy_qp;

std::vector<Instance> sample(const ProblemFamily& fam, int count, std::uint64_t seed) {
    std::vector<Instance> out;
    for (int i = 0; i < count; ++i) out.push_back(sample_instance(fam, derive_seed(seed, "t", i)));
    return out;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.hidden = {16, 16};
    cfg.batch_size = 16;
    cfg.epochs = 5;
    cfg.learning_rate = 1e-3;
    cfg.fs.method = FsMethod::gd;
    cfg.fs.step_size = 0.02;
    cfg.fs.max_iters = 20;
    cfg.fs.tracked_iters = 5;
    cfg.eval_fs.method = FsMethod::lbfgs;
    return cfg;
}

// f = p^T y with Q = 0 so that the objective is easy to set by hand.
ProblemFamily linear_family() {
    return toy_qp(Eigen::MatrixXd::Zero(2, 2), Eigen::Vector2d(10, 0), Eigen::RowVector2d(1, 0),
                  Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Ones(1));
}

TEST(LossF, ZeroDistanceGivesObjective) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::nonsmooth, 5, 2, 2, 3);
    const Instance inst = sample_instance(fam, 1);
    ad::Tape t;
    const ad::NodeId y = t.leaf(inst.interior);
    for (double rho : {0.0, 5.0, 123.0})
        EXPECT_EQ(t.scalar(loss_F(fam, inst.x, y, y, rho, 1.0, 1e3, t)), objective(fam, inst.interior));
}

TEST(LossF, DistanceTerm) {
    const ProblemFamily fam = linear_family();
    ad::Tape t;
    const ad::NodeId y_hat = t.leaf(Eigen::Vector2d(1, 0));
    const ad::NodeId y = t.leaf(Eigen::Vector2d(1, 3));
    EXPECT_DOUBLE_EQ(t.scalar(loss_F(fam, Eigen::VectorXd::Ones(1), y, y_hat, 2.0, 1.0, 1e3, t)), 19.0);
}

TEST(LossF, StabilizingTermAboveThreshold) {
    const ProblemFamily fam = linear_family();
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
    const Eigen::Vector2d yv(4, 2);
    const double phi = violation(fam, yv, x);
    ASSERT_GT(phi, 0.0);
    ad::Tape t;
    const ad::NodeId y_hat = t.leaf(Eigen::Vector2d(1, 0));
    const ad::NodeId y = t.leaf(yv);
    const double below = t.scalar(loss_F(fam, x, y, y_hat, 2.0, 1.0, 2.0 * phi, t));
    const double above = t.scalar(loss_F(fam, x, y, y_hat, 2.0, 1.0, 0.5 * phi, t));
    EXPECT_DOUBLE_EQ(above - below, phi);
    // the added term is differentiable and contributes grad phi
    const ad::NodeId l = loss_F(fam, x, y, y_hat, 0.0, 1.0, 0.5 * phi, t);
    EXPECT_LE((t.backward(l).wrt(y) - violation_gradient(fam, yv, x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BatchLoss, SingleInstanceEqualsLossF) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 6, 3, 3, 2);
    const std::vector<Instance> batch = sample(fam, 1, 4);
    const TrainConfig cfg = small_config();
    const ModelParams m = init_mlp(3, cfg.hidden, 6, 1);
    ad::Tape t1;
    const double value = t1.scalar(batch_loss(fam, batch, m, cfg, t1));
    ad::Tape t2;
    const ad::NodeId y = forward(m, batch[0].x, t2);
    const ad::NodeId y_hat = unroll_fs(fam, batch[0].x, y, cfg.fs, t2).point;
    EXPECT_EQ(value, t2.scalar(loss_F(fam, batch[0].x, y, y_hat, cfg.rho, cfg.rho_phi, cfg.q_threshold, t2)));
}

TEST(BatchLoss, PenaltyBaselineAtFeasiblePrediction) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 6, 3, 3, 2);
    const Instance inst = sample_instance(fam, 5);
    ModelParams m = init_mlp(3, {4}, 6, 1);
    m.values.setZero();
    m.values.tail(6) = inst.interior;  // constant prediction
    TrainConfig cfg = small_config();
    cfg.baseline = Baseline::penalty;
    ad::Tape t;
    const std::vector<Instance> batch{inst};
    EXPECT_NEAR(t.scalar(batch_loss(fam, batch, m, cfg, t)), objective(fam, inst.interior), 1e-12);
}

TEST(BatchLoss, EmptyBatchThrows) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 6, 3, 3, 2);
    const TrainConfig cfg = small_config();
    ad::Tape t;
    EXPECT_THROW(batch_loss(fam, std::vector<Instance>{}, init_mlp(3, {4}, 6, 1), cfg, t), std::invalid_argument);
}

TEST(BatchLoss, ParameterGradientMatchesFiniteDifferences) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 2, 1, 1, 6);
    const std::vector<Instance> batch = sample(fam, 3, 2);
    TrainConfig cfg = small_config();
    cfg.hidden = {5};
    cfg.fs.max_iters = 8;
    cfg.fs.tracked_iters = 8;
    cfg.fs.tol_phi = 1e-300;
    cfg.fs.tol_grad = 1e-300;
    for (const auto baseline : {Baseline::none, Baseline::penalty}) {
        cfg.baseline = baseline;
        const ModelParams m = init_mlp(1, cfg.hidden, 2, 3);
        auto fn = [&](ad::Tape& t, ad::NodeId theta) {
            return batch_loss(fam, batch, m, theta, cfg, t, cfg.penalty_eq, cfg.penalty_ineq);
        };
        EXPECT_LE(ad::grad_check(fn, m.values, 1e-6), 1e-4);
    }
}

TEST(BatchLoss, PipelineGradientCheck) {
    const checks::CheckResult r = checks::pipeline_gradient_check(5, 2);
    EXPECT_TRUE(r.passed) << r.measured;
}

TEST(BatchLoss, PenaltyGradientAtInteriorIsObjectiveGradient) {
    const ProblemFamily fam = generate_family(ProblemKind::qcqp, ProblemVariant::convex, 6, 3, 3, 2);
    const Instance inst = sample_instance(fam, 1);
    ProblemFamily penalized = fam;
    penalized.w_eq = penalized.w_ineq = 50.0;
    ad::Tape t;
    const ad::NodeId y = t.leaf(inst.interior);
    TapeBackend b(t);
    const ad::NodeId loss = t.add(objective(fam, b, y), violation(penalized, b, y, inst.x));
    EXPECT_LE((t.backward(loss).wrt(y) - objective_gradient(fam, inst.interior)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Optimizer, ZeroLearningRateLeavesParameters) {
    for (OptimizerKind k : {OptimizerKind::sgd, OptimizerKind::adam}) {
        Optimizer opt(k, 3);
        Eigen::VectorXd theta(3), before;
        theta << 1, -2, 3;
        before = theta;
        opt.step(theta, Eigen::Vector3d(0.5, 0.1, -4), 0.0);
        EXPECT_EQ(theta, before);
    }
}

TEST(Optimizer, SgdStepAndSchedule) {
    Optimizer opt(OptimizerKind::sgd, 2);
    Eigen::VectorXd theta = Eigen::Vector2d(1, 1);
    opt.step(theta, Eigen::Vector2d(2, -4), 0.5);
    EXPECT_EQ(theta, Eigen::VectorXd(Eigen::Vector2d(0, 3)));
    TrainConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.lr_decay = 0.5;
    cfg.lr_decay_steps = 10;
    EXPECT_EQ(scheduled_lr(cfg, 0), 1.0);
    EXPECT_EQ(scheduled_lr(cfg, 9), 1.0);
    EXPECT_EQ(scheduled_lr(cfg, 10), 0.5);
    EXPECT_EQ(scheduled_lr(cfg, 25), 0.25);
}

TEST(Optimizer, AdamFirstStepHasLearningRateMagnitude) {
    Optimizer opt(OptimizerKind::adam, 2);
    Eigen::VectorXd theta = Eigen::Vector2d::Zero();
    opt.step(theta, Eigen::Vector2d(3, -0.01), 0.1);
    EXPECT_NEAR(theta[0], -0.1, 1e-8);
    EXPECT_NEAR(theta[1], 0.1, 1e-5);
}

TEST(Train, ZeroEpochs) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 1);
    const auto data = sample(fam, 10, 1);
    TrainConfig cfg = small_config();
    cfg.epochs = 0;
    const TrainReport rep = train(fam, data, data, cfg);
    EXPECT_TRUE(rep.epochs.empty());
    EXPECT_EQ(rep.model.values, init_mlp(2, cfg.hidden, 4, derive_seed(cfg.seed, "init")).values);
}

TEST(Train, ToyFamilyBecomesFeasible) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 2, 1, 1, 3);
    const auto tr = sample(fam, 200, 1), va = sample(fam, 50, 2);
    TrainConfig cfg = small_config();
    cfg.epochs = 30;
    const TrainReport rep = train(fam, tr, va, cfg);
    ASSERT_EQ(rep.epochs.size(), 30u);
    EXPECT_LE(rep.epochs.back().val_eq, 1e-3);
    EXPECT_LE(rep.epochs.back().val_ineq, 1e-3);
}

TEST(Train, LossDecreases) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 10, 5, 5, 4);
    const auto tr = sample(fam, 200, 3), va = sample(fam, 20, 4);
    for (std::uint64_t seed : {1u, 2u}) {
        TrainConfig cfg = small_config();
        cfg.epochs = 20;
        cfg.seed = seed;
        const TrainReport rep = train(fam, tr, va, cfg);
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 5; ++i) {
            first += rep.epochs[static_cast<std::size_t>(i)].train_loss;
            last += rep.epochs[rep.epochs.size() - 1 - static_cast<std::size_t>(i)].train_loss;
        }
        EXPECT_LE(last, first);
    }
}

TEST(Train, Deterministic) {
    const ProblemFamily fam = generate_family(ProblemKind::qcqp, ProblemVariant::convex, 5, 2, 2, 4);
    const auto tr = sample(fam, 40, 3), va = sample(fam, 10, 4);
    const TrainConfig cfg = small_config();
    const TrainReport a = train(fam, tr, va, cfg), b = train(fam, tr, va, cfg);
    EXPECT_EQ(a.model.values, b.model.values);
    ASSERT_EQ(a.epochs.size(), b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        EXPECT_EQ(a.epochs[i].train_loss, b.epochs[i].train_loss);
        EXPECT_EQ(a.epochs[i].val_eq, b.epochs[i].val_eq);
    }
}

TEST(Train, AdaptivePenaltyWeightsGrowWithinCap) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 6, 3, 3, 4);
    const auto tr = sample(fam, 64, 3), va = sample(fam, 10, 4);
    TrainConfig cfg = small_config();
    cfg.baseline = Baseline::adaptive_penalty;
    cfg.epochs = 12;
    const TrainReport rep = train(fam, tr, va, cfg);
    double prev = cfg.adaptive.init;
    for (const auto& e : rep.epochs) {
        EXPECT_GE(e.weight_eq, prev);
        EXPECT_LE(e.weight_eq, cfg.adaptive.max);
        EXPECT_TRUE(e.weight_eq == prev || e.weight_eq == std::min(cfg.adaptive.max, prev * cfg.adaptive.rate));
        prev = e.weight_eq;
    }
}

TEST(Train, EarlyStopHook) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 1);
    const auto data = sample(fam, 16, 1);
    TrainHooks hooks;
    hooks.on_epoch = [](const EpochRecord& e) { return e.epoch < 1; };
    EXPECT_EQ(train(fam, data, data, small_config(), hooks).epochs.size(), 2u);
}

TEST(Train, NonFiniteLossAborts) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 1);
    const auto data = sample(fam, 32, 1);
    TrainConfig cfg = small_config();
    cfg.baseline = Baseline::penalty;
    cfg.optimizer = OptimizerKind::sgd;
    cfg.learning_rate = 1e12;
    cfg.epochs = 50;
    EXPECT_THROW(train(fam, data, data, cfg), std::runtime_error);
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    cfg.rho = -1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(RhoSweep, SingleRow) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 1);
    const auto tr = sample(fam, 16, 1), va = sample(fam, 8, 2), te = sample(fam, 8, 3);
    std::vector<double> f_star;
    for (const auto& inst : te) f_star.push_back(objective(fam, inst.interior));
    TrainConfig cfg = small_config();
    cfg.epochs = 2;
    const auto rows = rho_sweep(fam, tr, va, te, f_star, cfg, {5.0});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].value, 5.0);
    EXPECT_LE(rows[0].eq, 1e-4);
    EXPECT_THROW(rho_sweep(fam, tr, va, te, f_star, cfg, {}), std::invalid_argument);
    const auto k_rows = tracked_sweep(fam, tr, va, te, f_star, cfg, {0, 5});
    ASSERT_EQ(k_rows.size(), 2u);
    EXPECT_EQ(k_rows[1].value, 5.0);
}

TEST(Validate, GapAgainstReferenceValues) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 4, 2, 2, 1);
    const auto te = sample(fam, 5, 3);
    const TrainConfig cfg = small_config();
    const ModelParams m = init_mlp(2, cfg.hidden, 4, 1);
    std::vector<double> f_hat;
    for (const auto& inst : te)
        f_hat.push_back(objective(fam, feasibility_seek(fam, inst.x, predict(m, inst.x), cfg.eval_fs).point));
    const ValidationSummary s = validate_model(fam, m, te, cfg, f_hat);
    EXPECT_EQ(s.gap, 0.0);
    EXPECT_NEAR(s.objective, std::accumulate(f_hat.begin(), f_hat.end(), 0.0) / 5.0, 1e-12);
}

}  // namespace
