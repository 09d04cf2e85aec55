// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end training of the predictor through the feasibility-seeking step,
// plus the fixed and adaptive penalty baselines.

#pragma once

#include "fsnet/autodiff.hpp"
#include "fsnet/fs.hpp"
#include "fsnet/net.hpp"
#include "fsnet/oracle.hpp"
#include "fsnet/problems.hpp"
#include "fsnet/seed.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsnet {

enum class OptimizerKind { sgd, adam };
enum class Baseline { none, penalty, adaptive_penalty };

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::sgd ? "sgd" : "adam"; }
inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer: " + s);
}
inline std::string to_string(Baseline b) {
    switch (b) {
        case Baseline::none: return "none";
        case Baseline::penalty: return "penalty";
        case Baseline::adaptive_penalty: return "adaptive-penalty";
    }
    return "?";
}
inline Baseline parse_baseline(const std::string& s) {
    if (s == "none" || s == "fsnet") return Baseline::none;
    if (s == "penalty") return Baseline::penalty;
    if (s == "adaptive-penalty") return Baseline::adaptive_penalty;
    throw std::invalid_argument("unknown baseline: " + s);
}

struct AdaptivePenaltyConfig {
    double init = 30.0;
    double max = 500.0;
    double rate = 2.0;
};

struct TrainConfig {
    double rho = 5.0;
    double rho_phi = 1.0;
    double q_threshold = 1e3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 5e-4;
    double lr_decay = 0.5;
    int lr_decay_steps = 2000;
    int epochs = 100;
    int batch_size = 64;
    std::uint64_t seed = 2025;
    std::vector<int> hidden = {256, 256, 256, 256};
    FSConfig fs;       // unrolled during training
    FSConfig eval_fs;  // inference-mode feasibility seeking for validation metrics
    Baseline baseline = Baseline::none;
    double penalty_eq = 50.0;
    double penalty_ineq = 50.0;
    AdaptivePenaltyConfig adaptive;

    void validate() const {
        if (!(rho >= 0.0) || !(rho_phi >= 0.0)) throw std::invalid_argument("TrainConfig: rho must be >= 0");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
        if (lr_decay_steps < 1 || !(lr_decay > 0.0)) throw std::invalid_argument("TrainConfig: invalid lr schedule");
        fs.validate();
        eval_fs.validate();
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_eq = 0.0;
    double val_ineq = 0.0;
    double val_objective = 0.0;
    double wall_time = 0.0;
    double weight_eq = 0.0;  // penalty weights in force (baselines only)
    double weight_ineq = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    ModelParams model;
    std::string checkpoint;  // path of the saved checkpoint, if any
};

/// F = f(y_hat) + rho/2 ||y - y_hat||^2, plus rho_phi * phi(y) when
/// phi(y) >= q_threshold (branch decided on the forward value).
inline ad::NodeId loss_F(const ProblemFamily& fam, const Eigen::VectorXd& x, ad::NodeId y, ad::NodeId y_hat,
                         double rho, double rho_phi, double q_threshold, ad::Tape& tape) {
    TapeBackend b(tape);
    auto f = objective(fam, b, y_hat);
    auto diff = tape.sub(y, y_hat);
    auto loss = tape.add(f, tape.scalar_mul(tape.dot(diff, diff), 0.5 * rho));
    if (rho_phi > 0.0) {
        PlainBackend pb;
        const double phi_y = violation(fam, pb, tape.value(y), x);
        if (phi_y >= q_threshold) loss = tape.add(loss, tape.scalar_mul(violation(fam, b, y, x), rho_phi));
    }
    return loss;
}

struct BatchStats {
    double eq_l1 = 0.0;    // summed over the batch, raw predictions
    double ineq_l1 = 0.0;
    long fs_iterations = 0;
    std::size_t count = 0;
};

/// Mean loss over the batch recorded on one tape; `params` is the bound
/// parameter node. Penalty baselines skip the feasibility-seeking step and use
/// f(y) + w_eq ||h||^2 + w_ineq ||g+||^2 with the given weights.
inline ad::NodeId batch_loss(const ProblemFamily& fam, std::span<const Instance> batch, const ModelParams& model,
                             ad::NodeId params, const TrainConfig& cfg, ad::Tape& tape, double weight_eq,
                             double weight_ineq, BatchStats* stats = nullptr) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<ad::NodeId> terms;
    terms.reserve(batch.size());
    for (const Instance& inst : batch) {
        const ad::NodeId y = forward(model, params, tape.constant(inst.x), tape);
        if (stats) {
            const auto v = violation_l1(fam, tape.value(y), inst.x);
            stats->eq_l1 += v.eq;
            stats->ineq_l1 += v.ineq;
            ++stats->count;
        }
        if (cfg.baseline == Baseline::none) {
            const UnrollResult fs = unroll_fs(fam, inst.x, y, cfg.fs, tape);
            if (stats) stats->fs_iterations += fs.summary.iterations;
            terms.push_back(loss_F(fam, inst.x, y, fs.point, cfg.rho, cfg.rho_phi, cfg.q_threshold, tape));
        } else {
            TapeBackend b(tape);
            terms.push_back(
                tape.add(objective(fam, b, y), weighted_violation(fam, b, y, inst.x, weight_eq, weight_ineq)));
        }
    }
    ad::NodeId total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
    return tape.scalar_mul(total, 1.0 / static_cast<double>(batch.size()));
}

inline ad::NodeId batch_loss(const ProblemFamily& fam, std::span<const Instance> batch, const ModelParams& model,
                             const TrainConfig& cfg, ad::Tape& tape) {
    const ad::NodeId params = bind_params(model, tape);
    const double we = cfg.baseline == Baseline::adaptive_penalty ? cfg.adaptive.init : cfg.penalty_eq;
    const double wi = cfg.baseline == Baseline::adaptive_penalty ? cfg.adaptive.init : cfg.penalty_ineq;
    return batch_loss(fam, batch, model, params, cfg, tape, we, wi);
}

/// Plain SGD (theta -= lr g) or Adam (beta1 0.9, beta2 0.999, eps 1e-8).
class Optimizer {
public:
    Optimizer(OptimizerKind kind, Eigen::Index size) : kind_(kind) {
        if (kind_ == OptimizerKind::adam) {
            m_ = Eigen::VectorXd::Zero(size);
            v_ = Eigen::VectorXd::Zero(size);
        }
    }

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
        if (kind_ == OptimizerKind::sgd) {
            if (lr != 0.0) theta -= lr * grad;
            return;
        }
        ++t_;
        m_ = beta1 * m_ + (1.0 - beta1) * grad;
        v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseAbs2();
        if (lr == 0.0) return;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

private:
    OptimizerKind kind_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

/// Step-decay schedule: lr0 * decay^floor(step / decay_steps).
inline double scheduled_lr(const TrainConfig& cfg, long step) {
    return cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(step / cfg.lr_decay_steps));
}

struct ValidationSummary {
    double eq = 0.0;
    double ineq = 0.0;
    double objective = 0.0;
    double distance = 0.0;  // mean ||y - y_hat||
    double gap = 0.0;       // mean optimality gap, when reference values are given
};

/// Inference-mode metrics: predict, feasibility-seek (unless a penalty
/// baseline), and average the L1 violations and objective.
inline ValidationSummary validate_model(const ProblemFamily& fam, const ModelParams& model,
                                        std::span<const Instance> data, const TrainConfig& cfg,
                                        std::span<const double> f_star = {}) {
    if (!f_star.empty() && f_star.size() != data.size())
        throw std::invalid_argument("validate_model: one reference objective per instance required");
    ValidationSummary s;
    if (data.empty()) return s;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Instance& inst = data[i];
        const Eigen::VectorXd y = predict(model, inst.x);
        Eigen::VectorXd y_hat = y;
        if (cfg.baseline == Baseline::none) y_hat = feasibility_seek(fam, inst.x, y, cfg.eval_fs).point;
        const auto v = violation_l1(fam, y_hat, inst.x);
        s.eq += v.eq;
        s.ineq += v.ineq;
        const double f = objective(fam, y_hat);
        s.objective += f;
        s.distance += (y - y_hat).norm();
        if (!f_star.empty()) s.gap += optimality_gap(f, f_star[i]);
    }
    const double n = static_cast<double>(data.size());
    s.eq /= n;
    s.ineq /= n;
    s.objective /= n;
    s.distance /= n;
    s.gap /= n;
    return s;
}

struct TrainHooks {
    /// Called after each epoch; return false to stop early.
    std::function<bool(const EpochRecord&)> on_epoch;
};

inline TrainReport train(const ProblemFamily& fam, std::span<const Instance> train_set,
                         std::span<const Instance> val_set, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");
    TrainReport report;
    report.model = init_mlp(fam.n_eq, cfg.hidden, fam.n, derive_seed(cfg.seed, "init"));
    ModelParams& model = report.model;
    Optimizer opt(cfg.optimizer, model.values.size());

    double w_eq = cfg.baseline == Baseline::adaptive_penalty ? cfg.adaptive.init : cfg.penalty_eq;
    double w_ineq = cfg.baseline == Baseline::adaptive_penalty ? cfg.adaptive.init : cfg.penalty_ineq;
    double prev_eq = std::numeric_limits<double>::infinity();
    double prev_ineq = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Instance> batch;
    long step = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        BatchStats stats;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);

            ad::Tape tape;
            const ad::NodeId params = bind_params(model, tape);
            const ad::NodeId loss = batch_loss(fam, batch, model, params, cfg, tape, w_eq, w_ineq, &stats);
            const double loss_value = tape.scalar(loss);
            Eigen::VectorXd grad = tape.backward(loss).wrt(params);
            if (!std::isfinite(loss_value) || !grad.allFinite()) {
                std::ostringstream msg;
                msg << "train: non-finite loss or gradient at epoch " << epoch << ", step " << step
                    << " (loss = " << loss_value << ")";
                throw std::runtime_error(msg.str());
            }
            opt.step(model.values, grad, scheduled_lr(cfg, step));
            ++step;
            loss_sum += loss_value;
            ++batches;
        }

        if (cfg.baseline == Baseline::adaptive_penalty && stats.count > 0) {
            const double eq = stats.eq_l1 / static_cast<double>(stats.count);
            const double ineq = stats.ineq_l1 / static_cast<double>(stats.count);
            if (!(eq < prev_eq)) w_eq = std::min(cfg.adaptive.max, w_eq * cfg.adaptive.rate);
            if (!(ineq < prev_ineq)) w_ineq = std::min(cfg.adaptive.max, w_ineq * cfg.adaptive.rate);
            prev_eq = eq;
            prev_ineq = ineq;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        const ValidationSummary v = validate_model(fam, model, val_set, cfg);
        rec.val_eq = v.eq;
        rec.val_ineq = v.ineq;
        rec.val_objective = v.objective;
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.weight_eq = w_eq;
        rec.weight_ineq = w_ineq;
        report.epochs.push_back(rec);
        if (hooks.on_epoch && !hooks.on_epoch(rec)) break;
    }
    return report;
}

struct SweepRow {
    double value = 0.0;     // the swept setting (rho or tracked iterations)
    double distance = 0.0;  // mean ||y - y_hat||
    double gap = 0.0;       // mean optimality gap
    double eq = 0.0;        // mean L1 violations after feasibility seeking
    double ineq = 0.0;
};

namespace detail {

inline SweepRow sweep_point(const ProblemFamily& fam, std::span<const Instance> train_set,
                            std::span<const Instance> val_set, std::span<const Instance> test_set,
                            std::span<const double> f_star, const TrainConfig& cfg, double value) {
    const TrainReport rep = train(fam, train_set, val_set, cfg);
    const ValidationSummary s = validate_model(fam, rep.model, test_set, cfg, f_star);
    return SweepRow{value, s.distance, s.gap, s.eq, s.ineq};
}

}  // namespace detail

/// Trains one model per rho and scores it on `test_set` against the reference
/// objectives `f_star`.
inline std::vector<SweepRow> rho_sweep(const ProblemFamily& fam, std::span<const Instance> train_set,
                                       std::span<const Instance> val_set, std::span<const Instance> test_set,
                                       std::span<const double> f_star, const TrainConfig& base,
                                       const std::vector<double>& rhos) {
    if (rhos.empty()) throw std::invalid_argument("rho_sweep: empty rho list");
    std::vector<SweepRow> rows;
    for (double rho : rhos) {
        TrainConfig cfg = base;
        cfg.rho = rho;
        rows.push_back(detail::sweep_point(fam, train_set, val_set, test_set, f_star, cfg, rho));
    }
    return rows;
}

/// Same as rho_sweep over the number of differentiated iterations K'.
inline std::vector<SweepRow> tracked_sweep(const ProblemFamily& fam, std::span<const Instance> train_set,
                                           std::span<const Instance> val_set, std::span<const Instance> test_set,
                                           std::span<const double> f_star, const TrainConfig& base,
                                           const std::vector<int>& tracked) {
    if (tracked.empty()) throw std::invalid_argument("tracked_sweep: empty list");
    std::vector<SweepRow> rows;
    for (int k : tracked) {
        TrainConfig cfg = base;
        cfg.fs.tracked_iters = k;
        cfg.fs.max_iters = std::max(cfg.fs.max_iters, k);
        rows.push_back(detail::sweep_point(fam, train_set, val_set, test_set, f_star, cfg, k));
    }
    return rows;
}

}  // namespace fsnet
