// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Feasibility seeking: minimize phi(s; x) from a warm start by gradient
// descent or by L-BFGS with Armijo backtracking. The iteration code is shared
// between plain evaluation and tape recording (unroll_fs), so the unrolled
// forward pass reproduces fs_gd / fs_lbfgs bit for bit.

#pragma once

#include "fsnet/autodiff.hpp"
#include "fsnet/backend.hpp"
#include "fsnet/problems.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsnet {

enum class FsMethod { gd, lbfgs };

inline std::string to_string(FsMethod m) { return m == FsMethod::gd ? "gd" : "lbfgs"; }
inline FsMethod parse_fs_method(const std::string& s) {
    if (s == "gd") return FsMethod::gd;
    if (s == "lbfgs") return FsMethod::lbfgs;
    throw std::invalid_argument("unknown feasibility-seeking method: " + s);
}

struct FSConfig {
    FsMethod method = FsMethod::lbfgs;
    double step_size = 1e-3;  // gd only
    int max_iters = 50;       // K
    int tracked_iters = 10;   // K', iterations differentiated by unroll_fs
    int memory = 30;          // lbfgs only
    double tol_phi = 1e-10;
    double tol_grad = 1e-8;
    double armijo_c = 1e-4;
    double backtrack_factor = 0.5;
    int max_backtracks = 30;
    double curvature_eps = 1e-10;  // lbfgs pairs with s^T y below this are skipped
    bool stop_on_value = true;     // phi-style objectives (>= 0) may stop on value <= tol_phi

    void validate() const {
        if (max_iters < 0 || tracked_iters < 0 || tracked_iters > max_iters)
            throw std::invalid_argument("FSConfig: need 0 <= tracked_iters <= max_iters");
        if (memory < 1) throw std::invalid_argument("FSConfig: memory must be >= 1");
        if (!(tol_phi > 0.0) || !(tol_grad > 0.0)) throw std::invalid_argument("FSConfig: tolerances must be positive");
        if (method == FsMethod::gd && !(step_size > 0.0)) throw std::invalid_argument("FSConfig: step size must be positive");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0) || !(armijo_c > 0.0 && armijo_c < 1.0))
            throw std::invalid_argument("FSConfig: invalid line-search parameters");
    }
};

struct FSResult {
    Eigen::VectorXd point;
    int iterations = 0;
    double phi = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    bool line_search_failed = false;
    std::vector<double> trajectory;  // phi(s_0), ..., phi(s_iterations)
};

/// Polyak-Lojasiewicz constants of the equality-only violation function.
struct PLConstants {
    double mu = 0.0;
    double L = 0.0;
    double gamma = 0.0;  // 1 - mu / L
};

/// mu = 2 w_eq sigma_min(A)^2, L = 2 w_eq sigma_max(A)^2 for phi = w_eq ||A s - x||^2.
inline PLConstants pl_constants(const ProblemFamily& fam) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(fam.A);
    const Eigen::VectorXd sv = svd.singularValues();
    const double smax = sv[0];
    const double smin = sv[sv.size() - 1];
    if (!(smin > 1e-12 * std::max(1.0, smax))) throw std::invalid_argument("pl_constants: A is rank deficient");
    PLConstants c;
    c.mu = 2.0 * fam.w_eq * smin * smin;
    c.L = 2.0 * fam.w_eq * smax * smax;
    c.gamma = std::max(0.0, 1.0 - c.mu / c.L);
    return c;
}
inline PLConstants pl_constants(const ProblemFamily& fam, const Eigen::VectorXd& /*x*/) { return pl_constants(fam); }

/// Unconstrained objective interface used by the iteration engine: a plain
/// value and a backend gradient.
struct ViolationObjective {
    const ProblemFamily* fam;
    const Eigen::VectorXd* x;

    double value(const Eigen::VectorXd& s) const {
        PlainBackend b;
        return violation(*fam, b, s, *x);
    }
    template <class B>
    typename B::Vec gradient(B& b, const typename B::Vec& s) const {
        return violation_gradient(*fam, b, s, *x);
    }
};

namespace detail {

template <class B>
struct CurvaturePair {
    typename B::Vec s;
    typename B::Vec y;
    typename B::Scalar rho;
};

template <class B>
struct SolverState {
    typename B::Vec s;
    typename B::Vec grad;
    double value = 0.0;
    std::deque<CurvaturePair<B>> memory;
};

template <class B>
double grad_norm(B& b, const typename B::Vec& g) {
    return ad::kernels::norm(b.value(g));
}

/// Two-loop recursion: returns H g for the implicit inverse Hessian H.
template <class B>
typename B::Vec two_loop(B& b, const std::deque<CurvaturePair<B>>& mem, const typename B::Vec& g) {
    if (mem.empty()) return g;
    auto q = g;
    std::vector<typename B::Scalar> alpha(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
        alpha[i] = b.mul(mem[i].rho, b.dot(mem[i].s, q));
        q = b.sub(q, b.scale_by(mem[i].y, alpha[i]));
    }
    const auto& last = mem.back();
    auto gamma = b.div(b.dot(last.s, last.y), b.dot(last.y, last.y));
    auto r = b.scale_by(q, gamma);
    for (std::size_t i = 0; i < mem.size(); ++i) {
        auto beta = b.mul(mem[i].rho, b.dot(mem[i].y, r));
        r = b.add(r, b.scale_by(mem[i].s, b.sub(alpha[i], beta)));
    }
    return r;
}

/// Armijo backtracking along d from the current state. Returns the accepted
/// step length, or 0 when no step satisfies the sufficient-decrease test.
template <class B>
double backtrack(B& b, const SolverState<B>& st, const typename B::Vec& d, double slope, const auto& obj,
                 const FSConfig& cfg, double& accepted_value) {
    const Eigen::VectorXd& s = b.value(st.s);
    const Eigen::VectorXd& dv = b.value(d);
    double alpha = 1.0;
    for (int t = 0; t <= cfg.max_backtracks; ++t) {
        const Eigen::VectorXd trial = ad::kernels::add(s, ad::kernels::scale(dv, alpha));
        const double v = obj.value(trial);
        if (v <= st.value + cfg.armijo_c * alpha * slope) {
            accepted_value = v;
            return alpha;
        }
        alpha *= cfg.backtrack_factor;
    }
    return 0.0;
}

enum class StepOutcome { ok, line_search_failed };

template <class B>
StepOutcome gd_step(B& b, SolverState<B>& st, const auto& obj, const FSConfig& cfg) {
    st.s = b.sub(st.s, b.scale(st.grad, cfg.step_size));
    if (!b.value(st.s).allFinite())
        throw std::runtime_error("feasibility seeking: non-finite iterate (step size too large?)");
    st.value = obj.value(b.value(st.s));
    st.grad = obj.gradient(b, st.s);
    return StepOutcome::ok;
}

/// -g / max(1, ||g||): without curvature pairs the first trial step is at
/// most unit length.
template <class B>
typename B::Vec steepest_direction(B& b, const typename B::Vec& g) {
    if (grad_norm(b, g) <= 1.0) return b.neg(g);
    return b.scale_by(g, b.div(b.constant(-1.0), b.norm(g)));
}

template <class B>
StepOutcome lbfgs_step(B& b, SolverState<B>& st, const auto& obj, const FSConfig& cfg) {
    auto d = st.memory.empty() ? steepest_direction(b, st.grad) : b.neg(two_loop(b, st.memory, st.grad));
    double slope = ad::kernels::dot(b.value(st.grad), b.value(d));
    if (!(slope < 0.0)) {
        st.memory.clear();
        d = steepest_direction(b, st.grad);
        slope = ad::kernels::dot(b.value(st.grad), b.value(d));
    }
    double next_value = 0.0;
    double alpha = backtrack(b, st, d, slope, obj, cfg, next_value);
    if (alpha == 0.0 && !st.memory.empty()) {
        // fall back to a steepest-descent step
        st.memory.clear();
        d = steepest_direction(b, st.grad);
        slope = ad::kernels::dot(b.value(st.grad), b.value(d));
        alpha = backtrack(b, st, d, slope, obj, cfg, next_value);
    }
    if (alpha == 0.0) return StepOutcome::line_search_failed;

    // The step length is a constant for differentiation purposes.
    auto s_next = b.add(st.s, b.scale(d, alpha));
    auto g_next = obj.gradient(b, s_next);
    auto sv = b.sub(s_next, st.s);
    auto yv = b.sub(g_next, st.grad);
    auto sy = b.dot(sv, yv);
    if (scalar_value(b, sy) > cfg.curvature_eps) {
        st.memory.push_back({sv, yv, b.div(b.constant(1.0), sy)});
        while (static_cast<int>(st.memory.size()) > cfg.memory) st.memory.pop_front();
    }
    st.s = s_next;
    st.grad = g_next;
    st.value = next_value;
    return StepOutcome::ok;
}

/// Runs iterations until the stopping rule fires or `limit` total iterations
/// have been performed. Records phi after each update into out.trajectory.
template <class B>
void iterate(B& b, SolverState<B>& st, const auto& obj, const FSConfig& cfg, int limit, FSResult& out) {
    while (true) {
        const double gn = grad_norm(b, st.grad);
        out.phi = st.value;
        out.grad_norm = gn;
        if ((cfg.stop_on_value && st.value <= cfg.tol_phi) || gn <= cfg.tol_grad) {
            out.converged = true;
            return;
        }
        if (out.iterations >= limit || out.line_search_failed) return;
        const StepOutcome o = cfg.method == FsMethod::gd ? gd_step(b, st, obj, cfg) : lbfgs_step(b, st, obj, cfg);
        if (o == StepOutcome::line_search_failed) {
            out.line_search_failed = true;
            return;
        }
        ++out.iterations;
        out.trajectory.push_back(st.value);
    }
}

inline SolverState<PlainBackend> to_plain(const TapeBackend& tb, const SolverState<TapeBackend>& st) {
    SolverState<PlainBackend> p;
    p.s = tb.value(st.s);
    p.grad = tb.value(st.grad);
    p.value = st.value;
    for (const auto& m : st.memory) p.memory.push_back({tb.value(m.s), tb.value(m.y), tb.tape->scalar(m.rho)});
    return p;
}

template <class B>
SolverState<B> initial_state(B& b, const typename B::Vec& s0, const auto& obj) {
    SolverState<B> st;
    st.s = s0;
    st.value = obj.value(b.value(s0));
    st.grad = obj.gradient(b, s0);
    return st;
}

}  // namespace detail

/// Runs the configured method on an arbitrary objective exposing
/// value(VectorXd) and gradient(PlainBackend&, VectorXd).
inline FSResult minimize(const auto& obj, const Eigen::VectorXd& start, const FSConfig& cfg) {
    cfg.validate();
    PlainBackend b;
    auto st = detail::initial_state(b, start, obj);
    FSResult out;
    out.trajectory.push_back(st.value);
    detail::iterate(b, st, obj, cfg, cfg.max_iters, out);
    out.point = st.s;
    return out;
}

inline void require_fs_dims(const ProblemFamily& fam, const Eigen::VectorXd& x, Eigen::Index y0_size) {
    if (x.size() != fam.n_eq || y0_size != fam.n) throw std::invalid_argument("feasibility seeking: dimension mismatch");
}

/// s_{k+1} = s_k - eta grad phi(s_k), stopping on phi <= tol_phi,
/// ||grad phi|| <= tol_grad or k = K.
inline FSResult fs_gd(const ProblemFamily& fam, const Eigen::VectorXd& x, const Eigen::VectorXd& y0, FSConfig cfg) {
    require_fs_dims(fam, x, y0.size());
    if (cfg.method != FsMethod::gd) throw std::invalid_argument("fs_gd: config method must be gd");
    return minimize(ViolationObjective{&fam, &x}, y0, cfg);
}

/// L-BFGS (two-loop recursion, memory m) with Armijo backtracking from a unit
/// step; phi decreases monotonically.
inline FSResult fs_lbfgs(const ProblemFamily& fam, const Eigen::VectorXd& x, const Eigen::VectorXd& y0,
                         FSConfig cfg) {
    require_fs_dims(fam, x, y0.size());
    if (cfg.method != FsMethod::lbfgs) throw std::invalid_argument("fs_lbfgs: config method must be lbfgs");
    return minimize(ViolationObjective{&fam, &x}, y0, cfg);
}

/// Dispatches on cfg.method.
inline FSResult feasibility_seek(const ProblemFamily& fam, const Eigen::VectorXd& x, const Eigen::VectorXd& y0,
                                 const FSConfig& cfg) {
    require_fs_dims(fam, x, y0.size());
    return minimize(ViolationObjective{&fam, &x}, y0, cfg);
}

struct UnrollResult {
    ad::NodeId point;
    FSResult summary;  // summary.point holds the forward value of `point`
};

/// Records K solver iterations starting from the tape node y0. Only the first
/// K' iterations are differentiated; the remaining ones are computed off-tape
/// and attached through a pass-through node, so their Jacobian is the
/// identity. The forward value equals fs_gd / fs_lbfgs with the same config.
inline UnrollResult unroll_fs(const ProblemFamily& fam, const Eigen::VectorXd& x, ad::NodeId y0, const FSConfig& cfg,
                              ad::Tape& tape) {
    cfg.validate();
    require_fs_dims(fam, x, tape.size_of(y0));
    const ViolationObjective obj{&fam, &x};
    TapeBackend tb(tape);
    auto st = detail::initial_state(tb, y0, obj);
    UnrollResult res;
    res.summary.trajectory.push_back(st.value);
    detail::iterate(tb, st, obj, cfg, cfg.tracked_iters, res.summary);

    const bool finished = res.summary.converged || res.summary.line_search_failed ||
                          res.summary.iterations >= cfg.max_iters;
    if (finished) {
        res.point = st.s;
        res.summary.point = tape.value(st.s);
        return res;
    }
    PlainBackend pb;
    auto plain = detail::to_plain(tb, st);
    detail::iterate(pb, plain, obj, cfg, cfg.max_iters, res.summary);
    res.point = tape.pass_through(st.s, plain.s);
    res.summary.point = std::move(plain.s);
    return res;
}

}  // namespace fsnet
