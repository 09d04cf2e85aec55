// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Parametric problem families
//
//     min_y f(y; x)   s.t.   A y = x,   g(y; x) <= 0,   L <= y <= U
//
// for QP / QCQP / SOCP in convex, smooth nonconvex and nonsmooth nonconvex
// variants, together with the constraint violation function
//
//     phi(y; x) = w_eq ||h(y; x)||^2 + w_ineq ||max(g(y; x), 0)||^2.
//
// Box bounds are ordinary inequality rows of g. Every evaluation routine is a
// template over an arithmetic backend (see backend.hpp) so the same code runs
// on plain vectors and on an autodiff tape.

#pragma once

#include "fsnet/backend.hpp"
#include "fsnet/seed.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace fsnet {

enum class ProblemKind { qp, qcqp, socp };
enum class ProblemVariant { convex, nonconvex, nonsmooth };

inline std::string to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::qp: return "qp";
        case ProblemKind::qcqp: return "qcqp";
        case ProblemKind::socp: return "socp";
    }
    return "?";
}
inline std::string to_string(ProblemVariant v) {
    switch (v) {
        case ProblemVariant::convex: return "convex";
        case ProblemVariant::nonconvex: return "nonconvex";
        case ProblemVariant::nonsmooth: return "nonsmooth-nonconvex";
    }
    return "?";
}
inline ProblemKind parse_kind(const std::string& s) {
    if (s == "qp") return ProblemKind::qp;
    if (s == "qcqp") return ProblemKind::qcqp;
    if (s == "socp") return ProblemKind::socp;
    throw std::invalid_argument("unknown problem kind: " + s);
}
inline ProblemVariant parse_variant(const std::string& s) {
    if (s == "convex") return ProblemVariant::convex;
    if (s == "nonconvex") return ProblemVariant::nonconvex;
    if (s == "nonsmooth-nonconvex" || s == "nonsmooth") return ProblemVariant::nonsmooth;
    throw std::invalid_argument("unknown problem variant: " + s);
}

/// G y <= h   (nonconvex: G sin(y) <= h * cos(x))
struct QpData {
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
};

/// y^T H_i y + g_i^T y <= h_i   (nonconvex: g_i^T cos(y)). H holds the H_i
/// stacked vertically, (n_ineq * n) x n; rows of g are the g_i.
struct QcqpData {
    Eigen::MatrixXd H;
    Eigen::MatrixXd g;
    Eigen::VectorXd h;
};

/// ||G_i y + h_i|| <= c_i^T y + d_i   (nonconvex: G_i cos(y)). G and h hold the
/// cone blocks stacked, each block `rows` high.
struct SocpData {
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    Eigen::MatrixXd c;
    Eigen::VectorXd d;
    int rows = 10;
};

using InequalityData = std::variant<QpData, QcqpData, SocpData>;

struct ProblemFamily {
    ProblemKind kind = ProblemKind::qp;
    ProblemVariant variant = ProblemVariant::convex;
    int n = 0;
    int n_eq = 0;
    int n_ineq = 0;
    std::uint64_t seed = 0;

    Eigen::MatrixXd Q;
    Eigen::VectorXd p;
    Eigen::MatrixXd A;
    InequalityData ineq;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double lambda = 0.1;  // weight of the l2 term in the nonsmooth variant

    double w_eq = 10.0;
    double w_ineq = 10.0;

    /// 0 selects the exact positive part max(g, 0) inside phi; a positive
    /// value replaces it by softplus(g; beta) (twice differentiable).
    double softplus_beta = 0.0;
    /// When true phi and the inequality rows ignore g and the box entirely.
    bool drop_inequalities = false;

    /// Number of inequality rows including the 2n box rows.
    int inequality_rows() const { return drop_inequalities ? 0 : n_ineq + 2 * n; }
};

/// Parameter vector x plus a strictly feasible point certifying the instance.
struct Instance {
    Eigen::VectorXd x;
    Eigen::VectorXd interior;
    std::uint64_t seed = 0;
};

/// Inequality values split into the problem rows and the two box blocks.
template <class V>
struct IneqParts {
    V core;   // n_ineq rows
    V lower;  // L - y
    V upper;  // y - U
};

struct GenerateOptions {
    int cone_rows = 10;
    double lambda = 0.1;
    double bound = 5.0;
    double w_eq = 10.0;
    double w_ineq = 10.0;
    /// Slack added to the right-hand sides when the family is built. Large
    /// enough that sampled points rarely need shrinking, so the instances
    /// spread over the box and optimal values stay away from zero.
    double rhs_margin = 4.0;
};

namespace detail {

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

/// (D^T D + n I) / ||.||_2 with standard normal D: SPD, spectrum in (0, 1].
inline Eigen::MatrixXd spd_matrix(std::mt19937_64& rng, int n) {
    const Eigen::MatrixXd d = gaussian(rng, n, n, 1.0);
    Eigen::MatrixXd q = d.transpose() * d + static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
    q = 0.5 * (q + q.transpose());
    const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    return q / top;
}

/// Right-hand side of the nonconvex QP rows: h_i * cos(x_{i mod n_eq}).
inline Eigen::VectorXd cos_rhs(const Eigen::VectorXd& h, const Eigen::VectorXd& x) {
    Eigen::VectorXd out(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) out[i] = h[i] * std::cos(x[i % x.size()]);
    return out;
}

}  // namespace detail

// --- evaluation templates ------------------------------------------------------

template <class B>
typename B::Vec equality_residual(const ProblemFamily& fam, B& b, const typename B::Vec& y,
                                  const Eigen::VectorXd& x) {
    return b.sub(b.matvec(fam.A, y), b.constant(x));
}

/// Problem inequality rows g(y; x) excluding the box.
template <class B>
typename B::Vec core_inequalities(const ProblemFamily& fam, B& b, const typename B::Vec& y,
                                  const Eigen::VectorXd& x) {
    const bool convex = fam.variant == ProblemVariant::convex;
    return std::visit(
        [&](const auto& d) -> typename B::Vec {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, QpData>) {
                if (convex) return b.sub(b.matvec(d.G, y), b.constant(d.h));
                return b.sub(b.matvec(d.G, b.sin(y)), b.constant(detail::cos_rhs(d.h, x)));
            } else if constexpr (std::is_same_v<T, QcqpData>) {
                auto quad = b.segment_dot(b.matvec(d.H, y), y);
                auto lin = convex ? b.matvec(d.g, y) : b.matvec(d.g, b.cos(y));
                return b.sub(b.add(quad, lin), b.constant(d.h));
            } else {
                auto z = convex ? y : b.cos(y);
                auto r = b.add(b.matvec(d.G, z), b.constant(d.h));
                auto nr = b.segment_norm(r, d.rows);
                return b.sub(b.sub(nr, b.matvec(d.c, y)), b.constant(d.d));
            }
        },
        fam.ineq);
}

template <class B>
IneqParts<typename B::Vec> inequalities(const ProblemFamily& fam, B& b, const typename B::Vec& y,
                                        const Eigen::VectorXd& x) {
    return {core_inequalities(fam, b, y, x), b.sub(b.constant(fam.lower), y), b.sub(y, b.constant(fam.upper))};
}

/// J_core(y)^T w for the problem inequality rows.
template <class B>
typename B::Vec core_inequality_vjp(const ProblemFamily& fam, B& b, const typename B::Vec& y,
                                    const typename B::Vec& w) {
    const bool convex = fam.variant == ProblemVariant::convex;
    return std::visit(
        [&](const auto& d) -> typename B::Vec {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, QpData>) {
                if (convex) return b.matvec_t(d.G, w);
                return b.mul(b.cos(y), b.matvec_t(d.G, w));
            } else if constexpr (std::is_same_v<T, QcqpData>) {
                // sum_i w_i (H_i + H_i^T) y = 2 H_stacked^T (w (x) y) for symmetric H_i
                auto quad = b.scale(b.matvec_t(d.H, b.outer(w, y)), 2.0);
                auto lin = b.matvec_t(d.g, w);
                if (!convex) lin = b.neg(b.mul(b.sin(y), lin));
                return b.add(quad, lin);
            } else {
                auto z = convex ? y : b.cos(y);
                auto r = b.add(b.matvec(d.G, z), b.constant(d.h));
                auto nr = b.segment_norm(r, d.rows);
                auto weighted = b.div(b.mul(r, b.repeat(w, d.rows)), b.repeat(nr, d.rows));
                auto cone = b.matvec_t(d.G, weighted);
                if (!convex) cone = b.neg(b.mul(b.sin(y), cone));
                return b.sub(cone, b.matvec_t(d.c, w));
            }
        },
        fam.ineq);
}

template <class B>
typename B::Scalar objective(const ProblemFamily& fam, B& b, const typename B::Vec& y) {
    auto quad = b.scale(b.dot(y, b.matvec(fam.Q, y)), 0.5);
    auto p = b.constant(fam.p);
    auto lin = fam.variant == ProblemVariant::convex ? b.dot(p, y) : b.dot(p, b.sin(y));
    auto f = b.add(quad, lin);
    if (fam.variant == ProblemVariant::nonsmooth) f = b.add(f, b.scale(b.norm(y), fam.lambda));
    return f;
}

namespace detail {
template <class B>
typename B::Vec positive_part(const ProblemFamily& fam, B& b, const typename B::Vec& v) {
    return fam.softplus_beta > 0.0 ? b.softplus(v, fam.softplus_beta) : b.relu(v);
}
// d/dv of positive_part(v)^2 / 2
template <class B>
typename B::Vec positive_part_grad(const ProblemFamily& fam, B& b, const typename B::Vec& v) {
    if (fam.softplus_beta > 0.0)
        return b.mul(b.softplus(v, fam.softplus_beta), b.sigmoid(v, fam.softplus_beta));
    return b.relu(v);
}
}  // namespace detail

/// w_eq ||h||^2 + w_ineq ||g+||^2 with explicit weights.
template <class B>
typename B::Scalar weighted_violation(const ProblemFamily& fam, B& b, const typename B::Vec& y,
                                      const Eigen::VectorXd& x, double w_eq, double w_ineq) {
    auto h = equality_residual(fam, b, y, x);
    auto phi = b.scale(b.dot(h, h), w_eq);
    if (fam.drop_inequalities) return phi;
    auto g = inequalities(fam, b, y, x);
    auto pc = detail::positive_part(fam, b, g.core);
    auto pl = detail::positive_part(fam, b, g.lower);
    auto pu = detail::positive_part(fam, b, g.upper);
    auto ineq = b.add(b.add(b.dot(pc, pc), b.dot(pl, pl)), b.dot(pu, pu));
    return b.add(phi, b.scale(ineq, w_ineq));
}

/// phi(y; x)
template <class B>
typename B::Scalar violation(const ProblemFamily& fam, B& b, const typename B::Vec& y, const Eigen::VectorXd& x) {
    return weighted_violation(fam, b, y, x, fam.w_eq, fam.w_ineq);
}

/// Analytic grad_y phi(y; x), expressed in backend operations so that it can
/// itself be differentiated when recorded on a tape.
template <class B>
typename B::Vec violation_gradient(const ProblemFamily& fam, B& b, const typename B::Vec& y,
                                   const Eigen::VectorXd& x) {
    auto h = equality_residual(fam, b, y, x);
    auto grad = b.scale(b.matvec_t(fam.A, h), 2.0 * fam.w_eq);
    if (fam.drop_inequalities) return grad;
    auto g = inequalities(fam, b, y, x);
    auto wc = detail::positive_part_grad(fam, b, g.core);
    auto wl = detail::positive_part_grad(fam, b, g.lower);
    auto wu = detail::positive_part_grad(fam, b, g.upper);
    auto ineq = b.add(b.sub(core_inequality_vjp(fam, b, y, wc), wl), wu);
    return b.add(grad, b.scale(ineq, 2.0 * fam.w_ineq));
}

// --- plain convenience wrappers ------------------------------------------------------

inline void require_dims(const ProblemFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
    if (y.size() != fam.n) throw std::invalid_argument("decision vector has wrong dimension");
    if (x.size() != fam.n_eq) throw std::invalid_argument("parameter vector has wrong dimension");
}

inline double objective(const ProblemFamily& fam, const Eigen::VectorXd& y) {
    if (y.size() != fam.n) throw std::invalid_argument("objective: dimension mismatch");
    PlainBackend b;
    return objective(fam, b, y);
}

/// Differentiable objective on a tape.
inline ad::NodeId objective(const ProblemFamily& fam, ad::Tape& tape, ad::NodeId y) {
    if (tape.size_of(y) != fam.n) throw std::invalid_argument("objective: dimension mismatch");
    TapeBackend b(tape);
    return objective(fam, b, y);
}

inline Eigen::VectorXd objective_gradient(const ProblemFamily& fam, const Eigen::VectorXd& y) {
    Eigen::VectorXd g = fam.Q * y;
    if (fam.variant == ProblemVariant::convex)
        g += fam.p;
    else
        g += fam.p.cwiseProduct(y.array().cos().matrix());
    if (fam.variant == ProblemVariant::nonsmooth) g += fam.lambda * y / std::max(y.norm(), ad::kNormFloor);
    return g;
}

/// h(y; x) and the full inequality vector g(y; x) = [core; L - y; y - U].
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> constraints(const ProblemFamily& fam, const Eigen::VectorXd& y,
                                                               const Eigen::VectorXd& x) {
    require_dims(fam, y, x);
    PlainBackend b;
    Eigen::VectorXd h = equality_residual(fam, b, y, x);
    if (fam.drop_inequalities) return {h, Eigen::VectorXd(0)};
    auto parts = inequalities(fam, b, y, x);
    Eigen::VectorXd g(fam.inequality_rows());
    g << parts.core, parts.lower, parts.upper;
    return {h, g};
}

/// J_g(y)^T w for the full inequality vector (core rows then box rows).
inline Eigen::VectorXd inequality_vjp(const ProblemFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (fam.drop_inequalities) return Eigen::VectorXd::Zero(fam.n);
    PlainBackend b;
    Eigen::VectorXd core = core_inequality_vjp(fam, b, y, Eigen::VectorXd(w.head(fam.n_ineq)));
    return core - w.segment(fam.n_ineq, fam.n) + w.tail(fam.n);
}

inline double violation(const ProblemFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
    require_dims(fam, y, x);
    PlainBackend b;
    return violation(fam, b, y, x);
}

inline ad::NodeId violation(const ProblemFamily& fam, ad::Tape& tape, ad::NodeId y, const Eigen::VectorXd& x) {
    if (tape.size_of(y) != fam.n || x.size() != fam.n_eq) throw std::invalid_argument("violation: dimension mismatch");
    TapeBackend b(tape);
    return violation(fam, b, y, x);
}

inline Eigen::VectorXd violation_gradient(const ProblemFamily& fam, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& x) {
    require_dims(fam, y, x);
    PlainBackend b;
    return violation_gradient(fam, b, y, x);
}

struct ViolationL1 {
    double eq = 0.0;
    double ineq = 0.0;
    double total() const { return eq + ineq; }
};

/// Unweighted ||h||_1 and ||max(g, 0)||_1 with the exact positive part.
inline ViolationL1 violation_l1(const ProblemFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
    auto [h, g] = constraints(fam, y, x);
    return {h.lpNorm<1>(), g.size() ? g.cwiseMax(0.0).sum() : 0.0};
}

// --- construction ----------------------------------------------------------------

/// Checks the family invariants; throws std::invalid_argument on violation.
inline void validate(const ProblemFamily& fam) {
    if (fam.n < 1 || fam.n_eq < 1 || fam.n_ineq < 1) throw std::invalid_argument("family dimensions must be >= 1");
    if (fam.n < fam.n_eq) throw std::invalid_argument("family requires n >= n_eq");
    if (fam.Q.rows() != fam.n || fam.Q.cols() != fam.n) throw std::invalid_argument("Q has wrong shape");
    if (!fam.Q.isApprox(fam.Q.transpose(), 1e-12)) throw std::invalid_argument("Q is not symmetric");
    if (Eigen::LLT<Eigen::MatrixXd>(fam.Q).info() != Eigen::Success) throw std::invalid_argument("Q is not SPD");
    if (fam.A.rows() != fam.n_eq || fam.A.cols() != fam.n) throw std::invalid_argument("A has wrong shape");
    if (Eigen::FullPivLU<Eigen::MatrixXd>(fam.A).rank() != fam.n_eq)
        throw std::invalid_argument("A does not have full row rank");
    if (fam.lower.size() != fam.n || fam.upper.size() != fam.n || !(fam.lower.array() < fam.upper.array()).all())
        throw std::invalid_argument("bounds must satisfy L < U");
    if (!(fam.w_eq > 0.0) || !(fam.w_ineq > 0.0)) throw std::invalid_argument("violation weights must be positive");
    if (const auto* q = std::get_if<QcqpData>(&fam.ineq)) {
        for (int i = 0; i < fam.n_ineq; ++i) {
            const Eigen::MatrixXd hi = q->H.block(static_cast<Eigen::Index>(i) * fam.n, 0, fam.n, fam.n);
            if (Eigen::LLT<Eigen::MatrixXd>(hi).info() != Eigen::Success)
                throw std::invalid_argument("QCQP matrix H_i is not SPD");
        }
    }
}

/// Builds a random family. The right-hand sides are chosen so that both the
/// box center and a random reference point are strictly feasible, which makes
/// the shrink-toward-center instance sampler terminate.
inline ProblemFamily generate_family(ProblemKind kind, ProblemVariant variant, int n, int n_eq, int n_ineq,
                                     std::uint64_t seed, const GenerateOptions& opt = {}) {
    if (n < 1 || n_eq < 1 || n_ineq < 1) throw std::invalid_argument("generate_family: dimensions must be >= 1");
    if (n < n_eq) throw std::invalid_argument("generate_family: infeasible dimension request (n < n_eq)");

    ProblemFamily fam;
    fam.kind = kind;
    fam.variant = variant;
    fam.n = n;
    fam.n_eq = n_eq;
    fam.n_ineq = n_ineq;
    fam.seed = seed;
    fam.lambda = opt.lambda;
    fam.w_eq = opt.w_eq;
    fam.w_ineq = opt.w_ineq;
    fam.lower = Eigen::VectorXd::Constant(n, -opt.bound);
    fam.upper = Eigen::VectorXd::Constant(n, opt.bound);

    std::mt19937_64 rng(derive_seed(seed, "family"));
    const double sd = 1.0 / std::sqrt(static_cast<double>(n));
    fam.Q = detail::spd_matrix(rng, n);
    fam.p = detail::gaussian(rng, n, 1, sd);
    do {
        fam.A = detail::gaussian(rng, n_eq, n, sd);
    } while (Eigen::FullPivLU<Eigen::MatrixXd>(fam.A).rank() != n_eq);

    std::uniform_real_distribution<double> unif(-opt.bound, opt.bound);
    Eigen::VectorXd y_ref(n);
    for (int i = 0; i < n; ++i) y_ref[i] = 0.5 * unif(rng);
    const Eigen::VectorXd center = 0.5 * (fam.lower + fam.upper);

    // Provisional data with zero right-hand sides; the rows are then evaluated
    // at the reference point and at the center to set the rhs.
    switch (kind) {
        case ProblemKind::qp:
            fam.ineq = QpData{detail::gaussian(rng, n_ineq, n, sd), Eigen::VectorXd::Zero(n_ineq)};
            break;
        case ProblemKind::qcqp: {
            QcqpData q;
            q.H.resize(static_cast<Eigen::Index>(n_ineq) * n, n);
            for (int i = 0; i < n_ineq; ++i)
                q.H.block(static_cast<Eigen::Index>(i) * n, 0, n, n) = detail::spd_matrix(rng, n) / static_cast<double>(n);
            q.g = detail::gaussian(rng, n_ineq, n, sd);
            q.h = Eigen::VectorXd::Zero(n_ineq);
            fam.ineq = std::move(q);
            break;
        }
        case ProblemKind::socp: {
            SocpData s;
            s.rows = opt.cone_rows;
            s.G = detail::gaussian(rng, static_cast<Eigen::Index>(n_ineq) * s.rows, n, sd);
            s.h = detail::gaussian(rng, static_cast<Eigen::Index>(n_ineq) * s.rows, 1, sd);
            s.c = detail::gaussian(rng, n_ineq, n, sd);
            s.d = Eigen::VectorXd::Zero(n_ineq);
            fam.ineq = std::move(s);
            break;
        }
    }

    PlainBackend b;
    const Eigen::VectorXd x_ref = fam.A * y_ref;
    const Eigen::VectorXd x_center = fam.A * center;
    // For QP the nonconvex rhs is h * cos(x); with rhs = 0 the rows read g = lhs.
    const Eigen::VectorXd at_ref = core_inequalities(fam, b, y_ref, x_ref);
    const Eigen::VectorXd at_center = core_inequalities(fam, b, center, x_center);
    const Eigen::VectorXd rhs = at_ref.cwiseMax(at_center).cwiseMax(0.0).array() + opt.rhs_margin;
    std::visit(
        [&](auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, SocpData>)
                d.d = rhs;
            else
                d.h = rhs;
        },
        fam.ineq);
    validate(fam);
    return fam;
}

struct SampleOptions {
    double box_inset = 0.5;     // y0 drawn from [L + inset, U - inset]
    double min_margin = 1e-3;   // required strict slack on every inequality
    double shrink = 0.9;        // y0 <- c + shrink (y0 - c)
    int max_shrink_steps = 200;
};

/// Draws y0, shrinks it toward the box center until strictly feasible, and
/// sets x := A y0, so every instance has a known feasible point.
inline Instance sample_instance(const ProblemFamily& fam, std::uint64_t seed, const SampleOptions& opt = {}) {
    std::mt19937_64 rng(derive_seed(seed, "instance"));
    Eigen::VectorXd y(fam.n);
    for (int i = 0; i < fam.n; ++i) {
        std::uniform_real_distribution<double> u(fam.lower[i] + opt.box_inset, fam.upper[i] - opt.box_inset);
        y[i] = u(rng);
    }
    const Eigen::VectorXd center = 0.5 * (fam.lower + fam.upper);
    for (int step = 0; step <= opt.max_shrink_steps; ++step) {
        const Eigen::VectorXd x = fam.A * y;
        auto [h, g] = constraints(fam, y, x);
        if (g.size() == 0 || g.maxCoeff() <= -opt.min_margin) return Instance{x, y, seed};
        y = center + opt.shrink * (y - center);
    }
    throw std::runtime_error("sample_instance: margin unreachable after shrink steps; regenerate the family");
}

/// Instance invariant: A * interior == x and strict inequality margin.
inline bool instance_is_valid(const ProblemFamily& fam, const Instance& inst, double margin = 1e-3) {
    if (inst.x.size() != fam.n_eq || inst.interior.size() != fam.n) return false;
    auto [h, g] = constraints(fam, inst.interior, inst.x);
    return h.cwiseAbs().maxCoeff() <= 1e-10 && (g.size() == 0 || g.maxCoeff() <= -margin);
}

/// Copy of the family whose violation function only measures A y = x.
inline ProblemFamily equality_only(ProblemFamily fam) {
    fam.drop_inequalities = true;
    return fam;
}

}  // namespace fsnet
