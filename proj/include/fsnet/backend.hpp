// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Two interchangeable arithmetic backends. Numerical routines are written once
// as templates over a backend; PlainBackend evaluates on Eigen vectors, while
// TapeBackend records the same operations on an autodiff tape. Both call the
// shared kernels so forward values agree bit for bit.

#pragma once

#include "fsnet/autodiff.hpp"

#include <Eigen/Dense>

namespace fsnet {

struct PlainBackend {
    using Vec = Eigen::VectorXd;
    using Scalar = double;

    static constexpr bool records = false;

    Vec constant(const Eigen::VectorXd& v) { return v; }
    Scalar constant(double v) { return v; }

    const Eigen::VectorXd& value(const Vec& v) const { return v; }
    double value(Scalar s) const { return s; }

    Vec add(const Vec& a, const Vec& b) { return ad::kernels::add(a, b); }
    Vec sub(const Vec& a, const Vec& b) { return ad::kernels::sub(a, b); }
    Vec neg(const Vec& a) { return -a; }
    Vec scale(const Vec& a, double c) { return ad::kernels::scale(a, c); }
    Vec mul(const Vec& a, const Vec& b) { return ad::kernels::mul(a, b); }
    Vec scale_by(const Vec& a, Scalar s) { return ad::kernels::mul(a, Vec::Constant(1, s)); }
    Vec matvec(const Eigen::MatrixXd& m, const Vec& v) { return ad::kernels::matvec(m, v); }
    Vec matvec_t(const Eigen::MatrixXd& m, const Vec& v) { return ad::kernels::matvec_t(m, v); }
    Vec sin(const Vec& a) { return a.array().sin().matrix(); }
    Vec cos(const Vec& a) { return a.array().cos().matrix(); }
    Vec relu(const Vec& a) { return ad::kernels::relu(a); }
    Vec softplus(const Vec& a, double beta) { return ad::kernels::softplus(a, beta); }
    Vec sigmoid(const Vec& a, double beta) { return ad::kernels::sigmoid(a, beta); }
    Vec square(const Vec& a) { return a.cwiseAbs2(); }
    Vec div(const Vec& a, const Vec& b) { return ad::kernels::div(a, b); }
    Vec outer(const Vec& a, const Vec& b) { return ad::kernels::outer(a, b); }
    Vec segment_dot(const Vec& a, const Vec& b) { return ad::kernels::segment_dot(a, b); }
    Vec segment_norm(const Vec& a, Eigen::Index block) { return ad::kernels::segment_norm(a, block); }
    Vec repeat(const Vec& a, Eigen::Index block) { return ad::kernels::repeat(a, block); }

    Scalar dot(const Vec& a, const Vec& b) { return ad::kernels::dot(a, b); }
    Scalar sum(const Vec& a) { return ad::kernels::sum(a); }
    Scalar norm(const Vec& a) { return ad::kernels::norm(a); }

    Scalar add(Scalar a, Scalar b) { return a + b; }
    Scalar sub(Scalar a, Scalar b) { return a - b; }
    Scalar mul(Scalar a, Scalar b) { return a * b; }
    Scalar div(Scalar a, Scalar b) { return a / b; }
    Scalar scale(Scalar a, double c) { return a * c; }
};

struct TapeBackend {
    using Vec = ad::NodeId;
    using Scalar = ad::NodeId;

    static constexpr bool records = true;

    explicit TapeBackend(ad::Tape& t) : tape(&t) {}

    ad::Tape* tape;

    Vec constant(const Eigen::VectorXd& v) { return tape->constant(v); }
    Scalar constant(double v) { return tape->constant(v); }

    const Eigen::VectorXd& value(Vec v) const { return tape->value(v); }

    Vec add(Vec a, Vec b) { return tape->add(a, b); }
    Vec sub(Vec a, Vec b) { return tape->sub(a, b); }
    Vec neg(Vec a) { return tape->neg(a); }
    Vec scale(Vec a, double c) { return tape->scalar_mul(a, c); }
    Vec mul(Vec a, Vec b) { return tape->mul(a, b); }
    Vec scale_by(Vec a, Scalar s) { return tape->mul(a, s); }
    Vec matvec(const Eigen::MatrixXd& m, Vec v) { return tape->const_matvec(m, v); }
    Vec matvec_t(const Eigen::MatrixXd& m, Vec v) { return tape->const_matvec_t(m, v); }
    Vec sin(Vec a) { return tape->sin(a); }
    Vec cos(Vec a) { return tape->cos(a); }
    Vec relu(Vec a) { return tape->relu(a); }
    Vec softplus(Vec a, double beta) { return tape->softplus(a, beta); }
    Vec sigmoid(Vec a, double beta) { return tape->sigmoid(a, beta); }
    Vec square(Vec a) { return tape->square(a); }
    Vec div(Vec a, Vec b) { return tape->div(a, b); }
    Vec outer(Vec a, Vec b) { return tape->outer(a, b); }
    Vec segment_dot(Vec a, Vec b) { return tape->segment_dot(a, b); }
    Vec segment_norm(Vec a, Eigen::Index block) { return tape->segment_norm(a, block); }
    Vec repeat(Vec a, Eigen::Index block) { return tape->repeat(a, block); }

    Scalar dot(Vec a, Vec b) { return tape->dot(a, b); }
    Scalar sum(Vec a) { return tape->sum(a); }
    Scalar norm(Vec a) { return tape->l2_norm(a); }
};

/// Forward value of a backend scalar as a double.
inline double scalar_value(const PlainBackend&, double s) { return s; }
inline double scalar_value(const TapeBackend& b, ad::NodeId s) { return b.tape->scalar(s); }

}  // namespace fsnet
