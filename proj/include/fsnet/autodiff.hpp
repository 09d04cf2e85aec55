// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode automatic differentiation over f64 vectors.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsnet::ad {

/// Index of a recorded value inside its owning Tape.
struct NodeId {
    std::uint32_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
    leaf,
    constant,
    add,
    sub,
    neg,
    scalar_mul,      // x * c, c a plain double
    mul,             // elementwise, either side may be a 1-vector
    div,             // elementwise, either side may be a 1-vector
    matvec,          // row-major matrix node times vector node
    const_matvec,    // constant matrix times vector node
    const_matvec_t,  // transposed constant matrix times vector node
    affine,          // W x + b with W, b read from a slice of a parameter leaf
    dot,
    sum,
    sin,
    cos,
    exp,
    log,
    sqrt,
    relu,  // max(x, 0)
    softplus,
    sigmoid,
    l2_norm,
    silu,
    square,
    stop_gradient,
    pass_through,  // forward value supplied by caller, identity backward
    outer,         // flattened row-major outer product a b^T
    segment_dot,   // block-wise dot of a (m*n) with b (n)
    segment_norm,  // block-wise l2 norm of a (m*b) with block size b
    repeat,        // each entry repeated block times
};

inline constexpr int kOpKindCount = static_cast<int>(OpKind::repeat) + 1;

inline const char* op_name(OpKind op) {
    static constexpr std::array<const char*, kOpKindCount> names{
        "leaf",     "constant", "add",      "sub",          "neg",          "scalar_mul",
        "mul",      "div",      "matvec",   "const_matvec", "const_matvec_t", "affine",
        "dot",      "sum",      "sin",      "cos",          "exp",          "log",
        "sqrt",     "relu",     "softplus", "sigmoid",      "l2_norm",      "silu",
        "square",   "stop_gradient", "pass_through", "outer", "segment_dot", "segment_norm",
        "repeat"};
    const auto i = static_cast<int>(op);
    if (i < 0 || i >= kOpKindCount) throw std::invalid_argument("unknown op-kind");
    return names[static_cast<std::size_t>(i)];
}

/// Guard used by the l2-norm backward rule: d||y||/dy = y / max(||y||, kNormFloor).
inline constexpr double kNormFloor = 1e-12;

/// Default sharpness of softplus(x; beta) = log(1 + exp(beta x)) / beta.
inline constexpr double kDefaultSoftplusBeta = 50.0;

// Forward kernels shared by the tape and by plain evaluation so that both
// paths execute identical floating point operations.
namespace kernels {

using Vec = Eigen::VectorXd;

inline double softplus(double v, double beta) {
    const double z = beta * v;
    return (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) / beta;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline Vec add(const Vec& a, const Vec& b) { return a + b; }
inline Vec sub(const Vec& a, const Vec& b) { return a - b; }
inline Vec scale(const Vec& a, double c) { return a * c; }
inline Vec mul(const Vec& a, const Vec& b) {
    if (a.size() == b.size()) return a.cwiseProduct(b);
    if (b.size() == 1) return a * b[0];
    return b * a[0];
}
inline Vec div(const Vec& a, const Vec& b) {
    if (a.size() == b.size()) return a.cwiseQuotient(b);
    if (b.size() == 1) return a / b[0];
    return Vec::Constant(b.size(), a[0]).cwiseQuotient(b);
}
inline double dot(const Vec& a, const Vec& b) { return a.dot(b); }
inline double sum(const Vec& a) { return a.sum(); }
inline double norm(const Vec& a) { return std::sqrt(a.squaredNorm()); }
inline Vec matvec(const Eigen::MatrixXd& m, const Vec& v) { return m * v; }
inline Vec matvec_t(const Eigen::MatrixXd& m, const Vec& v) { return m.transpose() * v; }
inline Vec relu(const Vec& a) { return a.cwiseMax(0.0); }
inline Vec softplus(const Vec& a, double beta) {
    return a.unaryExpr([beta](double v) { return softplus(v, beta); });
}
inline Vec sigmoid(const Vec& a, double beta) {
    return a.unaryExpr([beta](double v) { return sigmoid(beta * v); });
}
inline Vec silu(const Vec& a) {
    return a.unaryExpr([](double v) { return v * sigmoid(v); });
}
inline Vec outer(const Vec& a, const Vec& b) {
    Vec out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
    return out;
}
inline Vec segment_dot(const Vec& a, const Vec& b) {
    const Eigen::Index m = a.size() / b.size();
    Vec out(m);
    for (Eigen::Index i = 0; i < m; ++i) out[i] = a.segment(i * b.size(), b.size()).dot(b);
    return out;
}
inline Vec segment_norm(const Vec& a, Eigen::Index block) {
    const Eigen::Index m = a.size() / block;
    Vec out(m);
    for (Eigen::Index i = 0; i < m; ++i) out[i] = std::sqrt(a.segment(i * block, block).squaredNorm());
    return out;
}
inline Vec repeat(const Vec& a, Eigen::Index block) {
    Vec out(a.size() * block);
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * block, block).setConstant(a[i]);
    return out;
}

}  // namespace kernels

/// Adjoints produced by Tape::backward, indexed by node.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(std::vector<Eigen::VectorXd> adjoints, std::vector<Eigen::Index> sizes)
        : adjoints_(std::move(adjoints)), sizes_(std::move(sizes)) {}

    /// d root / d node; zeros when the node does not influence the root.
    Eigen::VectorXd wrt(NodeId id) const {
        const auto& a = adjoints_.at(id.index);
        if (a.size() == 0) return Eigen::VectorXd::Zero(sizes_[id.index]);
        return a;
    }
    bool touched(NodeId id) const { return adjoints_.at(id.index).size() != 0; }

private:
    std::vector<Eigen::VectorXd> adjoints_;
    std::vector<Eigen::Index> sizes_;
};

/// Append-only computation record. Nodes are topologically ordered by
/// construction: every input index is smaller than the node's own index.
/// A tape is single-owner; build separate tapes for concurrent work.
class Tape {
public:
    using Vec = Eigen::VectorXd;
    using Mat = Eigen::MatrixXd;

    Tape() { nodes_.reserve(1024); }

    std::size_t size() const { return nodes_.size(); }
    std::size_t leaf_count() const { return leaves_.size(); }
    const std::vector<NodeId>& leaves() const { return leaves_; }

    void clear() {
        nodes_.clear();
        leaves_.clear();
    }

    // --- leaves and constants -------------------------------------------------

    NodeId leaf(Vec value) { return push_leaf(std::move(value), nullptr, 0); }
    NodeId leaf(double value) { return leaf(Vec::Constant(1, value)); }

    /// Leaf whose value lives in caller-owned storage (e.g. model parameters).
    /// The storage must outlive the tape and stay unchanged while recorded.
    NodeId external_leaf(std::span<const double> data) {
        return push_leaf(Vec{}, data.data(), static_cast<Eigen::Index>(data.size()));
    }

    /// A matrix-valued leaf stored row-major, for use with matvec.
    NodeId matrix_leaf(const Mat& m) {
        Vec flat(m.size());
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat.data(), m.rows(), m.cols()) = m;
        const NodeId id = leaf(std::move(flat));
        nodes_.back().rows = m.rows();
        nodes_.back().cols = m.cols();
        return id;
    }

    NodeId constant(Vec value) {
        Node n;
        n.op = OpKind::constant;
        n.value = std::move(value);
        return push(std::move(n));
    }
    NodeId constant(double value) { return constant(Vec::Constant(1, value)); }

    // --- generic recording ----------------------------------------------------

    /// Records op applied to inputs. Ops that need extra attributes (scalar_mul,
    /// softplus, affine, pass_through, ...) have dedicated methods below.
    NodeId record(OpKind op, std::span<const NodeId> inputs) {
        auto need = [&](std::size_t k) {
            if (inputs.size() != k)
                throw std::invalid_argument(std::string("wrong input count for ") + op_name(op));
        };
        switch (op) {
            case OpKind::add: need(2); return add(inputs[0], inputs[1]);
            case OpKind::sub: need(2); return sub(inputs[0], inputs[1]);
            case OpKind::neg: need(1); return neg(inputs[0]);
            case OpKind::mul: need(2); return mul(inputs[0], inputs[1]);
            case OpKind::div: need(2); return div(inputs[0], inputs[1]);
            case OpKind::matvec: need(2); return matvec(inputs[0], inputs[1]);
            case OpKind::dot: need(2); return dot(inputs[0], inputs[1]);
            case OpKind::sum: need(1); return sum(inputs[0]);
            case OpKind::sin: need(1); return sin(inputs[0]);
            case OpKind::cos: need(1); return cos(inputs[0]);
            case OpKind::exp: need(1); return exp(inputs[0]);
            case OpKind::log: need(1); return log(inputs[0]);
            case OpKind::sqrt: need(1); return sqrt(inputs[0]);
            case OpKind::relu: need(1); return relu(inputs[0]);
            case OpKind::softplus: need(1); return softplus(inputs[0]);
            case OpKind::sigmoid: need(1); return sigmoid(inputs[0]);
            case OpKind::l2_norm: need(1); return l2_norm(inputs[0]);
            case OpKind::silu: need(1); return silu(inputs[0]);
            case OpKind::square: need(1); return square(inputs[0]);
            case OpKind::stop_gradient: need(1); return stop_gradient(inputs[0]);
            case OpKind::outer: need(2); return outer(inputs[0], inputs[1]);
            case OpKind::segment_dot: need(2); return segment_dot(inputs[0], inputs[1]);
            default:
                break;
        }
        throw std::invalid_argument(std::string("op-kind not recordable generically: ") + op_name(op));
    }

    // --- arithmetic -------------------------------------------------------------

    NodeId add(NodeId a, NodeId b) {
        require_same(a, b, "add");
        return unary_or_binary(OpKind::add, a, b, kernels::add(val(a), val(b)));
    }
    NodeId sub(NodeId a, NodeId b) {
        require_same(a, b, "sub");
        return unary_or_binary(OpKind::sub, a, b, kernels::sub(val(a), val(b)));
    }
    NodeId neg(NodeId a) { return unary(OpKind::neg, a, -val(a)); }
    NodeId scalar_mul(NodeId a, double c) {
        NodeId id = unary(OpKind::scalar_mul, a, kernels::scale(val(a), c));
        nodes_.back().param = c;
        return id;
    }
    NodeId mul(NodeId a, NodeId b) {
        require_broadcast(a, b, "mul");
        return unary_or_binary(OpKind::mul, a, b, kernels::mul(val(a), val(b)));
    }
    NodeId div(NodeId a, NodeId b) {
        require_broadcast(a, b, "div");
        return unary_or_binary(OpKind::div, a, b, kernels::div(val(a), val(b)));
    }

    NodeId matvec(NodeId m, NodeId v) {
        const Node& mn = node(m);
        if (mn.rows == 0 || mn.cols != val(v).size())
            throw std::invalid_argument("matvec: shape mismatch");
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
            data(m), mn.rows, mn.cols);
        Vec out = w * val(v);
        return unary_or_binary(OpKind::matvec, m, v, std::move(out));
    }

    /// m is referenced, not copied: it must outlive the tape.
    NodeId const_matvec(const Mat& m, NodeId v) {
        if (m.cols() != val(v).size()) throw std::invalid_argument("const_matvec: shape mismatch");
        NodeId id = unary(OpKind::const_matvec, v, kernels::matvec(m, val(v)));
        nodes_.back().matrix = &m;
        return id;
    }
    NodeId const_matvec_t(const Mat& m, NodeId v) {
        if (m.rows() != val(v).size()) throw std::invalid_argument("const_matvec_t: shape mismatch");
        NodeId id = unary(OpKind::const_matvec_t, v, kernels::matvec_t(m, val(v)));
        nodes_.back().matrix = &m;
        return id;
    }

    /// W x + b where W (rows x cols, row-major) and b (rows) are stored
    /// consecutively in params starting at offset.
    NodeId affine(NodeId params, NodeId x, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
        const Eigen::Index need = static_cast<Eigen::Index>(offset) + rows * cols + rows;
        if (size_of(params) < need || size_of(x) != cols)
            throw std::invalid_argument("affine: shape mismatch");
        const double* p = data(params) + offset;
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(p, rows, cols);
        Eigen::Map<const Vec> b(p + rows * cols, rows);
        Vec out = w * val(x) + b;
        NodeId id = unary_or_binary(OpKind::affine, params, x, std::move(out));
        Node& n = nodes_.back();
        n.offset = offset;
        n.rows = rows;
        n.cols = cols;
        return id;
    }

    NodeId dot(NodeId a, NodeId b) {
        require_same(a, b, "dot");
        return unary_or_binary(OpKind::dot, a, b, Vec::Constant(1, kernels::dot(val(a), val(b))));
    }
    NodeId sum(NodeId a) { return unary(OpKind::sum, a, Vec::Constant(1, kernels::sum(val(a)))); }

    NodeId sin(NodeId a) { return unary(OpKind::sin, a, val(a).array().sin().matrix()); }
    NodeId cos(NodeId a) { return unary(OpKind::cos, a, val(a).array().cos().matrix()); }
    NodeId exp(NodeId a) { return unary(OpKind::exp, a, val(a).array().exp().matrix()); }
    NodeId log(NodeId a) { return unary(OpKind::log, a, val(a).array().log().matrix()); }
    NodeId sqrt(NodeId a) { return unary(OpKind::sqrt, a, val(a).array().sqrt().matrix()); }
    NodeId relu(NodeId a) { return unary(OpKind::relu, a, kernels::relu(val(a))); }
    NodeId softplus(NodeId a, double beta = kDefaultSoftplusBeta) {
        NodeId id = unary(OpKind::softplus, a, kernels::softplus(val(a), beta));
        nodes_.back().param = beta;
        return id;
    }
    /// sigmoid(beta * x)
    NodeId sigmoid(NodeId a, double beta = 1.0) {
        NodeId id = unary(OpKind::sigmoid, a, kernels::sigmoid(val(a), beta));
        nodes_.back().param = beta;
        return id;
    }
    NodeId l2_norm(NodeId a) { return unary(OpKind::l2_norm, a, Vec::Constant(1, kernels::norm(val(a)))); }
    NodeId silu(NodeId a) { return unary(OpKind::silu, a, kernels::silu(val(a))); }
    NodeId square(NodeId a) { return unary(OpKind::square, a, val(a).cwiseAbs2()); }

    NodeId outer(NodeId a, NodeId b) { return unary_or_binary(OpKind::outer, a, b, kernels::outer(val(a), val(b))); }
    NodeId segment_dot(NodeId a, NodeId b) {
        if (size_of(b) == 0 || size_of(a) % size_of(b) != 0)
            throw std::invalid_argument("segment_dot: shape mismatch");
        return unary_or_binary(OpKind::segment_dot, a, b, kernels::segment_dot(val(a), val(b)));
    }
    NodeId segment_norm(NodeId a, Eigen::Index block) {
        if (block <= 0 || size_of(a) % block != 0) throw std::invalid_argument("segment_norm: shape mismatch");
        NodeId id = unary(OpKind::segment_norm, a, kernels::segment_norm(val(a), block));
        nodes_.back().cols = block;
        return id;
    }
    NodeId repeat(NodeId a, Eigen::Index block) {
        if (block <= 0) throw std::invalid_argument("repeat: block must be positive");
        NodeId id = unary(OpKind::repeat, a, kernels::repeat(val(a), block));
        nodes_.back().cols = block;
        return id;
    }

    /// Same forward value; contributes nothing to any adjoint upstream.
    NodeId stop_gradient(NodeId a) { return unary(OpKind::stop_gradient, a, val(a)); }

    /// Forward value is `value`; backward passes the adjoint to `a` unchanged.
    NodeId pass_through(NodeId a, Vec value) {
        if (value.size() != size_of(a)) throw std::invalid_argument("pass_through: shape mismatch");
        return unary(OpKind::pass_through, a, std::move(value));
    }

    // --- access -----------------------------------------------------------------

    /// Value of an owned (non-external) node.
    const Vec& value(NodeId id) const {
        const Node& n = node(id);
        if (n.external) throw std::logic_error("value(): node is an external leaf; use values()");
        return n.value;
    }
    std::span<const double> values(NodeId id) const {
        return {data(id), static_cast<std::size_t>(size_of(id))};
    }
    double scalar(NodeId id) const {
        const Vec& v = value(id);
        if (v.size() != 1) throw std::invalid_argument("scalar(): node is not a scalar");
        return v[0];
    }
    Eigen::Index size_of(NodeId id) const {
        const Node& n = node(id);
        return n.external ? n.external_size : n.value.size();
    }
    OpKind op(NodeId id) const { return node(id).op; }
    std::vector<NodeId> inputs(NodeId id) const {
        const Node& n = node(id);
        std::vector<NodeId> out;
        for (int i = 0; i < n.arity; ++i) out.push_back(NodeId{n.in[static_cast<std::size_t>(i)]});
        return out;
    }

    /// Reverse accumulation from a scalar root.
    Gradients backward(NodeId root) const {
        if (size_of(root) != 1) throw std::invalid_argument("backward: root is not a scalar");
        return backward(root, Vec::Constant(1, 1.0));
    }

    /// Vector-Jacobian product: seed is d(loss)/d(root).
    Gradients backward(NodeId root, const Vec& seed) const {
        if (seed.size() != size_of(root)) throw std::invalid_argument("backward: seed shape mismatch");
        std::vector<Vec> adj(root.index + 1);
        adj[root.index] = seed;
        for (std::uint32_t i = root.index + 1; i-- > 0;) {
            if (adj[i].size() == 0) continue;
            propagate(i, adj);
        }
        std::vector<Eigen::Index> sizes(adj.size());
        for (std::size_t i = 0; i < adj.size(); ++i) sizes[i] = size_of(NodeId{static_cast<std::uint32_t>(i)});
        return Gradients(std::move(adj), std::move(sizes));
    }

    /// Recomputes every node from its inputs and returns the largest absolute
    /// deviation from the cached values (0 for a consistent tape).
    double replay_deviation() const;

private:
    struct Node {
        OpKind op = OpKind::leaf;
        std::uint8_t arity = 0;
        std::array<std::uint32_t, 2> in{};
        double param = 0.0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        std::size_t offset = 0;
        const Mat* matrix = nullptr;
        Vec value;
        const double* external = nullptr;
        Eigen::Index external_size = 0;
    };

    const Node& node(NodeId id) const {
        if (id.index >= nodes_.size()) throw std::out_of_range("NodeId does not belong to this tape");
        return nodes_[id.index];
    }
    const Vec& val(NodeId id) const { return value(id); }
    const double* data(NodeId id) const {
        const Node& n = node(id);
        return n.external ? n.external : n.value.data();
    }

    void require_same(NodeId a, NodeId b, const char* what) const {
        if (size_of(a) != size_of(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
    void require_broadcast(NodeId a, NodeId b, const char* what) const {
        const auto sa = size_of(a), sb = size_of(b);
        if (sa != sb && sa != 1 && sb != 1) throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }
    NodeId push_leaf(Vec value, const double* external, Eigen::Index external_size) {
        Node n;
        n.op = OpKind::leaf;
        n.value = std::move(value);
        n.external = external;
        n.external_size = external_size;
        NodeId id = push(std::move(n));
        leaves_.push_back(id);
        return id;
    }
    NodeId unary(OpKind op, NodeId a, Vec value) {
        node(a);
        Node n;
        n.op = op;
        n.arity = 1;
        n.in = {a.index, 0};
        n.value = std::move(value);
        return push(std::move(n));
    }
    NodeId unary_or_binary(OpKind op, NodeId a, NodeId b, Vec value) {
        node(a);
        node(b);
        Node n;
        n.op = op;
        n.arity = 2;
        n.in = {a.index, b.index};
        n.value = std::move(value);
        return push(std::move(n));
    }

    static void accumulate(std::vector<Vec>& adj, std::uint32_t target, const Vec& contribution) {
        Vec& a = adj[target];
        if (a.size() == 0) a = contribution;
        else a += contribution;
    }
    // Adds a contribution that may need reducing to a broadcast scalar input.
    void accumulate_broadcast(std::vector<Vec>& adj, std::uint32_t target, const Vec& contribution) const {
        if (size_of(NodeId{target}) == 1 && contribution.size() != 1)
            accumulate(adj, target, Vec::Constant(1, contribution.sum()));
        else
            accumulate(adj, target, contribution);
    }

    void propagate(std::uint32_t i, std::vector<Vec>& adj) const;

    std::vector<Node> nodes_;
    std::vector<NodeId> leaves_;
};

inline void Tape::propagate(std::uint32_t i, std::vector<Vec>& adj) const {
    const Node& n = nodes_[i];
    const Vec& g = adj[i];
    const std::uint32_t a = n.in[0];
    const std::uint32_t b = n.in[1];
    switch (n.op) {
        case OpKind::leaf:
        case OpKind::constant:
        case OpKind::stop_gradient:
            return;
        case OpKind::add:
            accumulate(adj, a, g);
            accumulate(adj, b, g);
            return;
        case OpKind::sub:
            accumulate(adj, a, g);
            accumulate(adj, b, -g);
            return;
        case OpKind::neg:
            accumulate(adj, a, -g);
            return;
        case OpKind::scalar_mul:
            accumulate(adj, a, g * n.param);
            return;
        case OpKind::mul: {
            const Vec& va = nodes_[a].value;
            const Vec& vb = nodes_[b].value;
            accumulate_broadcast(adj, a, kernels::mul(g, vb));
            accumulate_broadcast(adj, b, kernels::mul(g, va));
            return;
        }
        case OpKind::div: {
            const Vec& va = nodes_[a].value;
            const Vec& vb = nodes_[b].value;
            const Vec ga = kernels::div(g, vb);
            accumulate_broadcast(adj, a, ga);
            // d(a/b)/db = -a / b^2 = -(a/b) / b
            accumulate_broadcast(adj, b, -kernels::mul(ga, kernels::div(va, vb)));
            return;
        }
        case OpKind::matvec: {
            const Eigen::Index rows = nodes_[a].rows, cols = nodes_[a].cols;
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
                data(NodeId{a}), rows, cols);
            const Vec& x = nodes_[b].value;
            Vec gw(rows * cols);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(gw.data(), rows, cols) =
                g * x.transpose();
            accumulate(adj, a, gw);
            accumulate(adj, b, w.transpose() * g);
            return;
        }
        case OpKind::const_matvec:
            accumulate(adj, a, n.matrix->transpose() * g);
            return;
        case OpKind::const_matvec_t:
            accumulate(adj, a, (*n.matrix) * g);
            return;
        case OpKind::affine: {
            const double* p = data(NodeId{a}) + n.offset;
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(p, n.rows,
                                                                                                     n.cols);
            const Vec& x = nodes_[b].value;
            Vec& pa = adj[a];
            if (pa.size() == 0) pa = Vec::Zero(size_of(NodeId{a}));
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
                pa.data() + n.offset, n.rows, n.cols);
            gw.noalias() += g * x.transpose();
            pa.segment(static_cast<Eigen::Index>(n.offset) + n.rows * n.cols, n.rows) += g;
            accumulate(adj, b, w.transpose() * g);
            return;
        }
        case OpKind::dot:
            accumulate(adj, a, nodes_[b].value * g[0]);
            accumulate(adj, b, nodes_[a].value * g[0]);
            return;
        case OpKind::sum:
            accumulate(adj, a, Vec::Constant(size_of(NodeId{a}), g[0]));
            return;
        case OpKind::sin:
            accumulate(adj, a, g.cwiseProduct(nodes_[a].value.array().cos().matrix()));
            return;
        case OpKind::cos:
            accumulate(adj, a, -g.cwiseProduct(nodes_[a].value.array().sin().matrix()));
            return;
        case OpKind::exp:
            accumulate(adj, a, g.cwiseProduct(n.value));
            return;
        case OpKind::log:
            accumulate(adj, a, g.cwiseQuotient(nodes_[a].value));
            return;
        case OpKind::sqrt:
            accumulate(adj, a, (0.5 * g.array() / n.value.array()).matrix());
            return;
        case OpKind::relu: {
            // subgradient 0 at the kink
            const Vec& x = nodes_[a].value;
            accumulate(adj, a, g.cwiseProduct(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; })));
            return;
        }
        case OpKind::softplus:
            accumulate(adj, a, g.cwiseProduct(kernels::sigmoid(nodes_[a].value, n.param)));
            return;
        case OpKind::sigmoid: {
            const Vec s = n.value;
            accumulate(adj, a, (g.array() * n.param * s.array() * (1.0 - s.array())).matrix());
            return;
        }
        case OpKind::l2_norm: {
            const Vec& x = nodes_[a].value;
            accumulate(adj, a, x * (g[0] / std::max(n.value[0], kNormFloor)));
            return;
        }
        case OpKind::silu: {
            const Vec& x = nodes_[a].value;
            Vec d = x.unaryExpr([](double v) {
                const double s = kernels::sigmoid(v);
                return s * (1.0 + v * (1.0 - s));
            });
            accumulate(adj, a, g.cwiseProduct(d));
            return;
        }
        case OpKind::square:
            accumulate(adj, a, 2.0 * g.cwiseProduct(nodes_[a].value));
            return;
        case OpKind::pass_through:
            accumulate(adj, a, g);
            return;
        case OpKind::outer: {
            const Vec& va = nodes_[a].value;
            const Vec& vb = nodes_[b].value;
            const Eigen::Index m = va.size(), k = vb.size();
            Vec ga(m);
            Vec gb = Vec::Zero(k);
            for (Eigen::Index r = 0; r < m; ++r) {
                ga[r] = g.segment(r * k, k).dot(vb);
                gb += va[r] * g.segment(r * k, k);
            }
            accumulate(adj, a, ga);
            accumulate(adj, b, gb);
            return;
        }
        case OpKind::segment_dot: {
            const Vec& va = nodes_[a].value;
            const Vec& vb = nodes_[b].value;
            const Eigen::Index k = vb.size(), m = va.size() / k;
            Vec ga(va.size());
            Vec gb = Vec::Zero(k);
            for (Eigen::Index r = 0; r < m; ++r) {
                ga.segment(r * k, k) = g[r] * vb;
                gb += g[r] * va.segment(r * k, k);
            }
            accumulate(adj, a, ga);
            accumulate(adj, b, gb);
            return;
        }
        case OpKind::segment_norm: {
            const Vec& va = nodes_[a].value;
            const Eigen::Index k = n.cols, m = n.value.size();
            Vec ga(va.size());
            for (Eigen::Index r = 0; r < m; ++r)
                ga.segment(r * k, k) = va.segment(r * k, k) * (g[r] / std::max(n.value[r], kNormFloor));
            accumulate(adj, a, ga);
            return;
        }
        case OpKind::repeat: {
            const Eigen::Index k = n.cols, m = size_of(NodeId{a});
            Vec ga(m);
            for (Eigen::Index r = 0; r < m; ++r) ga[r] = g.segment(r * k, k).sum();
            accumulate(adj, a, ga);
            return;
        }
    }
    throw std::logic_error("backward: unknown op-kind");
}

inline double Tape::replay_deviation() const {
    double worst = 0.0;
    auto check = [&](const Vec& cached, const Vec& fresh) {
        if (cached.size() != fresh.size()) {
            worst = std::numeric_limits<double>::infinity();
            return;
        }
        for (Eigen::Index k = 0; k < cached.size(); ++k) {
            const double d = std::abs(cached[k] - fresh[k]);
            if (std::isnan(d) && !(std::isnan(cached[k]) && std::isnan(fresh[k])))
                worst = std::numeric_limits<double>::infinity();
            else if (d > worst)
                worst = d;
        }
    };
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == OpKind::leaf || n.op == OpKind::constant || n.op == OpKind::pass_through) continue;
        const Vec* va = n.arity > 0 ? &nodes_[n.in[0]].value : nullptr;
        const Vec* vb = n.arity > 1 ? &nodes_[n.in[1]].value : nullptr;
        Vec fresh;
        switch (n.op) {
            case OpKind::add: fresh = kernels::add(*va, *vb); break;
            case OpKind::sub: fresh = kernels::sub(*va, *vb); break;
            case OpKind::neg: fresh = -*va; break;
            case OpKind::scalar_mul: fresh = kernels::scale(*va, n.param); break;
            case OpKind::mul: fresh = kernels::mul(*va, *vb); break;
            case OpKind::div: fresh = kernels::div(*va, *vb); break;
            case OpKind::matvec: {
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
                    data(NodeId{n.in[0]}), nodes_[n.in[0]].rows, nodes_[n.in[0]].cols);
                fresh = w * *vb;
                break;
            }
            case OpKind::const_matvec: fresh = kernels::matvec(*n.matrix, *va); break;
            case OpKind::const_matvec_t: fresh = kernels::matvec_t(*n.matrix, *va); break;
            case OpKind::affine: {
                const double* p = data(NodeId{n.in[0]}) + n.offset;
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
                    p, n.rows, n.cols);
                Eigen::Map<const Vec> bias(p + n.rows * n.cols, n.rows);
                fresh = w * *vb + bias;
                break;
            }
            case OpKind::dot: fresh = Vec::Constant(1, kernels::dot(*va, *vb)); break;
            case OpKind::sum: fresh = Vec::Constant(1, kernels::sum(*va)); break;
            case OpKind::sin: fresh = va->array().sin().matrix(); break;
            case OpKind::cos: fresh = va->array().cos().matrix(); break;
            case OpKind::exp: fresh = va->array().exp().matrix(); break;
            case OpKind::log: fresh = va->array().log().matrix(); break;
            case OpKind::sqrt: fresh = va->array().sqrt().matrix(); break;
            case OpKind::relu: fresh = kernels::relu(*va); break;
            case OpKind::softplus: fresh = kernels::softplus(*va, n.param); break;
            case OpKind::sigmoid: fresh = kernels::sigmoid(*va, n.param); break;
            case OpKind::l2_norm: fresh = Vec::Constant(1, kernels::norm(*va)); break;
            case OpKind::silu: fresh = kernels::silu(*va); break;
            case OpKind::square: fresh = va->cwiseAbs2(); break;
            case OpKind::stop_gradient: fresh = *va; break;
            case OpKind::outer: fresh = kernels::outer(*va, *vb); break;
            case OpKind::segment_dot: fresh = kernels::segment_dot(*va, *vb); break;
            case OpKind::segment_norm: fresh = kernels::segment_norm(*va, n.cols); break;
            case OpKind::repeat: fresh = kernels::repeat(*va, n.cols); break;
            default: continue;
        }
        check(n.value, fresh);
    }
    return worst;
}

/// Compares the tape gradient of a scalar function against central finite
/// differences. Returns max_i |g_ad - g_fd| / max(||g_ad||_inf, ||g_fd||_inf, 1e-8).
inline double grad_check(const std::function<NodeId(Tape&, NodeId)>& fn, const Eigen::VectorXd& point,
                         double step = 1e-5) {
    Tape tape;
    const NodeId x = tape.leaf(point);
    const NodeId root = fn(tape, x);
    const Eigen::VectorXd g_ad = tape.backward(root).wrt(x);

    auto eval = [&](const Eigen::VectorXd& p) {
        Tape t;
        const NodeId xi = t.leaf(p);
        return t.scalar(fn(t, xi));
    };
    Eigen::VectorXd g_fd(point.size());
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        Eigen::VectorXd plus = point, minus = point;
        plus[i] += step;
        minus[i] -= step;
        g_fd[i] = (eval(plus) - eval(minus)) / (2.0 * step);
    }
    if (!g_ad.allFinite() || !g_fd.allFinite()) throw std::domain_error("grad_check: non-finite values encountered");
    const double scale = std::max({g_ad.cwiseAbs().maxCoeff(), g_fd.cwiseAbs().maxCoeff(), 1e-8});
    return (g_ad - g_fd).cwiseAbs().maxCoeff() / scale;
}

}  // namespace fsnet::ad
