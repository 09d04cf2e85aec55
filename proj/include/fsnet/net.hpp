// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Multilayer perceptron y_theta(x): affine -> SiLU per hidden layer, affine
// output. Parameters live in one flat vector, layer by layer, each layer
// stored as its row-major weight matrix followed by its bias.

#pragma once

#include "fsnet/autodiff.hpp"
#include "fsnet/seed.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsnet {

enum class Activation { silu };

inline std::string to_string(Activation) { return "silu"; }
inline Activation parse_activation(const std::string& s) {
    if (s == "silu") return Activation::silu;
    throw std::invalid_argument("unknown activation: " + s);
}

struct ModelParams {
    std::vector<int> layer_sizes;  // input, hidden..., output
    Eigen::VectorXd values;
    Activation activation = Activation::silu;
    std::uint64_t seed = 0;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return layer_sizes.size() - 1; }

    /// Offset of layer l's weight matrix inside values.
    std::size_t layer_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < l; ++i)
            off += static_cast<std::size_t>(layer_sizes[i]) * layer_sizes[i + 1] + layer_sizes[i + 1];
        return off;
    }
};

inline std::size_t parameter_count(const std::vector<int>& sizes) {
    std::size_t total = 0;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
        total += static_cast<std::size_t>(sizes[i]) * sizes[i + 1] + sizes[i + 1];
    return total;
}

inline void validate(const ModelParams& m) {
    if (m.layer_sizes.size() < 2) throw std::invalid_argument("model needs at least input and output sizes");
    for (int s : m.layer_sizes)
        if (s < 1) throw std::invalid_argument("layer sizes must be >= 1");
    if (static_cast<std::size_t>(m.values.size()) != parameter_count(m.layer_sizes))
        throw std::invalid_argument("parameter vector length does not match layer sizes");
    if (!m.values.allFinite()) throw std::invalid_argument("model parameters are not finite");
}

/// Glorot-uniform weights, a = sqrt(6 / (fan_in + fan_out)), zero biases.
inline ModelParams init_mlp(int input_dim, const std::vector<int>& hidden, int output_dim, std::uint64_t seed) {
    if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("init_mlp: dimensions must be >= 1");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("init_mlp: hidden sizes must be >= 1");
    ModelParams m;
    m.layer_sizes.push_back(input_dim);
    m.layer_sizes.insert(m.layer_sizes.end(), hidden.begin(), hidden.end());
    m.layer_sizes.push_back(output_dim);
    m.seed = seed;
    m.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(m.layer_sizes)));

    std::mt19937_64 rng(derive_seed(seed, "init"));
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const int fan_in = m.layer_sizes[l];
        const int fan_out = m.layer_sizes[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-a, a);
        const auto off = static_cast<Eigen::Index>(m.layer_offset(l));
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(fan_in) * fan_out; ++k) m.values[off + k] = u(rng);
    }
    return m;
}

/// Records the network on a tape. `params` must be a node holding
/// m.values (see bind_params).
inline ad::NodeId forward(const ModelParams& m, ad::NodeId params, ad::NodeId x, ad::Tape& tape) {
    if (tape.size_of(x) != m.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
    if (tape.size_of(params) != m.values.size()) throw std::invalid_argument("forward: parameter node mismatch");
    ad::NodeId a = x;
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        a = tape.affine(params, a, m.layer_offset(l), m.layer_sizes[l + 1], m.layer_sizes[l]);
        if (l + 1 < m.layer_count()) a = tape.silu(a);
    }
    return a;
}

/// Registers the parameter vector as a tape leaf without copying it.
inline ad::NodeId bind_params(const ModelParams& m, ad::Tape& tape) {
    return tape.external_leaf(std::span<const double>(m.values.data(), static_cast<std::size_t>(m.values.size())));
}

inline ad::NodeId forward(const ModelParams& m, const Eigen::VectorXd& x, ad::Tape& tape) {
    const ad::NodeId params = bind_params(m, tape);
    return forward(m, params, tape.constant(x), tape);
}

/// Tape-free inference.
inline Eigen::VectorXd predict(const ModelParams& m, const Eigen::VectorXd& x) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("predict: input dimension mismatch");
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const Eigen::Index rows = m.layer_sizes[l + 1], cols = m.layer_sizes[l];
        const double* p = m.values.data() + m.layer_offset(l);
        Eigen::VectorXd z = Eigen::Map<const RowMat>(p, rows, cols) * a + Eigen::Map<const Eigen::VectorXd>(p + rows * cols, rows);
        a = l + 1 < m.layer_count() ? ad::kernels::silu(z) : z;
    }
    return a;
}

}  // namespace fsnet
