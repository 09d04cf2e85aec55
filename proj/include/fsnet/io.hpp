// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats: JSON manifests next to raw little-endian f64 files holding
// row-major matrices.

#pragma once

#include "fsnet/net.hpp"
#include "fsnet/problems.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsnet::io {

namespace fs = std::filesystem;
using json = nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

static_assert(std::endian::native == std::endian::little, "raw f64 files assume a little-endian host");

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void write_f64(const fs::path& path, const double* data, std::size_t count) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<double> read_f64(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(double) != 0) throw IoError("truncated f64 file: " + path.string());
    std::vector<double> data(bytes / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read failed: " + path.string());
    return data;
}

inline void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
    const RowMatrix r = m;
    write_f64(path, r.data(), static_cast<std::size_t>(r.size()));
}

inline Eigen::MatrixXd read_matrix(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
    const std::vector<double> data = read_f64(path);
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw IoError("unexpected size in " + path.string() + ": got " + std::to_string(data.size()) + " values, want " +
                      std::to_string(rows * cols));
    return Eigen::Map<const RowMatrix>(data.data(), rows, cols);
}

inline Eigen::VectorXd read_vector(const fs::path& path, Eigen::Index size) { return read_matrix(path, size, 1); }

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

// ---- problem family -------------------------------------------------------

inline void save_family(const ProblemFamily& fam, const fs::path& dir) {
    fs::create_directories(dir);
    json m = {{"kind", to_string(fam.kind)},
              {"variant", to_string(fam.variant)},
              {"n", fam.n},
              {"n_eq", fam.n_eq},
              {"n_ineq", fam.n_ineq},
              {"seed", fam.seed},
              {"lambda", fam.lambda},
              {"w_eq", fam.w_eq},
              {"w_ineq", fam.w_ineq},
              {"softplus_beta", fam.softplus_beta}};
    write_matrix(dir / "Q.f64", fam.Q);
    write_matrix(dir / "p.f64", fam.p);
    write_matrix(dir / "A.f64", fam.A);
    write_matrix(dir / "L.f64", fam.lower);
    write_matrix(dir / "U.f64", fam.upper);
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, QpData>) {
                write_matrix(dir / "ineq_G.f64", d.G);
                write_matrix(dir / "ineq_h.f64", d.h);
            } else if constexpr (std::is_same_v<T, QcqpData>) {
                write_matrix(dir / "ineq_H.f64", d.H);
                write_matrix(dir / "ineq_g.f64", d.g);
                write_matrix(dir / "ineq_h.f64", d.h);
            } else {
                m["cone_rows"] = d.rows;
                write_matrix(dir / "ineq_G.f64", d.G);
                write_matrix(dir / "ineq_h.f64", d.h);
                write_matrix(dir / "ineq_c.f64", d.c);
                write_matrix(dir / "ineq_d.f64", d.d);
            }
        },
        fam.ineq);
    write_json(dir / "family.json", m);
}

inline ProblemFamily load_family(const fs::path& dir) {
    const json m = read_json(dir / "family.json");
    ProblemFamily fam;
    try {
        fam.kind = parse_kind(m.at("kind").get<std::string>());
        fam.variant = parse_variant(m.at("variant").get<std::string>());
        fam.n = m.at("n").get<int>();
        fam.n_eq = m.at("n_eq").get<int>();
        fam.n_ineq = m.at("n_ineq").get<int>();
        fam.seed = m.at("seed").get<std::uint64_t>();
        fam.lambda = m.at("lambda").get<double>();
        fam.w_eq = m.at("w_eq").get<double>();
        fam.w_ineq = m.at("w_ineq").get<double>();
        fam.softplus_beta = m.value("softplus_beta", 0.0);
    } catch (const json::exception& e) {
        throw IoError("malformed family manifest: " + std::string(e.what()));
    }
    const int n = fam.n, ni = fam.n_ineq;
    fam.Q = read_matrix(dir / "Q.f64", n, n);
    fam.p = read_vector(dir / "p.f64", n);
    fam.A = read_matrix(dir / "A.f64", fam.n_eq, n);
    fam.lower = read_vector(dir / "L.f64", n);
    fam.upper = read_vector(dir / "U.f64", n);
    switch (fam.kind) {
        case ProblemKind::qp:
            fam.ineq = QpData{read_matrix(dir / "ineq_G.f64", ni, n), read_vector(dir / "ineq_h.f64", ni)};
            break;
        case ProblemKind::qcqp:
            fam.ineq = QcqpData{read_matrix(dir / "ineq_H.f64", static_cast<Eigen::Index>(ni) * n, n),
                                read_matrix(dir / "ineq_g.f64", ni, n), read_vector(dir / "ineq_h.f64", ni)};
            break;
        case ProblemKind::socp: {
            SocpData s;
            s.rows = m.value("cone_rows", 10);
            s.G = read_matrix(dir / "ineq_G.f64", static_cast<Eigen::Index>(ni) * s.rows, n);
            s.h = read_vector(dir / "ineq_h.f64", static_cast<Eigen::Index>(ni) * s.rows);
            s.c = read_matrix(dir / "ineq_c.f64", ni, n);
            s.d = read_vector(dir / "ineq_d.f64", ni);
            fam.ineq = std::move(s);
            break;
        }
    }
    validate(fam);
    return fam;
}

// ---- model checkpoint -----------------------------------------------------

/// Writes <prefix>.json and <prefix>.f64.
inline void save_checkpoint(const ModelParams& m, const fs::path& prefix) {
    if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
    json j = {{"layer_sizes", m.layer_sizes}, {"activation", to_string(m.activation)}, {"seed", m.seed}};
    write_json(fs::path(prefix.string() + ".json"), j);
    write_f64(fs::path(prefix.string() + ".f64"), m.values.data(), static_cast<std::size_t>(m.values.size()));
}

inline ModelParams load_checkpoint(const fs::path& prefix) {
    const json j = read_json(fs::path(prefix.string() + ".json"));
    ModelParams m;
    try {
        m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        m.activation = parse_activation(j.at("activation").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    const std::vector<double> v = read_f64(fs::path(prefix.string() + ".f64"));
    m.values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    validate(m);
    return m;
}

}  // namespace fsnet::io
