// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Datasets on disk, the oracle cache, and test-split evaluation with batch
// and sequential timing.

#pragma once

#include "fsnet/fs.hpp"
#include "fsnet/io.hpp"
#include "fsnet/net.hpp"
#include "fsnet/oracle.hpp"
#include "fsnet/problems.hpp"
#include "fsnet/seed.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace fsnet {

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any worker is rethrown on the caller.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---- datasets ---------------------------------------------------------------

struct SplitSizes {
    int train = 1000;
    int val = 200;
    int test = 400;
    int total() const { return train + val + test; }
};

struct Dataset {
    ProblemFamily family;
    std::vector<Instance> instances;
    std::vector<std::size_t> train, val, test;
    std::uint64_t seed = 0;

    std::vector<Instance> subset(const std::vector<std::size_t>& idx) const {
        std::vector<Instance> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(instances.at(i));
        return out;
    }
};

/// Throws if the splits overlap, miss an index or point outside the instances.
inline void validate_splits(const Dataset& ds) {
    std::vector<int> seen(ds.instances.size(), 0);
    for (const auto* split : {&ds.train, &ds.val, &ds.test})
        for (std::size_t i : *split) {
            if (i >= seen.size()) throw std::invalid_argument("dataset split index out of range");
            if (seen[i]++) throw std::invalid_argument("dataset splits overlap");
        }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw std::invalid_argument("dataset splits do not cover every instance");
}

inline Dataset generate_dataset(const ProblemFamily& fam, const SplitSizes& sizes, std::uint64_t seed,
                                const SampleOptions& opt = {}) {
    if (sizes.train < 1 || sizes.val < 1 || sizes.test < 1)
        throw std::invalid_argument("generate_dataset: split sizes must be >= 1");
    Dataset ds;
    ds.family = fam;
    ds.seed = seed;
    const auto total = static_cast<std::size_t>(sizes.total());
    ds.instances.reserve(total);
    for (std::size_t i = 0; i < total; ++i)
        ds.instances.push_back(sample_instance(fam, derive_seed(seed, "instance", i), opt));

    std::vector<std::size_t> perm(total);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, "split"));
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto tr = static_cast<std::ptrdiff_t>(sizes.train), va = static_cast<std::ptrdiff_t>(sizes.val);
    ds.train.assign(perm.begin(), perm.begin() + tr);
    ds.val.assign(perm.begin() + tr, perm.begin() + tr + va);
    ds.test.assign(perm.begin() + tr + va, perm.end());
    return ds;
}

/// Directory layout: family files, manifest.json, x.f64 (S x n_eq),
/// interior.f64 (S x n), splits.json.
inline void save_dataset(const Dataset& ds, const io::fs::path& dir) {
    io::fs::create_directories(dir);
    io::save_family(ds.family, dir);
    const auto count = static_cast<Eigen::Index>(ds.instances.size());
    io::RowMatrix x(count, ds.family.n_eq), interior(count, ds.family.n);
    std::vector<std::uint64_t> seeds;
    for (Eigen::Index i = 0; i < count; ++i) {
        x.row(i) = ds.instances[static_cast<std::size_t>(i)].x.transpose();
        interior.row(i) = ds.instances[static_cast<std::size_t>(i)].interior.transpose();
        seeds.push_back(ds.instances[static_cast<std::size_t>(i)].seed);
    }
    io::write_f64(dir / "x.f64", x.data(), static_cast<std::size_t>(x.size()));
    io::write_f64(dir / "interior.f64", interior.data(), static_cast<std::size_t>(interior.size()));
    io::write_json(dir / "manifest.json", {{"seed", ds.seed},
                                           {"family_seed", ds.family.seed},
                                           {"count", count},
                                           {"n", ds.family.n},
                                           {"n_eq", ds.family.n_eq},
                                           {"sizes", {ds.train.size(), ds.val.size(), ds.test.size()}},
                                           {"instance_seeds", seeds}});
    io::write_json(dir / "splits.json", {{"train", ds.train}, {"val", ds.val}, {"test", ds.test}});
}

inline Dataset load_dataset(const io::fs::path& dir) {
    Dataset ds;
    ds.family = io::load_family(dir);
    const io::json m = io::read_json(dir / "manifest.json");
    const io::json s = io::read_json(dir / "splits.json");
    std::vector<std::uint64_t> seeds;
    Eigen::Index count = 0;
    try {
        ds.seed = m.at("seed").get<std::uint64_t>();
        count = m.at("count").get<Eigen::Index>();
        seeds = m.at("instance_seeds").get<std::vector<std::uint64_t>>();
        ds.train = s.at("train").get<std::vector<std::size_t>>();
        ds.val = s.at("val").get<std::vector<std::size_t>>();
        ds.test = s.at("test").get<std::vector<std::size_t>>();
        const auto sizes = m.at("sizes").get<std::vector<std::size_t>>();
        if (sizes != std::vector<std::size_t>{ds.train.size(), ds.val.size(), ds.test.size()})
            throw io::IoError("split sizes do not match the manifest");
    } catch (const io::json::exception& e) {
        throw io::IoError("malformed dataset manifest: " + std::string(e.what()));
    }
    if (static_cast<Eigen::Index>(seeds.size()) != count) throw io::IoError("instance seed list does not match count");
    const Eigen::MatrixXd x = io::read_matrix(dir / "x.f64", count, ds.family.n_eq);
    const Eigen::MatrixXd interior = io::read_matrix(dir / "interior.f64", count, ds.family.n);
    for (Eigen::Index i = 0; i < count; ++i)
        ds.instances.push_back(Instance{x.row(i).transpose(), interior.row(i).transpose(), seeds[static_cast<std::size_t>(i)]});
    validate_splits(ds);
    return ds;
}

// ---- oracle cache -----------------------------------------------------------

class MissingOracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reference solutions keyed by (family seed, instance seed).
class OracleCache {
public:
    using Key = std::pair<std::uint64_t, std::uint64_t>;

    void put(std::uint64_t family_seed, std::uint64_t instance_seed, OracleResult r) {
        entries_[{family_seed, instance_seed}] = std::move(r);
    }
    const OracleResult* find(std::uint64_t family_seed, std::uint64_t instance_seed) const {
        auto it = entries_.find({family_seed, instance_seed});
        return it == entries_.end() ? nullptr : &it->second;
    }
    const OracleResult& at(std::uint64_t family_seed, std::uint64_t instance_seed) const {
        if (const auto* r = find(family_seed, instance_seed)) return *r;
        throw MissingOracleError("missing oracle cache entry for family seed " + std::to_string(family_seed) +
                                 ", instance seed " + std::to_string(instance_seed));
    }
    std::size_t size() const { return entries_.size(); }

    /// Writes manifest.json and y_star.f64 (count x n, manifest order).
    void save(const io::fs::path& dir) const {
        io::fs::create_directories(dir);
        io::json list = io::json::array();
        std::vector<double> ys;
        int n = -1;
        for (const auto& [key, r] : entries_) {
            if (n < 0) n = static_cast<int>(r.y_star.size());
            if (r.y_star.size() != n) throw std::invalid_argument("oracle cache: mixed solution dimensions");
            list.push_back({{"family_seed", key.first},
                            {"instance_seed", key.second},
                            {"f_star", r.f_star},
                            {"kkt_residual", r.kkt_residual},
                            {"eq_violation", r.eq_violation},
                            {"ineq_violation", r.ineq_violation},
                            {"converged", r.converged},
                            {"outer_iterations", r.outer_iterations}});
            ys.insert(ys.end(), r.y_star.data(), r.y_star.data() + r.y_star.size());
        }
        io::write_f64(dir / "y_star.f64", ys.data(), ys.size());
        io::write_json(dir / "manifest.json", {{"n", std::max(n, 0)}, {"entries", list}});
    }

    static OracleCache load(const io::fs::path& dir) {
        if (!io::fs::exists(dir / "manifest.json"))
            throw MissingOracleError("missing oracle cache: " + (dir / "manifest.json").string() + " not found");
        const io::json m = io::read_json(dir / "manifest.json");
        OracleCache cache;
        try {
            const int n = m.at("n").get<int>();
            const auto& list = m.at("entries");
            const Eigen::MatrixXd ys = io::read_matrix(dir / "y_star.f64", static_cast<Eigen::Index>(list.size()), n);
            for (std::size_t i = 0; i < list.size(); ++i) {
                const auto& e = list[i];
                OracleResult r;
                r.y_star = ys.row(static_cast<Eigen::Index>(i)).transpose();
                r.f_star = e.at("f_star").get<double>();
                r.kkt_residual = e.at("kkt_residual").get<double>();
                r.eq_violation = e.at("eq_violation").get<double>();
                r.ineq_violation = e.at("ineq_violation").get<double>();
                r.converged = e.at("converged").get<bool>();
                r.outer_iterations = e.at("outer_iterations").get<int>();
                cache.put(e.at("family_seed").get<std::uint64_t>(), e.at("instance_seed").get<std::uint64_t>(), std::move(r));
            }
        } catch (const io::json::exception& e) {
            throw io::IoError("malformed oracle manifest: " + std::string(e.what()));
        }
        return cache;
    }

private:
    std::map<Key, OracleResult> entries_;
};

/// Solves every instance (in parallel) and stores the results in `cache`.
inline void fill_oracle_cache(OracleCache& cache, const ProblemFamily& fam, std::span<const Instance> instances,
                              const AugLagOptions& opt, int threads) {
    std::vector<OracleResult> results(instances.size());
    parallel_for(instances.size(), threads,
                 [&](std::size_t i) { results[i] = aug_lagrangian_solve(fam, instances[i], opt); });
    for (std::size_t i = 0; i < instances.size(); ++i) cache.put(fam.seed, instances[i].seed, std::move(results[i]));
}

// ---- metrics ------------------------------------------------------------------

struct InstanceMetrics {
    std::uint64_t seed = 0;
    double eq = 0.0;
    double ineq = 0.0;
    double objective = 0.0;
    double f_star = 0.0;
    double gap = 0.0;
    bool gap_relative = true;  // false when f_star == 0 and gap is absolute
    int fs_iterations = 0;
    double time_s = 0.0;
};

struct MetricsRow {
    std::string method;
    std::uint64_t seed = 0;
    double eq_mean = 0.0, eq_max = 0.0;
    double ineq_mean = 0.0, ineq_max = 0.0;
    double gap_mean = 0.0, gap_min = 0.0, gap_max = 0.0;
    double batch_s = 0.0;
    double sequential_s = 0.0;
};

inline MetricsRow aggregate(const std::vector<InstanceMetrics>& rows, std::string method, std::uint64_t seed) {
    MetricsRow m;
    m.method = std::move(method);
    m.seed = seed;
    if (rows.empty()) return m;
    m.gap_min = rows.front().gap;
    m.gap_max = rows.front().gap;
    for (const auto& r : rows) {
        m.eq_mean += r.eq;
        m.ineq_mean += r.ineq;
        m.gap_mean += r.gap;
        m.eq_max = std::max(m.eq_max, r.eq);
        m.ineq_max = std::max(m.ineq_max, r.ineq);
        m.gap_min = std::min(m.gap_min, r.gap);
        m.gap_max = std::max(m.gap_max, r.gap);
    }
    const double n = static_cast<double>(rows.size());
    m.eq_mean /= n;
    m.ineq_mean /= n;
    m.gap_mean /= n;
    return m;
}

inline const char* kMetricsHeader = "method,seed,eq_mean,eq_max,ineq_mean,ineq_max,gap_mean,gap_min,gap_max,batch_s,sequential_s";
inline const char* kInstanceHeader = "seed,eq,ineq,objective,f_star,gap,gap_relative,fs_iterations,time_s";

inline void write_metrics_csv(const io::fs::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io::IoError("cannot open for writing: " + path.string());
    out << kMetricsHeader << '\n' << std::setprecision(17);
    for (const auto& r : rows)
        out << r.method << ',' << r.seed << ',' << r.eq_mean << ',' << r.eq_max << ',' << r.ineq_mean << ','
            << r.ineq_max << ',' << r.gap_mean << ',' << r.gap_min << ',' << r.gap_max << ',' << r.batch_s << ','
            << r.sequential_s << '\n';
}

inline void write_instance_csv(const io::fs::path& path, const std::vector<InstanceMetrics>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io::IoError("cannot open for writing: " + path.string());
    out << kInstanceHeader << '\n' << std::setprecision(17);
    for (const auto& r : rows)
        out << r.seed << ',' << r.eq << ',' << r.ineq << ',' << r.objective << ',' << r.f_star << ',' << r.gap << ','
            << (r.gap_relative ? 1 : 0) << ',' << r.fs_iterations << ',' << r.time_s << '\n';
}

inline std::vector<InstanceMetrics> read_instance_csv(const io::fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io::IoError("cannot open for reading: " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != kInstanceHeader) throw io::IoError("unexpected per-instance CSV header in " + path.string());
    std::vector<InstanceMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw io::IoError("malformed per-instance CSV row: " + line);
        InstanceMetrics r;
        r.seed = std::stoull(cells[0]);
        r.eq = std::stod(cells[1]);
        r.ineq = std::stod(cells[2]);
        r.objective = std::stod(cells[3]);
        r.f_star = std::stod(cells[4]);
        r.gap = std::stod(cells[5]);
        r.gap_relative = cells[6] == "1";
        r.fs_iterations = std::stoi(cells[7]);
        r.time_s = std::stod(cells[8]);
        rows.push_back(r);
    }
    return rows;
}

// ---- evaluation ---------------------------------------------------------------

using Predictor = std::function<Eigen::VectorXd(const Instance&)>;

struct EvalOptions {
    std::string method = "fsnet";
    std::uint64_t seed = 0;
    int threads = 1;
    bool apply_fs = true;  // false for penalty baselines: report raw predictions
    int warmup = 4;        // untimed instances evaluated first
};

struct Evaluation {
    MetricsRow summary;
    std::vector<InstanceMetrics> rows;
    std::vector<Eigen::VectorXd> solutions;
    bool batch_matches_sequential = true;
};

namespace detail {

inline std::pair<Eigen::VectorXd, int> solve_one(const Predictor& predict_fn, const ProblemFamily& fam,
                                                 const Instance& inst, const FSConfig& fs, bool apply_fs) {
    Eigen::VectorXd y = predict_fn(inst);
    if (!apply_fs) return {std::move(y), 0};
    FSResult r = feasibility_seek(fam, inst.x, y, fs);
    return {std::move(r.point), r.iterations};
}

}  // namespace detail

/// Predicts, feasibility-seeks and scores every test instance against the
/// cached oracle. Sequential time sums per-instance wall times; batch time is
/// the wall time of one parallel pass over all instances.
inline Evaluation evaluate(const Predictor& predict_fn, const ProblemFamily& fam, std::span<const Instance> test,
                           const FSConfig& fs, const OracleCache& cache, const EvalOptions& opt = {}) {
    for (const Instance& inst : test) cache.at(fam.seed, inst.seed);  // fail before doing any work
    using clock = std::chrono::steady_clock;

    for (std::size_t i = 0; i < std::min<std::size_t>(test.size(), static_cast<std::size_t>(std::max(0, opt.warmup))); ++i)
        detail::solve_one(predict_fn, fam, test[i], fs, opt.apply_fs);

    Evaluation ev;
    ev.rows.resize(test.size());
    ev.solutions.resize(test.size());
    double sequential = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto t0 = clock::now();
        auto [y_hat, iters] = detail::solve_one(predict_fn, fam, test[i], fs, opt.apply_fs);
        const double dt = std::chrono::duration<double>(clock::now() - t0).count();
        sequential += dt;

        const OracleResult& ref = cache.at(fam.seed, test[i].seed);
        const auto v = violation_l1(fam, y_hat, test[i].x);
        InstanceMetrics& m = ev.rows[i];
        m.seed = test[i].seed;
        m.eq = v.eq;
        m.ineq = v.ineq;
        m.objective = objective(fam, y_hat);
        m.f_star = ref.f_star;
        m.gap = optimality_gap(m.objective, ref.f_star);
        m.gap_relative = gap_is_relative(ref.f_star);
        m.fs_iterations = iters;
        m.time_s = dt;
        ev.solutions[i] = std::move(y_hat);
    }

    std::vector<Eigen::VectorXd> batch(test.size());
    const auto t0 = clock::now();
    parallel_for(test.size(), opt.threads,
                 [&](std::size_t i) { batch[i] = detail::solve_one(predict_fn, fam, test[i], fs, opt.apply_fs).first; });
    const double batch_s = std::chrono::duration<double>(clock::now() - t0).count();
    for (std::size_t i = 0; i < test.size(); ++i)
        if (batch[i].size() != ev.solutions[i].size() || batch[i] != ev.solutions[i]) ev.batch_matches_sequential = false;

    ev.summary = aggregate(ev.rows, opt.method, opt.seed);
    ev.summary.batch_s = batch_s;
    ev.summary.sequential_s = sequential;
    return ev;
}

inline Evaluation evaluate(const ModelParams& model, const ProblemFamily& fam, std::span<const Instance> test,
                           const FSConfig& fs, const OracleCache& cache, const EvalOptions& opt = {}) {
    validate(model);
    return evaluate([&model](const Instance& inst) { return predict(model, inst.x); }, fam, test, fs, cache, opt);
}

}  // namespace fsnet
