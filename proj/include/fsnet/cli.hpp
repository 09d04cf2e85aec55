// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: generate, oracle, train, eval, sweep-k, sweep-rho and
// check subcommands over a JSON run configuration.

#pragma once

#include "fsnet/bench.hpp"
#include "fsnet/checks.hpp"
#include "fsnet/io.hpp"
#include "fsnet/oracle.hpp"
#include "fsnet/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fsnet::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FamilyConfig {
    ProblemKind kind = ProblemKind::qp;
    ProblemVariant variant = ProblemVariant::convex;
    int n = 50;
    int n_eq = 25;
    int n_ineq = 25;
    std::uint64_t seed = 7;
    GenerateOptions options;
    double softplus_beta = 0.0;
};

struct DatasetConfig {
    SplitSizes sizes;
    std::uint64_t seed = 7;
};

struct EvalConfig {
    FSConfig fs;
    AugLagOptions oracle;
};

struct RunConfig {
    FamilyConfig family;
    DatasetConfig dataset;
    TrainConfig train;
    EvalConfig eval;
    std::vector<double> rho_values = {0.0, 5.0, 50.0};
    std::vector<int> tracked_values = {0, 10, 50};
};

/// Desk-scale defaults: convex QP with 50 variables, GD unrolling for
/// training and L-BFGS feasibility seeking at inference.
inline RunConfig default_config() {
    RunConfig c;
    c.train.learning_rate = 1e-3;
    c.train.lr_decay_steps = 1500;
    c.train.epochs = 300;
    c.train.fs.method = FsMethod::gd;
    c.train.fs.step_size = 0.02;
    c.train.fs.max_iters = 50;
    c.train.fs.tracked_iters = 10;
    c.train.eval_fs.method = FsMethod::lbfgs;
    c.train.eval_fs.max_iters = 50;
    c.eval.fs = c.train.eval_fs;
    return c;
}

namespace detail {

/// Reads `key` from `j` into `out` when present; rejects keys not in `allowed`.
class Section {
public:
    Section(const json& j, std::string name, std::set<std::string> allowed) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
        for (const auto& [k, v] : j_.items())
            if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in config section '" + name_ + "'");
    }
    template <class T>
    void get(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("bad value for '" + name_ + "." + key + "'");
        }
    }
    template <class T, class Parse>
    void parse(const char* key, T& out, Parse fn) const {
        std::string s;
        get(key, s);
        if (s.empty()) return;
        try {
            out = fn(s);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }
    bool has(const char* key) const { return j_.contains(key); }
    const json& at(const char* key) const { return j_.at(key); }

private:
    const json& j_;
    std::string name_;
};

inline void read_fs(const json& j, const std::string& name, FSConfig& fs) {
    const Section s(j, name,
                    {"method", "step_size", "max_iters", "tracked_iters", "memory", "tol_phi", "tol_grad", "armijo_c",
                     "backtrack_factor", "max_backtracks"});
    s.parse("method", fs.method, parse_fs_method);
    s.get("step_size", fs.step_size);
    s.get("max_iters", fs.max_iters);
    s.get("tracked_iters", fs.tracked_iters);
    s.get("memory", fs.memory);
    s.get("tol_phi", fs.tol_phi);
    s.get("tol_grad", fs.tol_grad);
    s.get("armijo_c", fs.armijo_c);
    s.get("backtrack_factor", fs.backtrack_factor);
    s.get("max_backtracks", fs.max_backtracks);
}

inline json fs_to_json(const FSConfig& fs) {
    return {{"method", to_string(fs.method)}, {"step_size", fs.step_size},   {"max_iters", fs.max_iters},
            {"tracked_iters", fs.tracked_iters}, {"memory", fs.memory},     {"tol_phi", fs.tol_phi},
            {"tol_grad", fs.tol_grad},           {"armijo_c", fs.armijo_c}, {"backtrack_factor", fs.backtrack_factor},
            {"max_backtracks", fs.max_backtracks}};
}

}  // namespace detail

/// Overlays a JSON document with sections {family, dataset, fs, train, eval}
/// onto `base`. The `fs` section configures the unrolled (training) solver;
/// `eval.fs` the inference solver.
inline RunConfig parse_config(const json& j, RunConfig c = default_config()) {
    using detail::Section;
    const Section root(j, "root", {"family", "dataset", "fs", "train", "eval"});
    if (root.has("family")) {
        const Section s(root.at("family"), "family",
                        {"kind", "variant", "n", "n_eq", "n_ineq", "seed", "lambda", "bound", "w_eq", "w_ineq",
                         "cone_rows", "rhs_margin", "softplus_beta"});
        auto& f = c.family;
        s.parse("kind", f.kind, parse_kind);
        s.parse("variant", f.variant, parse_variant);
        s.get("n", f.n);
        s.get("n_eq", f.n_eq);
        s.get("n_ineq", f.n_ineq);
        s.get("seed", f.seed);
        s.get("lambda", f.options.lambda);
        s.get("bound", f.options.bound);
        s.get("w_eq", f.options.w_eq);
        s.get("w_ineq", f.options.w_ineq);
        s.get("cone_rows", f.options.cone_rows);
        s.get("rhs_margin", f.options.rhs_margin);
        s.get("softplus_beta", f.softplus_beta);
    }
    if (root.has("dataset")) {
        const Section s(root.at("dataset"), "dataset", {"train", "val", "test", "seed"});
        s.get("train", c.dataset.sizes.train);
        s.get("val", c.dataset.sizes.val);
        s.get("test", c.dataset.sizes.test);
        s.get("seed", c.dataset.seed);
    }
    if (root.has("fs")) detail::read_fs(root.at("fs"), "fs", c.train.fs);
    if (root.has("train")) {
        const Section s(root.at("train"), "train",
                        {"rho", "rho_phi", "q_threshold", "optimizer", "learning_rate", "lr_decay", "lr_decay_steps",
                         "epochs", "batch_size", "seed", "hidden", "baseline", "penalty_eq", "penalty_ineq",
                         "adaptive_init", "adaptive_max", "adaptive_rate", "rho_values", "tracked_values"});
        auto& t = c.train;
        s.get("rho", t.rho);
        s.get("rho_phi", t.rho_phi);
        s.get("q_threshold", t.q_threshold);
        s.parse("optimizer", t.optimizer, parse_optimizer);
        s.get("learning_rate", t.learning_rate);
        s.get("lr_decay", t.lr_decay);
        s.get("lr_decay_steps", t.lr_decay_steps);
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("seed", t.seed);
        s.get("hidden", t.hidden);
        s.parse("baseline", t.baseline, parse_baseline);
        s.get("penalty_eq", t.penalty_eq);
        s.get("penalty_ineq", t.penalty_ineq);
        s.get("adaptive_init", t.adaptive.init);
        s.get("adaptive_max", t.adaptive.max);
        s.get("adaptive_rate", t.adaptive.rate);
        s.get("rho_values", c.rho_values);
        s.get("tracked_values", c.tracked_values);
    }
    if (root.has("eval")) {
        const Section s(root.at("eval"), "eval", {"fs", "oracle_tol", "oracle_kkt_tol", "oracle_max_outer"});
        if (s.has("fs")) detail::read_fs(s.at("fs"), "eval.fs", c.eval.fs);
        s.get("oracle_tol", c.eval.oracle.tol);
        s.get("oracle_kkt_tol", c.eval.oracle.kkt_tol);
        s.get("oracle_max_outer", c.eval.oracle.max_outer);
    }
    c.train.eval_fs = c.eval.fs;
    if (c.family.n < 1 || c.family.n_eq < 1 || c.family.n_eq > c.family.n || c.family.n_ineq < 0)
        throw ConfigError("family dimensions must satisfy 1 <= n_eq <= n and n_ineq >= 0");
    if (c.rho_values.empty() || c.tracked_values.empty()) throw ConfigError("sweep value lists must be non-empty");
    try {
        c.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline json config_to_json(const RunConfig& c) {
    const auto& f = c.family;
    const auto& t = c.train;
    return {{"family",
             {{"kind", to_string(f.kind)}, {"variant", to_string(f.variant)}, {"n", f.n}, {"n_eq", f.n_eq},
              {"n_ineq", f.n_ineq}, {"seed", f.seed}, {"lambda", f.options.lambda}, {"bound", f.options.bound},
              {"w_eq", f.options.w_eq}, {"w_ineq", f.options.w_ineq}, {"cone_rows", f.options.cone_rows},
              {"rhs_margin", f.options.rhs_margin}, {"softplus_beta", f.softplus_beta}}},
            {"dataset",
             {{"train", c.dataset.sizes.train}, {"val", c.dataset.sizes.val}, {"test", c.dataset.sizes.test},
              {"seed", c.dataset.seed}}},
            {"fs", detail::fs_to_json(t.fs)},
            {"train",
             {{"rho", t.rho}, {"rho_phi", t.rho_phi}, {"q_threshold", t.q_threshold},
              {"optimizer", to_string(t.optimizer)}, {"learning_rate", t.learning_rate}, {"lr_decay", t.lr_decay},
              {"lr_decay_steps", t.lr_decay_steps}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
              {"seed", t.seed}, {"hidden", t.hidden}, {"baseline", to_string(t.baseline)},
              {"penalty_eq", t.penalty_eq}, {"penalty_ineq", t.penalty_ineq}, {"adaptive_init", t.adaptive.init},
              {"adaptive_max", t.adaptive.max}, {"adaptive_rate", t.adaptive.rate},
              {"rho_values", c.rho_values}, {"tracked_values", c.tracked_values}}},
            {"eval",
             {{"fs", detail::fs_to_json(c.eval.fs)}, {"oracle_tol", c.eval.oracle.tol},
              {"oracle_kkt_tol", c.eval.oracle.kkt_tol}, {"oracle_max_outer", c.eval.oracle.max_outer}}}};
}

inline ProblemFamily build_family(const FamilyConfig& f) {
    ProblemFamily fam = generate_family(f.kind, f.variant, f.n, f.n_eq, f.n_ineq, f.seed, f.options);
    fam.softplus_beta = f.softplus_beta;
    return fam;
}

/// Method label used in file names and metrics rows.
inline std::string method_name(const TrainConfig& t) {
    return t.baseline == Baseline::none ? "fsnet" : to_string(t.baseline);
}

struct Paths {
    fs::path out;
    fs::path dataset() const { return out / "dataset"; }
    fs::path oracle() const { return out / "oracle"; }
    fs::path model(const std::string& method) const { return out / ("model_" + method); }
};

namespace detail {

inline std::vector<double> test_fstar(const Dataset& ds, const OracleCache& cache) {
    std::vector<double> f;
    for (std::size_t i : ds.test) f.push_back(cache.at(ds.family.seed, ds.instances[i].seed).f_star);
    return f;
}

inline void write_sweep_csv(const fs::path& path, const char* column, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io::IoError("cannot open for writing: " + path.string());
    out << column << ",distance,gap,eq,ineq\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.value << ',' << r.distance << ',' << r.gap << ',' << r.eq << ',' << r.ineq << '\n';
}

inline void write_train_csv(const fs::path& path, const TrainReport& rep) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io::IoError("cannot open for writing: " + path.string());
    out << "epoch,train_loss,val_eq,val_ineq,val_objective,wall_time,weight_eq,weight_ineq\n" << std::setprecision(17);
    for (const auto& e : rep.epochs)
        out << e.epoch << ',' << e.train_loss << ',' << e.val_eq << ',' << e.val_ineq << ',' << e.val_objective << ','
            << e.wall_time << ',' << e.weight_eq << ',' << e.weight_ineq << '\n';
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns 0 on success, 2 on a
/// configuration error (including a missing oracle cache), 1 otherwise.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"FSNet: neural solvers with feasibility seeking", "fsnet"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "fsnet_out";
    int threads = 1;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Seed for the family, dataset and training");
    app.add_option("--out-dir", out_dir, "Output directory");
    app.add_option("--threads", threads, "Worker threads for oracle and evaluation")->check(CLI::PositiveNumber);
    app.fallthrough();

    auto* generate = app.add_subcommand("generate", "Generate a problem family and dataset");
    auto* oracle = app.add_subcommand("oracle", "Solve and cache the test split");
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    auto* eval = app.add_subcommand("eval", "Evaluate a trained model against the oracle cache");
    std::string model_prefix;
    eval->add_option("--model", model_prefix, "Checkpoint prefix (default: <out-dir>/model_<method>)");
    auto* sweep_k = app.add_subcommand("sweep-k", "Train over the number of differentiated iterations");
    auto* sweep_rho = app.add_subcommand("sweep-rho", "Train over the distance weight rho");
    auto* check = app.add_subcommand("check", "Run the gradient, rate and truncation self-checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = default_config();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            json j;
            try {
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw ConfigError("invalid JSON in " + config_path + ": " + e.what());
            }
            cfg = parse_config(j);
        }
        if (seed) {
            cfg.family.seed = *seed;
            cfg.dataset.seed = derive_seed(*seed, "dataset");
            cfg.train.seed = derive_seed(*seed, "train");
        }
        const Paths paths{out_dir};
        fs::create_directories(paths.out);
        const std::string method = method_name(cfg.train);

        if (check->parsed()) {
            bool ok = true;
            for (const auto& r : checks::run_all(seed.value_or(2025))) {
                out << (r.passed ? "PASS " : "FAIL ") << r.name << " measured=" << r.measured
                    << " threshold=" << r.threshold << " (" << r.detail << ")\n";
                ok = ok && r.passed;
            }
            return ok ? 0 : 1;
        }
        if (generate->parsed()) {
            const ProblemFamily fam = build_family(cfg.family);
            const Dataset ds = generate_dataset(fam, cfg.dataset.sizes, cfg.dataset.seed);
            save_dataset(ds, paths.dataset());
            io::write_json(paths.out / "config.json", config_to_json(cfg));
            out << "generated " << ds.instances.size() << " instances of " << to_string(fam.kind) << '/'
                << to_string(fam.variant) << " in " << paths.dataset().string() << '\n';
            return 0;
        }

        if (!fs::exists(paths.dataset() / "manifest.json"))
            throw ConfigError("missing dataset: run `fsnet generate` with --out-dir " + out_dir + " first");
        const Dataset ds = load_dataset(paths.dataset());
        const ProblemFamily& fam = ds.family;

        if (oracle->parsed()) {
            OracleCache cache;
            const auto test = ds.subset(ds.test);
            fill_oracle_cache(cache, fam, test, cfg.eval.oracle, threads);
            cache.save(paths.oracle());
            int converged = 0;
            for (const Instance& inst : test) converged += cache.at(fam.seed, inst.seed).converged ? 1 : 0;
            out << "solved " << test.size() << " test instances, " << converged << " converged\n";
            return 0;
        }
        if (train_cmd->parsed()) {
            const auto tr = ds.subset(ds.train), va = ds.subset(ds.val);
            TrainHooks hooks;
            hooks.on_epoch = [&](const EpochRecord& e) {
                out << "epoch " << e.epoch << " loss " << e.train_loss << " val_eq " << e.val_eq << " val_ineq "
                    << e.val_ineq << " val_obj " << e.val_objective << '\n';
                return true;
            };
            const TrainReport rep = train(fam, tr, va, cfg.train, hooks);
            io::save_checkpoint(rep.model, paths.model(method));
            detail::write_train_csv(paths.out / ("train_" + method + ".csv"), rep);
            return 0;
        }
        if (eval->parsed()) {
            const OracleCache cache = OracleCache::load(paths.oracle());
            const ModelParams model =
                io::load_checkpoint(model_prefix.empty() ? paths.model(method) : fs::path(model_prefix));
            EvalOptions opt;
            opt.method = method;
            opt.seed = cfg.train.seed;
            opt.threads = threads;
            opt.apply_fs = cfg.train.baseline == Baseline::none;
            const Evaluation ev = evaluate(model, fam, ds.subset(ds.test), cfg.eval.fs, cache, opt);
            write_metrics_csv(paths.out / ("metrics_" + method + ".csv"), {ev.summary});
            write_instance_csv(paths.out / ("instances_" + method + ".csv"), ev.rows);
            const auto& s = ev.summary;
            out << "eq_mean " << s.eq_mean << " ineq_mean " << s.ineq_mean << " gap_mean " << s.gap_mean
                << " batch_s " << s.batch_s << " sequential_s " << s.sequential_s << '\n';
            if (!ev.batch_matches_sequential) {
                err << "batch and sequential solutions differ\n";
                return 1;
            }
            return 0;
        }
        if (sweep_k->parsed() || sweep_rho->parsed()) {
            const OracleCache cache = OracleCache::load(paths.oracle());
            const auto tr = ds.subset(ds.train), va = ds.subset(ds.val), te = ds.subset(ds.test);
            const auto f_star = detail::test_fstar(ds, cache);
            if (sweep_k->parsed()) {
                const auto rows = tracked_sweep(fam, tr, va, te, f_star, cfg.train, cfg.tracked_values);
                detail::write_sweep_csv(paths.out / "sweep_k.csv", "tracked_iters", rows);
            } else {
                const auto rows = rho_sweep(fam, tr, va, te, f_star, cfg.train, cfg.rho_values);
                detail::write_sweep_csv(paths.out / "sweep_rho.csv", "rho", rows);
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const MissingOracleError& e) {
        err << e.what() << "; run `fsnet oracle` first\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace fsnet::cli
