// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include "fsnet/bench.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <thread>

namespace {

using namespace fsnet;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fsnet_test_bench_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Fixture {
    ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 10, 5, 5, 7);
    Dataset ds = generate_dataset(fam, SplitSizes{20, 5, 12}, 3);
    OracleCache cache;
    Fixture() { fill_oracle_cache(cache, fam, ds.subset(ds.test), AugLagOptions{}, 2); }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

TEST(Dataset, SplitCounts) {
    const ProblemFamily fam = generate_family(ProblemKind::qp, ProblemVariant::convex, 6, 3, 3, 1);
    const Dataset ds = generate_dataset(fam, SplitSizes{10, 2, 4}, 5);
    EXPECT_EQ(ds.instances.size(), 16u);
    EXPECT_EQ(ds.train.size(), 10u);
    EXPECT_EQ(ds.val.size(), 2u);
    EXPECT_EQ(ds.test.size(), 4u);
    EXPECT_NO_THROW(validate_splits(ds));
    Dataset bad = ds;
    bad.val[0] = bad.train[0];
    EXPECT_THROW(validate_splits(bad), std::invalid_argument);
    EXPECT_THROW(generate_dataset(fam, SplitSizes{0, 2, 4}, 5), std::invalid_argument);
}

TEST(Dataset, RegenerationIsByteIdentical) {
    const ProblemFamily fam = generate_family(ProblemKind::socp, ProblemVariant::nonconvex, 6, 3, 2, 9);
    const fs::path a = scratch("regen_a"), b = scratch("regen_b");
    save_dataset(generate_dataset(fam, SplitSizes{10, 2, 4}, 5), a);
    save_dataset(generate_dataset(generate_family(ProblemKind::socp, ProblemVariant::nonconvex, 6, 3, 2, 9),
                                  SplitSizes{10, 2, 4}, 5),
                 b);
    int files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
        ++files;
    }
    EXPECT_GE(files, 10);
    for (const char* f : {"manifest.json", "x.f64", "interior.f64", "splits.json", "family.json"})
        EXPECT_TRUE(fs::exists(a / f)) << f;
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Dataset, ReloadedInstancesAreValid) {
    const fs::path dir = scratch("reload");
    const ProblemFamily fam = generate_family(ProblemKind::qcqp, ProblemVariant::convex, 6, 3, 3, 4);
    const Dataset ds = generate_dataset(fam, SplitSizes{8, 2, 3}, 5);
    save_dataset(ds, dir);
    const Dataset back = load_dataset(dir);
    ASSERT_EQ(back.instances.size(), ds.instances.size());
    EXPECT_EQ(back.test, ds.test);
    for (std::size_t i = 0; i < back.instances.size(); ++i) {
        EXPECT_TRUE(instance_is_valid(back.family, back.instances[i]));
        EXPECT_EQ(violation(back.family, back.instances[i].interior, back.instances[i].x), 0.0);
        EXPECT_EQ(back.instances[i].x, ds.instances[i].x);
    }
    EXPECT_EQ(io::read_f64(dir / "x.f64").size(), 13u * 3u);
    fs::remove_all(dir);
}

TEST(OracleCache, RoundTripAndMissingDirectory) {
    const auto& f = fixture();
    const fs::path dir = scratch("oracle");
    f.cache.save(dir);
    const OracleCache back = OracleCache::load(dir);
    EXPECT_EQ(back.size(), f.cache.size());
    for (std::size_t i : f.ds.test) {
        const auto& a = f.cache.at(f.fam.seed, f.ds.instances[i].seed);
        const auto& b = back.at(f.fam.seed, f.ds.instances[i].seed);
        EXPECT_EQ(a.y_star, b.y_star);
        EXPECT_EQ(a.f_star, b.f_star);
        EXPECT_TRUE(b.converged);
    }
    EXPECT_THROW(OracleCache::load(scratch("oracle_missing")), MissingOracleError);
    EXPECT_THROW(back.at(f.fam.seed, 123456789), MissingOracleError);
    fs::remove_all(dir);
}

TEST(Evaluate, OracleReplayHasNoGap) {
    const auto& f = fixture();
    const auto test = f.ds.subset(f.ds.test);
    EvalOptions opt;
    opt.apply_fs = false;
    const Predictor replay = [&](const Instance& inst) { return f.cache.at(f.fam.seed, inst.seed).y_star; };
    const Evaluation ev = evaluate(replay, f.fam, test, FSConfig{}, f.cache, opt);
    EXPECT_LE(ev.summary.eq_max, 1e-8);
    EXPECT_LE(ev.summary.ineq_max, 1e-8);
    EXPECT_EQ(ev.summary.gap_max, 0.0);
    EXPECT_EQ(ev.summary.gap_min, 0.0);
}

TEST(Evaluate, UntrainedModelIsFeasibleAfterFeasibilitySeeking) {
    const auto& f = fixture();
    const ModelParams model = init_mlp(5, {16}, 10, 1);
    FSConfig fs;
    fs.max_iters = 200;
    fs.tol_phi = 1e-20;
    EvalOptions opt;
    opt.threads = 2;
    const Evaluation ev = evaluate(model, f.fam, f.ds.subset(f.ds.test), fs, f.cache, opt);
    EXPECT_LE(ev.summary.eq_mean, 1e-6);
    EXPECT_LE(ev.summary.ineq_mean, 1e-6);
    EXPECT_GE(ev.summary.eq_max, ev.summary.eq_mean);
    EXPECT_GE(ev.summary.ineq_max, ev.summary.ineq_mean);
    EXPECT_GE(ev.summary.gap_max, ev.summary.gap_mean);
    EXPECT_LE(ev.summary.gap_min, ev.summary.gap_mean);
    EXPECT_TRUE(ev.batch_matches_sequential);
    EXPECT_EQ(ev.rows.size(), f.ds.test.size());
    if (std::thread::hardware_concurrency() > 1) {
        EXPECT_GE(ev.summary.sequential_s, ev.summary.batch_s);
    }
}

TEST(Evaluate, MissingOracleEntries) {
    const auto& f = fixture();
    const auto train = f.ds.subset(f.ds.train);
    const ModelParams model = init_mlp(5, {4}, 10, 1);
    EXPECT_THROW(evaluate(model, f.fam, train, FSConfig{}, f.cache), MissingOracleError);
}

TEST(Metrics, PersistedRowsReproduceTheSummary) {
    const auto& f = fixture();
    const ModelParams model = init_mlp(5, {8}, 10, 2);
    EvalOptions opt;
    opt.method = "fsnet";
    opt.seed = 42;
    const Evaluation ev = evaluate(model, f.fam, f.ds.subset(f.ds.test), FSConfig{}, f.cache, opt);
    const fs::path dir = scratch("metrics");
    fs::create_directories(dir);
    write_instance_csv(dir / "instances.csv", ev.rows);
    write_metrics_csv(dir / "metrics.csv", {ev.summary});
    const MetricsRow again = aggregate(read_instance_csv(dir / "instances.csv"), "fsnet", 42);
    EXPECT_EQ(again.eq_mean, ev.summary.eq_mean);
    EXPECT_EQ(again.eq_max, ev.summary.eq_max);
    EXPECT_EQ(again.ineq_mean, ev.summary.ineq_mean);
    EXPECT_EQ(again.ineq_max, ev.summary.ineq_max);
    EXPECT_EQ(again.gap_mean, ev.summary.gap_mean);
    EXPECT_EQ(again.gap_min, ev.summary.gap_min);
    EXPECT_EQ(again.gap_max, ev.summary.gap_max);
    std::ifstream in(dir / "metrics.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "method,seed,eq_mean,eq_max,ineq_mean,ineq_max,gap_mean,gap_min,gap_max,batch_s,sequential_s");
    fs::remove_all(dir);
}

TEST(Metrics, AggregateByHand) {
    std::vector<InstanceMetrics> rows(3);
    rows[0].eq = 1;
    rows[1].eq = 2;
    rows[2].eq = 6;
    rows[0].gap = -0.1;
    rows[1].gap = 0.2;
    rows[2].gap = 0.5;
    const MetricsRow m = aggregate(rows, "x", 1);
    EXPECT_DOUBLE_EQ(m.eq_mean, 3.0);
    EXPECT_EQ(m.eq_max, 6.0);
    EXPECT_EQ(m.gap_min, -0.1);
    EXPECT_EQ(m.gap_max, 0.5);
    EXPECT_NEAR(m.gap_mean, 0.2, 1e-15);
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(50, 3,
                              [](std::size_t i) {
                                  if (i == 17) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}

}  // namespace
