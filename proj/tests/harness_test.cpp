#include "harness.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "raps/error.hpp"
#include "raps/scenario_io.hpp"

namespace raps::harness {
namespace {

namespace fs = std::filesystem;

RunConfig short_config(int epochs = 30) {
    RunConfig cfg = parse_config("{}");
    cfg.trajectory.epochs = epochs;
    return cfg;
}

ErrorCode config_error_code(const std::string& text, std::string* message = nullptr) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.code();
    }
    return ErrorCode::InvalidParams;  // parsed without error
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path(::testing::TempDir()) / name;
    fs::remove_all(dir);
    return dir;
}

// ---------------------------------------------------------------- config

TEST(Config, EmptyDocumentGivesReferenceDefaults) {
    const RunConfig cfg = parse_config("");
    EXPECT_EQ(cfg.satellites, 50);
    EXPECT_EQ(cfg.trajectory.epochs, 240);
    EXPECT_EQ(cfg.sigma_noise, 1.5);
    EXPECT_EQ(cfg.td.lambda, 2.0);
    EXPECT_EQ(cfg.spec(0), 1.389);
    EXPECT_EQ(cfg.spec(1), 1.389);
    EXPECT_EQ(cfg.spec(2), 0.347);
    EXPECT_EQ(cfg.spec.tail(6), Vector::Zero(6));
    EXPECT_EQ(cfg.estimators, (std::vector<std::string>{"kf", "td", "diag_raps"}));
    EXPECT_EQ(cfg.bench_m, (std::vector<int>{15, 20, 25, 30}));
    EXPECT_EQ(cfg.bench_epochs, 20);
    EXPECT_EQ(cfg.oracle_count, 200);
}

TEST(Config, CanonicalJsonRoundTrips) {
    RunConfig cfg = parse_config(R"({"seed": 7, "estimators": ["kf", "full_raps"],
        "bnb": {"relaxation": "big_m_qp", "fixed_big_m": 3.5, "order": "depth_first"},
        "scenario": {"satellites": 12, "outliers": {"literal_formulas": true}}})");
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.satellites, 12);
    EXPECT_TRUE(cfg.outliers.literal_formulas);
    EXPECT_EQ(cfg.bnb.relaxation, Relaxation::BigMQp);
    EXPECT_EQ(cfg.bnb.order, NodeOrder::DepthFirst);
    ASSERT_TRUE(cfg.bnb.fixed_big_m.has_value());
    const std::string text = config_to_json(cfg);
    EXPECT_EQ(config_to_json(parse_config(text)), text);
}

TEST(Config, HashIgnoresOutputDirButNotSeed) {
    RunConfig a = parse_config("{}"), b = a;
    b.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, ErrorsNameTheLineAndField) {
    std::string msg;
    EXPECT_EQ(config_error_code("{\n  \"seed\": 1,\n  \"bogus\": 2\n}", &msg), ErrorCode::ConfigError);
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;

    EXPECT_EQ(config_error_code("{\n  \"bnb\": {\n    \"gap\": \"small\"\n  }\n}", &msg), ErrorCode::ConfigError);
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bnb.gap"), std::string::npos) << msg;

    EXPECT_EQ(config_error_code("{\n  \"seed\": 1,\n  ]", &msg), ErrorCode::ConfigError);
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Config, RejectsInvalidValues) {
    for (const char* text : {
             R"({"estimators": []})",
             R"({"estimators": ["kf", "kf"]})",
             R"({"estimators": ["ukf"]})",
             R"({"spec": [1, 2, 3]})",
             R"({"spec": [-1, 0, 0, 0, 0, 0, 0, 0, 0]})",
             R"({"td": {"lambda": 0}})",
             R"({"td": {"normalization": "other"}})",
             R"({"bnb": {"gap": 0}})",
             R"({"bnb": {"branching": "most_fractional"}})",
             R"({"bnb": {"node_limit": 0}})",
             R"({"scenario": {"trajectory": {"speed": -1}}})",
             R"({"scenario": {"elevation_min_deg": 50, "elevation_max_deg": 40}})",
             R"({"scenario": {"initial_variances": [1, 1]}})",
             R"({"bench": {"methods": ["fast"]}})",
             R"({"oracle": {"count": 0}})",
             R"({"seed": -3})",
             R"([1, 2])",
         }) {
        EXPECT_EQ(config_error_code(text), ErrorCode::ConfigError) << text;
    }
}

// ---------------------------------------------------------------- histogram

TEST(Histogram, BinsOfFiftyMilliseconds) {
    const auto bins = runtime_histogram({0.01, 0.02, 0.07, 0.049});
    ASSERT_EQ(bins.size(), 2u);
    EXPECT_DOUBLE_EQ(bins[0].lo, 0.0);
    EXPECT_DOUBLE_EQ(bins[0].hi, 0.05);
    EXPECT_DOUBLE_EQ(bins[0].probability, 0.75);
    EXPECT_DOUBLE_EQ(bins[1].probability, 0.25);
    EXPECT_TRUE(runtime_histogram({}).empty());
    double total = 0.0;
    for (const auto& b : runtime_histogram({0.0, 0.3, 0.11, 0.5, 0.05})) total += b.probability;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

// ---------------------------------------------------------------- comparison

TEST(Comparison, KfConvergesWithoutOutliers) {
    // Few satellites, so the prior matters and the filter visibly converges.
    // Mean squared position error over 200 seeds: epoch 0 against epochs 7..9.
    double early = 0.0, late = 0.0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        RunConfig cfg = short_config(10);
        cfg.seed = seed;
        cfg.satellites = 8;
        cfg.estimators = {"kf"};
        cfg.outliers.a_el = 0.0;
        cfg.outliers.a_az = 0.0;
        cfg.spec = Vector::Zero(kStateDim);
        const ComparisonResult res = run_comparison(cfg);
        ASSERT_EQ(res.records.size(), 10u);
        early += res.records[0].error.squaredNorm();
        for (int k = 7; k < 10; ++k) late += res.records[static_cast<std::size_t>(k)].error.squaredNorm() / 3.0;
        for (int k = 1; k < 10; ++k)
            for (int a = 0; a < 3; ++a)
                EXPECT_GE(res.records[static_cast<std::size_t>(k)].sqrt_info(a),
                          res.records[static_cast<std::size_t>(k - 1)].sqrt_info(a) - 1e-9);
    }
    EXPECT_LT(late, early);
}

TEST(Comparison, RecordLayoutAndSharedStream) {
    RunConfig cfg = short_config(12);
    cfg.satellites = 20;
    cfg.estimators = {"kf", "td", "diag_raps", "full_raps"};
    const ComparisonResult res = run_comparison(cfg);
    ASSERT_EQ(res.records.size(), 48u);
    EXPECT_EQ(res.records[0].estimator, "kf");
    EXPECT_EQ(res.records[3].estimator, "full_raps");
    EXPECT_EQ(res.records[4].epoch, 1);
    EXPECT_TRUE(res.streams_identical);
    EXPECT_EQ(res.hard_failures, 0);
    EXPECT_EQ(res.shared.size(), 12u);
    for (const EpochRecord& r : res.records) {
        EXPECT_GE(r.risk, 0.0);
        EXPECT_NEAR(r.time, r.epoch * cfg.trajectory.period, 1e-12);
    }
}

TEST(Comparison, RiskAndInformationOrdering) {
    RunConfig cfg = short_config(60);
    const ComparisonResult res = run_comparison(cfg);
    for (const SharedPriorRecord& sp : res.shared) {
        if (sp.all_feasible) EXPECT_LE(sp.diag_risk, sp.kf_risk + 1e-6) << "epoch " << sp.epoch;
    }
    // KF uses every measurement, so its information dominates at every epoch.
    for (std::size_t k = 0; k < res.records.size(); k += 3) {
        const EpochRecord& kf = res.records[k];
        ASSERT_EQ(kf.estimator, "kf");
        for (std::size_t e = 1; e < 3; ++e)
            for (int a = 0; a < 3; ++a)
                EXPECT_GE(kf.sqrt_info(a), res.records[k + e].sqrt_info(a) - 1e-9 * (1.0 + kf.sqrt_info(a)));
        const EpochRecord& diag = res.records[k + 2];
        if (diag.status == "Optimal") EXPECT_TRUE(diag.spec_met);
    }
}

TEST(Comparison, CsvIsDeterministicAndSchemaFixed) {
    const RunConfig cfg = short_config(15);
    const std::string a = epochs_csv(cfg, run_comparison(cfg));
    const std::string b = epochs_csv(cfg, run_comparison(cfg));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rfind("# raps ", 0), 0u);
    EXPECT_NE(a.find("config_hash=" + config_hash(cfg)), std::string::npos);
    EXPECT_NE(a.find("seed=1"), std::string::npos);
    EXPECT_NE(a.find("\nepoch,time_s,estimator,sqrtinfo_n,sqrtinfo_e,sqrtinfo_d,risk,n_selected,status,runtime_s,"
                     "err_n,err_e,err_d\n"),
              std::string::npos);
    EXPECT_EQ(a.find('\r'), std::string::npos);
}

TEST(Comparison, LoadedScenarioMatchesGenerated) {
    const fs::path dir = fresh_dir("raps_loaded");
    fs::create_directories(dir);
    RunConfig cfg = short_config(8);
    const Scenario s = make_scenario(cfg);
    write_text_file((dir / "scenario.json").string(), scenario_to_json(s));
    RunConfig loaded = cfg;
    loaded.scenario_path = (dir / "scenario.json").string();
    const ComparisonResult a = run_comparison(cfg), b = run_comparison(loaded);
    EXPECT_EQ(a.scenario_hash, b.scenario_hash);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].risk, b.records[i].risk);
}

TEST(Comparison, WritesEveryOutputWithProvenance) {
    const fs::path dir = fresh_dir("raps_outputs");
    RunConfig cfg = short_config(6);
    cfg.output_dir = dir.string();
    write_comparison(cfg, run_comparison(cfg));
    for (const char* name : {"epochs.csv", "timing.csv", "histogram.csv"}) {
        const std::string text = read_text_file((dir / name).string());
        EXPECT_EQ(text.rfind(provenance_line(cfg), 0), 0u) << name;
    }
    const std::string summary = read_text_file((dir / "summary.json").string());
    for (const char* key : {"\"config_hash\"", "\"seed\"", "\"version\"", "\"mean_risk\"", "\"spec_satisfaction_rate\"",
                            "\"mean_runtime_s\"", "\"bin_width_s\"", "\"risk_dominance\""})
        EXPECT_NE(summary.find(key), std::string::npos) << key;
    // The resolved config is saved and reproduces the run's hash.
    const RunConfig saved = parse_config(read_text_file((dir / "config.json").string()));
    EXPECT_EQ(config_hash(saved), config_hash(cfg));
}

TEST(Comparison, NonDeterministicModeRecordsRuntimes) {
    RunConfig cfg = short_config(4);
    cfg.deterministic = false;
    const std::string csv = epochs_csv(cfg, run_comparison(cfg));
    EXPECT_EQ(csv.find(",NA,"), std::string::npos);
    cfg.deterministic = true;
    EXPECT_NE(epochs_csv(cfg, run_comparison(cfg)).find(",NA,"), std::string::npos);
}

// ---------------------------------------------------------------- bench

TEST(Bench, DiagOnlyPointHasTwentySamples) {
    RunConfig cfg = parse_config(R"({"bench": {"m": [15], "methods": ["diag"]}})");
    const BenchResult res = run_bench(cfg);
    ASSERT_EQ(res.points.size(), 1u);
    EXPECT_EQ(res.points[0].epochs_used, 20);
    EXPECT_EQ(res.points[0].runtimes.size(), 20u);
    EXPECT_GT(res.points[0].mean, 0.0);
    EXPECT_EQ(res.samples.size(), 20u);
    const fs::path dir = fresh_dir("raps_bench");
    cfg.output_dir = dir.string();
    write_bench(cfg, res);
    const std::string csv = read_text_file((dir / "bench.csv").string());
    EXPECT_NE(csv.find("\nm,method,run_idx,runtime_s\n15,diag,0,"), std::string::npos);
}

// ---------------------------------------------------------------- oracle check

TEST(OracleCheck, InstanceShapes) {
    for (std::uint64_t i = 0; i < 100; ++i) {
        const RapsInstance inst = random_oracle_instance(3, i);
        EXPECT_GE(inst.state_dim(), 2);
        EXPECT_LE(inst.state_dim(), 4);
        EXPECT_GE(inst.size(), 6);
        EXPECT_LE(inst.size(), 12);
        EXPECT_NO_THROW(inst.validate());
        EXPECT_EQ(inst.spec.diag_lower_bound.isZero(0.0), i % 25 == 0);
    }
}

TEST(OracleCheck, DegenerateSingleInstancePasses) {
    // Instance 0 carries J_d = 0, so b = 0 is optimal on both sides.
    const RunConfig cfg = parse_config("{}");
    const OracleReport rep = run_oracle_check(cfg, 1, 5);
    EXPECT_EQ(rep.passed, 1);
    EXPECT_TRUE(rep.failures.empty());
}

TEST(OracleCheck, RandomInstancesPass) {
    const OracleReport rep = run_oracle_check(parse_config("{}"), 60, 11);
    EXPECT_EQ(rep.passed, 60);
}

TEST(OracleCheck, WrongBigMProducesReproducers) {
    const fs::path dir = fresh_dir("raps_oracle");
    RunConfig cfg = parse_config(R"({"bnb": {"relaxation": "big_m_qp", "fixed_big_m": 0.001}})");
    cfg.output_dir = dir.string();
    const OracleReport rep = run_oracle_check(cfg, 10, 2);
    ASSERT_FALSE(rep.failures.empty());
    EXPECT_LT(rep.passed, 10);
    for (const OracleFailure& f : rep.failures) {
        ASSERT_TRUE(fs::exists(f.reproducer));
        const RapsInstance inst = instance_from_json(read_text_file(f.reproducer));
        const RapsMode mode = f.mode == "full" ? RapsMode::Full : RapsMode::Diag;
        EXPECT_EQ(exhaustive_raps(inst, mode).risk, f.exhaustive_risk);
    }
    EXPECT_NE(oracle_report_json(cfg, rep).find("\"reproducer\""), std::string::npos);
}

// ---------------------------------------------------------------- command line

#ifdef RAPS_CLI_PATH
int run_cli(const std::string& args) {
    const int status = std::system((std::string(RAPS_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
    const fs::path dir = fresh_dir("raps_cli");
    fs::create_directories(dir);
    const std::string out = " --out " + (dir / "out").string();
    EXPECT_EQ(run_cli("simulate --epochs 3 --m 6" + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "scenario.json"));
    EXPECT_EQ(run_cli("run --epochs 5 --estimators kf,diag_raps" + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "epochs.csv"));
    EXPECT_EQ(run_cli("oracle-check --count 5" + out), 0);

    std::ofstream(dir / "bad.json") << "{\n  \"nope\": 1\n}\n";
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + out), 2);
    EXPECT_EQ(run_cli("run --estimators ukf" + out), 2);
    EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string() + out), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli(""), 2);

    std::ofstream(dir / "wrong_m.json") << R"({"bnb": {"relaxation": "big_m_qp", "fixed_big_m": 0.001}})";
    EXPECT_EQ(run_cli("oracle-check --count 10 --config " + (dir / "wrong_m.json").string() + out), 4);
}
#endif

}  // namespace
}  // namespace raps::harness
