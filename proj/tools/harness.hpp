#pragma once

// Experiment orchestration shared by the raps command-line tool and the
// acceptance test: config ingestion, the estimator comparison, the runtime
// bench and the exhaustive-search oracle check.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "raps/estimators.hpp"
#include "raps/selector.hpp"
#include "raps/sim.hpp"

namespace raps::harness {

/// git-describe-style build version embedded in every output file.
std::string version_string();

struct RunConfig {
    // scenario
    TrajectoryParams trajectory;
    int satellites = 50;
    double elevation_min_deg = 5.0;
    double elevation_max_deg = 85.0;
    double sigma_noise = 1.5;
    OutlierModel outliers;
    Vector initial_variances = default_initial_variances();
    double jerk_psd = 1.0;  // S, m^2/s^5 per axis
    std::string scenario_path;  // load instead of generating when set
    std::uint64_t seed = 1;

    // estimators
    std::vector<std::string> estimators{"kf", "td", "diag_raps"};
    TdConfig td;
    Vector spec = default_spec();
    BnbOptions bnb;
    double full_time_limit = 60.0;  // per epoch, full_raps in the comparison
    /// Disable wall-clock limits and keep timings out of epochs.csv so two
    /// runs with the same config produce identical bytes.
    bool deterministic = true;

    // bench
    std::vector<int> bench_m{15, 20, 25, 30};
    std::vector<std::string> bench_methods{"full", "diag"};
    int bench_epochs = 20;
    double bench_time_limit = 120.0;

    // oracle check
    int oracle_count = 200;

    std::string output_dir = "raps_out";

    /// J_d = (1.389, 1.389, 0.347) on positions, zeros elsewhere.
    static Vector default_spec();
    /// Throws Error(ConfigError) naming the offending field.
    void validate() const;
};

/// Parse a JSON config; absent fields keep their defaults. Unknown fields,
/// wrong types and syntax errors throw Error(ConfigError) with line:column
/// or the field path.
RunConfig parse_config(const std::string& text);
/// Canonical JSON for a config (every field, fixed order).
std::string config_to_json(const RunConfig& cfg);
/// Hex FNV-1a of the canonical JSON, ignoring output_dir.
std::string config_hash(const RunConfig& cfg);

/// Comment line opening every CSV: "# raps <version> config_hash=<h> seed=<s>".
std::string provenance_line(const RunConfig& cfg);

Scenario make_scenario(const RunConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double time = 0.0;
    std::string estimator;
    Vector sqrt_info = Vector::Zero(3);  // sqrt diag J+ on positions
    double risk = 0.0;
    int n_selected = 0;
    std::string status;  // SolveStatus for RAPS, "none" for kf/td, "Error" on failure
    double runtime = 0.0;  // s, solve call only
    Vector error = Vector::Zero(3);  // estimate minus truth, positions
    bool spec_met = false;
};

/// Per epoch, measured on the diag_raps belief: what KF and TD would have
/// cost on the same instance (the exact feasible-set comparison).
struct SharedPriorRecord {
    int epoch = 0;
    bool all_feasible = false;  // b = 1 meets the requirement
    double diag_risk = 0.0;
    double kf_risk = 0.0;
    double td_risk = 0.0;
    std::string diag_status;
};

struct EstimatorSummary {
    double mean_risk = 0.0;
    double spec_rate = 0.0;
    double mean_runtime = 0.0;
    double median_runtime = 0.0;
    double max_runtime = 0.0;
    double rmse = 0.0;  // 3D position
    int failures = 0;
};

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    double probability = 0.0;
};

inline constexpr double kHistogramBinWidth = 0.05;  // s

std::vector<HistogramBin> runtime_histogram(const std::vector<double>& runtimes,
                                            double width = kHistogramBinWidth);

struct ComparisonResult {
    std::vector<EpochRecord> records;  // epoch-major, estimators in config order
    std::vector<SharedPriorRecord> shared;
    std::map<std::string, EstimatorSummary> summary;
    std::vector<HistogramBin> diag_histogram;
    std::uint64_t scenario_hash = 0;
    bool streams_identical = true;
    int hard_failures = 0;
};

ComparisonResult run_comparison(const RunConfig& cfg, const Scenario& scenario);
ComparisonResult run_comparison(const RunConfig& cfg);

/// epochs.csv, timing.csv, histogram.csv and summary.json under cfg.output_dir.
void write_comparison(const RunConfig& cfg, const ComparisonResult& result);
std::string epochs_csv(const RunConfig& cfg, const ComparisonResult& result);

struct BenchSample {
    int m = 0;
    std::string method;
    int run_idx = 0;
    int epoch = 0;
    double runtime = 0.0;
    std::string status;
};

struct BenchPoint {
    int m = 0;
    std::string method;
    std::vector<double> runtimes;
    double mean = 0.0;
    double stddev = 0.0;
    int epochs_used = 0;
    int limit_hits = 0;
    int infeasible = 0;
};

struct BenchResult {
    std::vector<BenchSample> samples;
    std::vector<BenchPoint> points;
};

/// For each m, 20 epochs spread over a dedicated run; priors come from a KF
/// recursion so both methods solve identical instances.
BenchResult run_bench(const RunConfig& cfg);
void write_bench(const RunConfig& cfg, const BenchResult& result);

struct OracleFailure {
    int index = 0;
    std::string mode;
    double bnb_risk = 0.0;
    double exhaustive_risk = 0.0;
    std::string bnb_status;
    std::string exhaustive_status;
    std::string reproducer;  // path of the serialized instance
};

struct OracleReport {
    int count = 0;
    int passed = 0;
    std::vector<OracleFailure> failures;
    double seconds = 0.0;
};

/// Random instance with n in {2..4}, m in {6..12} and a spec that binds.
RapsInstance random_oracle_instance(std::uint64_t seed, std::uint64_t index);

/// Diag and Full branch and bound against exhaustive search, 1e-6 absolute.
/// Failing instances are written to cfg.output_dir as JSON reproducers.
OracleReport run_oracle_check(const RunConfig& cfg, int count, std::uint64_t seed);
std::string oracle_report_json(const RunConfig& cfg, const OracleReport& report);

}  // namespace raps::harness
