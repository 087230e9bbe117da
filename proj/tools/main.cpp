// raps: command-line harness for scenarios, estimator comparisons, the
// runtime bench and the exhaustive-search oracle check.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "harness.hpp"
#include "raps/error.hpp"
#include "raps/scenario_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitOracle = 4;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> estimators;
    std::optional<int> m;
    std::optional<int> epochs;
    std::optional<int> count;
    bool single_thread = true;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

raps::harness::RunConfig load(const Flags& f, bool bench) {
    using raps::harness::RunConfig;
    RunConfig cfg = f.config_path.empty() ? raps::harness::parse_config("{}")
                                          : raps::harness::parse_config(raps::read_text_file(f.config_path));
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.output_dir = *f.out;
    if (f.estimators) cfg.estimators = split_list(*f.estimators);
    if (f.m) {
        if (bench) {
            cfg.bench_m = {*f.m};
        } else {
            cfg.satellites = *f.m;
        }
    }
    if (f.epochs) {
        if (bench) {
            cfg.bench_epochs = *f.epochs;
        } else {
            cfg.trajectory.epochs = *f.epochs;
        }
    }
    if (f.count) cfg.oracle_count = *f.count;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file (defaults reproduce the reference protocol)");
    cmd->add_option("--seed", f.seed, "Scenario / instance seed");
    cmd->add_option("--out", f.out, "Output directory");
}

int simulate(const Flags& f) {
    const auto cfg = load(f, false);
    const raps::Scenario s = raps::harness::make_scenario(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    const std::string path = (std::filesystem::path(cfg.output_dir) / "scenario.json").string();
    raps::write_text_file(path, raps::scenario_to_json(s));
    std::printf("wrote %s (%lld epochs, %lld satellites, batches hash %016llx)\n", path.c_str(),
                static_cast<long long>(s.epochs()), static_cast<long long>(s.constellation.size()),
                static_cast<unsigned long long>(raps::batches_hash(s)));
    return kExitOk;
}

int run(const Flags& f) {
    const auto cfg = load(f, false);
    const auto res = raps::harness::run_comparison(cfg);
    raps::harness::write_comparison(cfg, res);
    for (const std::string& name : cfg.estimators) {
        const auto& s = res.summary.at(name);
        std::printf("%-10s mean risk %.4g  spec rate %.3f  median runtime %.3g s  rmse %.3g m\n", name.c_str(),
                    s.mean_risk, s.spec_rate, s.median_runtime, s.rmse);
    }
    std::printf("outputs in %s\n", cfg.output_dir.c_str());
    return res.hard_failures > 0 ? kExitSolver : kExitOk;
}

int bench(const Flags& f) {
    const auto cfg = load(f, true);
    const auto res = raps::harness::run_bench(cfg);
    raps::harness::write_bench(cfg, res);
    for (const auto& p : res.points) {
        std::printf("m=%-3d %-4s mean %.4g s  sd %.3g s  epochs %d%s\n", p.m, p.method.c_str(), p.mean, p.stddev,
                    p.epochs_used, p.limit_hits > 0 ? "  (node or time limit hit)" : "");
    }
    return kExitOk;
}

int oracle_check(const Flags& f) {
    const auto cfg = load(f, false);
    const auto rep = raps::harness::run_oracle_check(cfg, cfg.oracle_count, cfg.seed);
    std::filesystem::create_directories(cfg.output_dir);
    raps::write_text_file((std::filesystem::path(cfg.output_dir) / "oracle_report.json").string(),
                          raps::harness::oracle_report_json(cfg, rep));
    std::printf("oracle-check: %d/%d passed in %.1f s\n", rep.passed, rep.count, rep.seconds);
    for (const auto& fail : rep.failures) {
        std::printf("  instance %d %s: bnb %.12g (%s) vs exhaustive %.12g (%s), reproducer %s\n", fail.index,
                    fail.mode.c_str(), fail.bnb_risk, fail.bnb_status.c_str(), fail.exhaustive_risk,
                    fail.exhaustive_status.c_str(), fail.reproducer.c_str());
    }
    return rep.failures.empty() ? kExitOk : kExitOracle;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-aware measurement selection: scenarios, comparisons, bench and oracle check"};
    app.set_version_flag("--version", raps::harness::version_string());
    app.require_subcommand(1);
    Flags f;

    auto* sim_cmd = app.add_subcommand("simulate", "Generate a scenario and write scenario.json");
    add_common(sim_cmd, f);
    sim_cmd->add_option("--m", f.m, "Number of satellites");
    sim_cmd->add_option("--epochs", f.epochs, "Number of epochs");

    auto* run_cmd = app.add_subcommand("run", "Estimator comparison over one shared scenario");
    add_common(run_cmd, f);
    run_cmd->add_option("--estimators", f.estimators, "Comma list from kf,td,diag_raps,full_raps");
    run_cmd->add_option("--m", f.m, "Number of satellites");
    run_cmd->add_option("--epochs", f.epochs, "Number of epochs");

    auto* bench_cmd = app.add_subcommand("bench", "Diag vs Full runtime study");
    add_common(bench_cmd, f);
    bench_cmd->add_option("--m", f.m, "Single measurement count instead of the configured list");
    bench_cmd->add_option("--epochs", f.epochs, "Epochs per point");
    bench_cmd->add_flag("--single-thread,!--no-single-thread", f.single_thread,
                        "Single-threaded timing (the only mode; accepted for compatibility)");

    auto* oracle_cmd = app.add_subcommand("oracle-check", "Branch and bound against exhaustive search");
    add_common(oracle_cmd, f);
    oracle_cmd->add_option("--count", f.count, "Number of random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*sim_cmd) return simulate(f);
        if (*run_cmd) return run(f);
        if (*bench_cmd) return bench(f);
        if (*oracle_cmd) return oracle_check(f);
    } catch (const raps::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (e.code() == raps::ErrorCode::ConfigError || e.code() == raps::ErrorCode::IoError) return kExitConfig;
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitSolver;
    }
    return kExitOk;
}
