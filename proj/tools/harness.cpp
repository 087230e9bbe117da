#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "raps/dynamics.hpp"
#include "raps/error.hpp"
#include "raps/rng.hpp"
#include "raps/scenario_io.hpp"

#ifndef RAPS_VERSION_STRING
#define RAPS_VERSION_STRING "unknown"
#endif

namespace raps::harness {

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

constexpr double kDeg = kPi / 180.0;

const std::vector<std::string> kEstimators{"kf", "td", "diag_raps", "full_raps"};

// ---------------------------------------------------------------- enum names

template <class E>
struct EnumName {
    E value;
    const char* name;
};

constexpr EnumName<Branching> kBranchingNames[] = {{Branching::Auto, "auto"},
                                                   {Branching::MostFractional, "most_fractional"},
                                                   {Branching::LowestIndex, "lowest_index"},
                                                   {Branching::CheapestIncrement, "cheapest_increment"}};
constexpr EnumName<NodeOrder> kOrderNames[] = {{NodeOrder::BestBound, "best_bound"},
                                               {NodeOrder::DepthFirst, "depth_first"}};
constexpr EnumName<Relaxation> kRelaxationNames[] = {{Relaxation::Combinatorial, "combinatorial"},
                                                     {Relaxation::BigMQp, "big_m_qp"}};
constexpr EnumName<BigMRule> kBigMRuleNames[] = {{BigMRule::IncumbentBound, "incumbent_bound"},
                                                 {BigMRule::InnovationScaled, "innovation_scaled"}};
constexpr EnumName<TdNormalization> kTdNames[] = {{TdNormalization::Innovation, "innovation"},
                                                  {TdNormalization::NoiseOnly, "noise_only"}};

template <class E, std::size_t N>
const char* enum_name(const EnumName<E> (&table)[N], E v) {
    for (const auto& e : table)
        if (e.value == v) return e.name;
    return "unknown";
}

// ---------------------------------------------------------------- strict reader

int line_of(const std::string& text, std::size_t byte) {
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size())), '\n'));
}

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown fields.
class Reader {
public:
    Reader(const json& obj, std::string path, const std::string& text) : obj_(obj), path_(std::move(path)), text_(text) {
        if (!obj_.is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
    }

    [[noreturn]] void fail(const std::string& field, const std::string& what) const {
        // Best-effort location: first occurrence of the key in the source text.
        const std::string key = field.substr(field.find_last_of('.') + 1);
        const std::size_t pos = text_.find("\"" + key + "\"");
        std::string where = pos == std::string::npos ? "" : "line " + std::to_string(line_of(text_, pos)) + ": ";
        config_error(where + "'" + field + "' " + what);
    }

    std::string full(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* get(const char* key) {
        seen_.push_back(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void number(const char* key, double& out) {
        if (const json* v = get(key)) {
            if (!v->is_number()) fail(full(key), "must be a number");
            out = v->get<double>();
        }
    }

    void integer(const char* key, int& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_integer()) fail(full(key), "must be an integer");
            out = v->get<int>();
        }
    }

    void unsigned64(const char* key, std::uint64_t& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_unsigned()) fail(full(key), "must be a nonnegative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void boolean(const char* key, bool& out) {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) fail(full(key), "must be true or false");
            out = v->get<bool>();
        }
    }

    void string(const char* key, std::string& out) {
        if (const json* v = get(key)) {
            if (!v->is_string()) fail(full(key), "must be a string");
            out = v->get<std::string>();
        }
    }

    void strings(const char* key, std::vector<std::string>& out) {
        if (const json* v = get(key)) {
            if (!v->is_array()) fail(full(key), "must be an array of strings");
            out.clear();
            for (const json& s : *v) {
                if (!s.is_string()) fail(full(key), "must be an array of strings");
                out.push_back(s.get<std::string>());
            }
        }
    }

    void integers(const char* key, std::vector<int>& out) {
        if (const json* v = get(key)) {
            if (!v->is_array()) fail(full(key), "must be an array of integers");
            out.clear();
            for (const json& s : *v) {
                if (!s.is_number_integer()) fail(full(key), "must be an array of integers");
                out.push_back(s.get<int>());
            }
        }
    }

    void vector(const char* key, Vector& out) {
        if (const json* v = get(key)) {
            if (!v->is_array()) fail(full(key), "must be an array of numbers");
            out.resize(static_cast<Eigen::Index>(v->size()));
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number()) fail(full(key), "must be an array of numbers");
                out(static_cast<Eigen::Index>(i)) = (*v)[i].get<double>();
            }
        }
    }

    template <class E, std::size_t N>
    void enumeration(const char* key, const EnumName<E> (&table)[N], E& out) {
        std::string s;
        string(key, s);
        if (s.empty()) return;
        for (const auto& e : table) {
            if (s == e.name) {
                out = e.value;
                return;
            }
        }
        std::string options;
        for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
        fail(full(key), "must be one of: " + options);
    }

    std::optional<Reader> child(const char* key) {
        if (const json* v = get(key)) return Reader(*v, full(key), text_);
        return std::nullopt;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                fail(path_.empty() ? it.key() : path_ + "." + it.key(), "is not a known field");
        }
    }

private:
    const json& obj_;
    std::string path_;
    const std::string& text_;
    std::vector<std::string> seen_;
};

ojson to_json(const Vector& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

// ---------------------------------------------------------------- formatting

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_batch(const MeasurementBatch& b, std::uint64_t h) {
    h = fnv1a(b.values.data(), sizeof(double) * static_cast<std::size_t>(b.values.size()), h);
    h = fnv1a(b.rows.data(), sizeof(double) * static_cast<std::size_t>(b.rows.size()), h);
    h = fnv1a(b.sigmas.data(), sizeof(double) * static_cast<std::size_t>(b.sigmas.size()), h);
    return fnv1a(&b.time, sizeof b.time, h);
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

InfoSpec make_spec(const RunConfig& cfg) { return InfoSpec{cfg.spec, std::nullopt}; }

DiscreteModel make_model(const RunConfig& cfg, const Scenario& s) {
    PvaParams p;
    p.period = s.trajectory.period;
    p.jerk_psd = cfg.jerk_psd;
    return discretize_pva(p);
}

}  // namespace

std::string version_string() { return RAPS_VERSION_STRING; }

// ---------------------------------------------------------------- config

Vector RunConfig::default_spec() {
    Vector v = Vector::Zero(kStateDim);
    v(0) = 1.389;
    v(1) = 1.389;
    v(2) = 0.347;
    return v;
}

void RunConfig::validate() const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) config_error(what);
    };
    try {
        trajectory.validate();
        outliers.validate();
        td.validate();
        bnb.validate();
    } catch (const Error& e) {
        config_error(e.what());
    }
    check(satellites >= 0, "'scenario.satellites' must be >= 0");
    check(elevation_min_deg > 0.0 && elevation_min_deg < elevation_max_deg && elevation_max_deg <= 90.0,
          "'scenario.elevation_min_deg' and 'elevation_max_deg' need 0 < min < max <= 90");
    check(sigma_noise >= 0.0, "'scenario.sigma_noise' must be >= 0");
    check(jerk_psd > 0.0, "'scenario.jerk_psd' must be > 0");
    check(initial_variances.size() == kStateDim && (initial_variances.array() > 0.0).all(),
          "'scenario.initial_variances' needs 9 positive entries");
    check(!estimators.empty(), "'estimators' must name at least one estimator");
    for (const std::string& e : estimators)
        check(std::find(kEstimators.begin(), kEstimators.end(), e) != kEstimators.end(),
              "'estimators' entry '" + e + "' is not one of kf, td, diag_raps, full_raps");
    for (std::size_t i = 0; i < estimators.size(); ++i)
        for (std::size_t j = i + 1; j < estimators.size(); ++j)
            check(estimators[i] != estimators[j], "'estimators' lists '" + estimators[i] + "' twice");
    check(spec.size() == kStateDim, "'spec' must have 9 entries");
    check((spec.array() >= 0.0).all() && spec.allFinite(), "'spec' entries must be finite and >= 0");
    check(full_time_limit >= 0.0, "'full_time_limit' must be >= 0");
    check(!bench_m.empty(), "'bench.m' must not be empty");
    for (int m : bench_m) check(m >= 1, "'bench.m' entries must be >= 1");
    check(!bench_methods.empty(), "'bench.methods' must not be empty");
    for (const std::string& m : bench_methods) check(m == "full" || m == "diag", "'bench.methods' entries must be full or diag");
    check(bench_epochs >= 1, "'bench.epochs' must be >= 1");
    check(bench_time_limit >= 0.0, "'bench.time_limit' must be >= 0");
    check(oracle_count >= 1, "'oracle.count' must be >= 1");
    check(!output_dir.empty(), "'output_dir' must not be empty");
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text.empty() ? std::string("{}") : text);
    } catch (const json::parse_error& e) {
        std::size_t col = e.byte;
        const std::size_t nl = text.rfind('\n', e.byte == 0 ? 0 : e.byte - 1);
        if (nl != std::string::npos && e.byte > 0) col = e.byte - nl - 1;
        config_error("line " + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) + ", column " +
                     std::to_string(col) + ": " + e.what());
    }
    RunConfig cfg;
    Reader root(doc, "", text);
    root.unsigned64("seed", cfg.seed);
    root.string("output_dir", cfg.output_dir);
    if (auto s = root.child("scenario")) {
        s->string("path", cfg.scenario_path);
        s->integer("satellites", cfg.satellites);
        s->number("elevation_min_deg", cfg.elevation_min_deg);
        s->number("elevation_max_deg", cfg.elevation_max_deg);
        s->number("sigma_noise", cfg.sigma_noise);
        s->number("jerk_psd", cfg.jerk_psd);
        s->vector("initial_variances", cfg.initial_variances);
        if (auto t = s->child("trajectory")) {
            t->number("edge", cfg.trajectory.edge);
            t->number("fillet", cfg.trajectory.fillet);
            t->number("speed", cfg.trajectory.speed);
            t->number("amplitude", cfg.trajectory.amplitude);
            t->number("vert_period", cfg.trajectory.vert_period);
            t->number("period", cfg.trajectory.period);
            t->integer("epochs", cfg.trajectory.epochs);
            t->finish();
        }
        if (auto o = s->child("outliers")) {
            o->number("a_el", cfg.outliers.a_el);
            o->number("a_az", cfg.outliers.a_az);
            o->number("epsilon", cfg.outliers.epsilon);
            o->boolean("literal_formulas", cfg.outliers.literal_formulas);
            o->finish();
        }
        s->finish();
    }
    root.strings("estimators", cfg.estimators);
    if (auto td = root.child("td")) {
        td->number("lambda", cfg.td.lambda);
        td->enumeration("normalization", kTdNames, cfg.td.normalization);
        td->finish();
    }
    root.vector("spec", cfg.spec);
    if (auto b = root.child("bnb")) {
        b->number("big_m_multiplier", cfg.bnb.big_m_multiplier);
        b->number("gap", cfg.bnb.gap);
        int node_limit = static_cast<int>(std::min<std::size_t>(cfg.bnb.node_limit, 2147483647));
        b->integer("node_limit", node_limit);
        if (node_limit < 1) b->fail("bnb.node_limit", "must be >= 1");
        cfg.bnb.node_limit = static_cast<std::size_t>(node_limit);
        b->number("time_limit", cfg.bnb.time_limit);
        b->enumeration("branching", kBranchingNames, cfg.bnb.branching);
        b->enumeration("order", kOrderNames, cfg.bnb.order);
        b->enumeration("relaxation", kRelaxationNames, cfg.bnb.relaxation);
        b->enumeration("big_m_rule", kBigMRuleNames, cfg.bnb.big_m_rule);
        if (const json* v = b->get("fixed_big_m")) {
            if (v->is_null()) {
                cfg.bnb.fixed_big_m.reset();
            } else if (v->is_number()) {
                cfg.bnb.fixed_big_m = v->get<double>();
            } else {
                b->fail("bnb.fixed_big_m", "must be a number or null");
            }
        }
        b->boolean("local_search", cfg.bnb.local_search);
        b->finish();
    }
    root.number("full_time_limit", cfg.full_time_limit);
    root.boolean("deterministic", cfg.deterministic);
    if (auto b = root.child("bench")) {
        b->integers("m", cfg.bench_m);
        b->strings("methods", cfg.bench_methods);
        b->integer("epochs", cfg.bench_epochs);
        b->number("time_limit", cfg.bench_time_limit);
        b->finish();
    }
    if (auto o = root.child("oracle")) {
        o->integer("count", cfg.oracle_count);
        o->finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    ojson j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    ojson s;
    s["path"] = cfg.scenario_path;
    s["satellites"] = cfg.satellites;
    s["elevation_min_deg"] = cfg.elevation_min_deg;
    s["elevation_max_deg"] = cfg.elevation_max_deg;
    s["sigma_noise"] = cfg.sigma_noise;
    s["jerk_psd"] = cfg.jerk_psd;
    s["initial_variances"] = to_json(cfg.initial_variances);
    const TrajectoryParams& t = cfg.trajectory;
    s["trajectory"] = ojson{{"edge", t.edge},           {"fillet", t.fillet}, {"speed", t.speed},
                            {"amplitude", t.amplitude}, {"vert_period", t.vert_period},
                            {"period", t.period},       {"epochs", t.epochs}};
    s["outliers"] = ojson{{"a_el", cfg.outliers.a_el},
                          {"a_az", cfg.outliers.a_az},
                          {"epsilon", cfg.outliers.epsilon},
                          {"literal_formulas", cfg.outliers.literal_formulas}};
    j["scenario"] = s;
    j["estimators"] = cfg.estimators;
    j["td"] = ojson{{"lambda", cfg.td.lambda}, {"normalization", enum_name(kTdNames, cfg.td.normalization)}};
    j["spec"] = to_json(cfg.spec);
    ojson b;
    b["big_m_multiplier"] = cfg.bnb.big_m_multiplier;
    b["gap"] = cfg.bnb.gap;
    b["node_limit"] = cfg.bnb.node_limit;
    b["time_limit"] = cfg.bnb.time_limit;
    b["branching"] = enum_name(kBranchingNames, cfg.bnb.branching);
    b["order"] = enum_name(kOrderNames, cfg.bnb.order);
    b["relaxation"] = enum_name(kRelaxationNames, cfg.bnb.relaxation);
    b["big_m_rule"] = enum_name(kBigMRuleNames, cfg.bnb.big_m_rule);
    b["fixed_big_m"] = cfg.bnb.fixed_big_m ? ojson(*cfg.bnb.fixed_big_m) : ojson(nullptr);
    b["local_search"] = cfg.bnb.local_search;
    j["bnb"] = b;
    j["full_time_limit"] = cfg.full_time_limit;
    j["deterministic"] = cfg.deterministic;
    j["bench"] = ojson{{"m", cfg.bench_m},
                       {"methods", cfg.bench_methods},
                       {"epochs", cfg.bench_epochs},
                       {"time_limit", cfg.bench_time_limit}};
    j["oracle"] = ojson{{"count", cfg.oracle_count}};
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
    // Where outputs land is not part of the experiment.
    RunConfig c = cfg;
    c.output_dir.clear();
    const std::string text = config_to_json(c);
    return hex64(fnv1a(text.data(), text.size()));
}

std::string provenance_line(const RunConfig& cfg) {
    return "# raps " + version_string() + " config_hash=" + config_hash(cfg) + " seed=" + std::to_string(cfg.seed) +
           "\n";
}

Scenario make_scenario(const RunConfig& cfg) {
    if (!cfg.scenario_path.empty()) return scenario_from_json(read_text_file(cfg.scenario_path));
    const Constellation c =
        generate_constellation(cfg.satellites, cfg.elevation_min_deg * kDeg, cfg.elevation_max_deg * kDeg, cfg.seed);
    return generate_scenario(cfg.trajectory, c, cfg.sigma_noise, cfg.outliers, cfg.seed, cfg.initial_variances);
}

// ---------------------------------------------------------------- comparison

std::vector<HistogramBin> runtime_histogram(const std::vector<double>& runtimes, double width) {
    std::vector<HistogramBin> bins;
    if (runtimes.empty()) return bins;
    const double top = *std::max_element(runtimes.begin(), runtimes.end());
    const auto count = static_cast<std::size_t>(std::floor(top / width)) + 1;
    bins.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        bins[i].lo = static_cast<double>(i) * width;
        bins[i].hi = static_cast<double>(i + 1) * width;
    }
    std::vector<std::size_t> hits(count, 0);
    for (double t : runtimes)
        ++hits[std::min(count - 1, static_cast<std::size_t>(std::floor(std::max(t, 0.0) / width)))];
    for (std::size_t i = 0; i < count; ++i)
        bins[i].probability = static_cast<double>(hits[i]) / static_cast<double>(runtimes.size());
    return bins;
}

namespace {

struct Step {
    EpochRecord record;
    StateBelief posterior;
};

Step run_estimator_epoch(const RunConfig& cfg, const std::string& name, const StateBelief& prior,
                         const MeasurementBatch& batch, const InfoSpec& spec) {
    Step out;
    EpochRecord& r = out.record;
    r.estimator = name;
    const RapsInstance inst = RapsInstance::from_belief(prior, batch, spec);
    Matrix info;
    Vector estimate;
    try {
        if (name == "kf") {
            const auto t0 = Clock::now();
            const MapUpdate u = kf_update(prior, batch);
            r.runtime = elapsed(t0);
            r.risk = evaluate_risk(inst, SelectionVector::all(batch.size()), u.estimate);
            r.n_selected = static_cast<int>(batch.size());
            r.status = "none";
            out.posterior = u.posterior;
            info = u.information;
            estimate = u.estimate;
        } else if (name == "td") {
            const auto t0 = Clock::now();
            const TdUpdate u = td_update(prior, batch, cfg.td);
            r.runtime = elapsed(t0);
            r.risk = evaluate_risk(inst, u.selection, u.update.estimate);
            r.n_selected = static_cast<int>(u.selection.count());
            r.status = "none";
            out.posterior = u.update.posterior;
            info = u.update.information;
            estimate = u.update.estimate;
        } else {
            const RapsMode mode = name == "full_raps" ? RapsMode::Full : RapsMode::Diag;
            BnbOptions opts = cfg.bnb;
            if (mode == RapsMode::Full) opts.time_limit = cfg.full_time_limit;
            if (cfg.deterministic) opts.time_limit = 0.0;  // node limit only
            const auto t0 = Clock::now();
            const SolveReport rep = solve_raps(inst, mode, opts);
            r.runtime = elapsed(t0);
            r.risk = rep.risk;
            r.n_selected = static_cast<int>(rep.selection.count());
            r.status = std::string(to_string(rep.status));
            info = rep.posterior_information;
            estimate = rep.estimate;
            out.posterior = StateBelief{estimate, spd_inverse(info), batch.time};
        }
    } catch (const Error&) {
        // Record the failure and keep the recursion alive on the KF update.
        const MapUpdate u = kf_update(prior, batch);
        r.status = "Error";
        r.risk = evaluate_risk(inst, SelectionVector::all(batch.size()), u.estimate);
        r.n_selected = static_cast<int>(batch.size());
        out.posterior = u.posterior;
        info = u.information;
        estimate = u.estimate;
    }
    out.posterior.time = batch.time;
    for (int a = 0; a < 3; ++a) r.sqrt_info(a) = std::sqrt(std::max(info(a, a), 0.0));
    r.spec_met = spec_satisfied(info, spec, RapsMode::Diag);
    r.error = estimate.head(3);
    return out;
}

}  // namespace

ComparisonResult run_comparison(const RunConfig& cfg) {
    cfg.validate();
    return run_comparison(cfg, make_scenario(cfg));
}

ComparisonResult run_comparison(const RunConfig& cfg, const Scenario& scenario) {
    cfg.validate();
    const InfoSpec spec = make_spec(cfg);
    const DiscreteModel model = make_model(cfg, scenario);
    const auto epochs = static_cast<std::size_t>(scenario.epochs());
    const std::size_t ne = cfg.estimators.size();

    ComparisonResult res;
    res.scenario_hash = batches_hash(scenario);
    std::vector<std::vector<EpochRecord>> per(ne);
    std::vector<std::uint64_t> stream_hash(ne, 0xcbf29ce484222325ULL);

    for (std::size_t e = 0; e < ne; ++e) {
        const std::string& name = cfg.estimators[e];
        StateBelief belief = scenario.initial;
        for (std::size_t k = 0; k < epochs; ++k) {
            if (k > 0) belief = propagate(belief, model);
            const MeasurementBatch& batch = scenario.batches[k];
            stream_hash[e] = hash_batch(batch, stream_hash[e]);
            Step step = run_estimator_epoch(cfg, name, belief, batch, spec);
            step.record.epoch = static_cast<int>(k);
            step.record.time = batch.time;
            step.record.error -= scenario.truth[k].head(3);
            if (step.record.status == "Error") ++res.hard_failures;

            if (name == "diag_raps") {
                const RapsInstance inst = RapsInstance::from_belief(belief, batch, spec);
                SharedPriorRecord sp;
                sp.epoch = static_cast<int>(k);
                sp.all_feasible =
                    spec_satisfied(posterior_information(inst, SelectionVector::all(batch.size())), spec, RapsMode::Diag);
                sp.diag_risk = step.record.risk;
                sp.kf_risk = optimal_risk_for_selection(inst, SelectionVector::all(batch.size())).risk;
                sp.td_risk = optimal_risk_for_selection(inst, td_select(belief, batch, cfg.td)).risk;
                sp.diag_status = step.record.status;
                res.shared.push_back(sp);
            }
            per[e].push_back(step.record);
            belief = step.posterior;
        }
    }
    for (std::size_t e = 1; e < ne; ++e) res.streams_identical = res.streams_identical && stream_hash[e] == stream_hash[0];

    for (std::size_t k = 0; k < epochs; ++k)
        for (std::size_t e = 0; e < ne; ++e) res.records.push_back(per[e][k]);

    for (std::size_t e = 0; e < ne; ++e) {
        EstimatorSummary s;
        std::vector<double> times;
        double sq = 0.0;
        for (const EpochRecord& r : per[e]) {
            s.mean_risk += r.risk;
            s.spec_rate += r.spec_met ? 1.0 : 0.0;
            s.failures += r.status == "Error" ? 1 : 0;
            sq += r.error.squaredNorm();
            times.push_back(r.runtime);
        }
        const double n = std::max<double>(1.0, static_cast<double>(per[e].size()));
        s.mean_risk /= n;
        s.spec_rate /= n;
        s.rmse = std::sqrt(sq / n);
        if (!times.empty()) {
            s.mean_runtime = std::accumulate(times.begin(), times.end(), 0.0) / n;
            s.median_runtime = median(times);
            s.max_runtime = *std::max_element(times.begin(), times.end());
        }
        if (cfg.estimators[e] == "diag_raps") res.diag_histogram = runtime_histogram(times);
        res.summary[cfg.estimators[e]] = s;
    }
    return res;
}

std::string epochs_csv(const RunConfig& cfg, const ComparisonResult& result) {
    std::ostringstream out;
    out << provenance_line(cfg);
    out << "epoch,time_s,estimator,sqrtinfo_n,sqrtinfo_e,sqrtinfo_d,risk,n_selected,status,runtime_s,err_n,err_e,err_d\n";
    for (const EpochRecord& r : result.records) {
        out << r.epoch << ',' << fmt(r.time) << ',' << r.estimator << ',' << fmt(r.sqrt_info(0)) << ','
            << fmt(r.sqrt_info(1)) << ',' << fmt(r.sqrt_info(2)) << ',' << fmt(r.risk) << ',' << r.n_selected << ','
            << r.status << ',' << (cfg.deterministic ? std::string("NA") : fmt(r.runtime)) << ',' << fmt(r.error(0))
            << ',' << fmt(r.error(1)) << ',' << fmt(r.error(2)) << '\n';
    }
    return out.str();
}

void write_comparison(const RunConfig& cfg, const ComparisonResult& result) {
    ensure_dir(cfg.output_dir);
    write_text_file(join(cfg.output_dir, "config.json"), config_to_json(cfg));
    write_text_file(join(cfg.output_dir, "epochs.csv"), epochs_csv(cfg, result));

    std::ostringstream timing;
    timing << provenance_line(cfg) << "epoch,estimator,runtime_s\n";
    for (const EpochRecord& r : result.records) timing << r.epoch << ',' << r.estimator << ',' << fmt(r.runtime) << '\n';
    write_text_file(join(cfg.output_dir, "timing.csv"), timing.str());

    std::ostringstream hist;
    hist << provenance_line(cfg) << "bin_lo_s,bin_hi_s,probability\n";
    for (const HistogramBin& b : result.diag_histogram)
        hist << fmt(b.lo) << ',' << fmt(b.hi) << ',' << fmt(b.probability) << '\n';
    write_text_file(join(cfg.output_dir, "histogram.csv"), hist.str());

    ojson j;
    j["version"] = version_string();
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["scenario_hash"] = hex64(result.scenario_hash);
    j["streams_identical"] = result.streams_identical;
    j["hard_failures"] = result.hard_failures;
    ojson est;
    for (const std::string& name : cfg.estimators) {
        const EstimatorSummary& s = result.summary.at(name);
        est[name] = ojson{{"mean_risk", s.mean_risk},
                          {"spec_satisfaction_rate", s.spec_rate},
                          {"mean_runtime_s", s.mean_runtime},
                          {"median_runtime_s", s.median_runtime},
                          {"max_runtime_s", s.max_runtime},
                          {"position_rmse_m", s.rmse},
                          {"failures", s.failures}};
    }
    j["estimators"] = est;
    ojson bins = ojson::array();
    for (const HistogramBin& b : result.diag_histogram)
        bins.push_back(ojson{{"lo_s", b.lo}, {"hi_s", b.hi}, {"probability", b.probability}});
    j["diag_raps_runtime_histogram"] = ojson{{"bin_width_s", kHistogramBinWidth}, {"bins", bins}};
    if (!result.shared.empty()) {
        int feasible = 0, kf_violations = 0, td_not_worse = 0;
        for (const SharedPriorRecord& sp : result.shared) {
            if (sp.all_feasible) {
                ++feasible;
                if (sp.diag_risk > sp.kf_risk + 1e-6) ++kf_violations;
            }
            if (sp.diag_risk <= sp.td_risk) ++td_not_worse;
        }
        j["risk_dominance"] = ojson{{"epochs", result.shared.size()},
                                    {"all_measurements_feasible_epochs", feasible},
                                    {"kf_violations", kf_violations},
                                    {"td_not_worse_rate", static_cast<double>(td_not_worse) /
                                                              static_cast<double>(result.shared.size())}};
    }
    write_text_file(join(cfg.output_dir, "summary.json"), j.dump(2) + "\n");
}

// ---------------------------------------------------------------- bench

BenchResult run_bench(const RunConfig& cfg) {
    cfg.validate();
    BenchResult res;
    const InfoSpec spec = make_spec(cfg);
    for (int m : cfg.bench_m) {
        RunConfig sc = cfg;
        sc.satellites = m;
        sc.scenario_path.clear();
        const Scenario scenario = make_scenario(sc);
        const DiscreteModel model = make_model(cfg, scenario);
        const auto epochs = static_cast<int>(scenario.epochs());
        const int count = std::min(cfg.bench_epochs, epochs);
        std::vector<int> picks;
        for (int j = 0; j < count; ++j) picks.push_back((j + 1) * epochs / count - 1);

        std::vector<BenchPoint> points;
        for (const std::string& method : cfg.bench_methods) points.push_back(BenchPoint{m, method, {}, 0, 0, 0, 0, 0});

        StateBelief belief = scenario.initial;
        std::size_t next = 0;
        for (int k = 0; k < epochs && next < picks.size(); ++k) {
            if (k > 0) belief = propagate(belief, model);
            const MeasurementBatch& batch = scenario.batches[static_cast<std::size_t>(k)];
            if (k == picks[next]) {
                const RapsInstance inst = RapsInstance::from_belief(belief, batch, spec);
                for (BenchPoint& p : points) {
                    BnbOptions opts = cfg.bnb;
                    opts.time_limit = cfg.bench_time_limit;
                    const RapsMode mode = p.method == "full" ? RapsMode::Full : RapsMode::Diag;
                    const auto t0 = Clock::now();
                    const SolveReport rep = solve_raps(inst, mode, opts);
                    const double dt = elapsed(t0);
                    p.runtimes.push_back(dt);
                    p.limit_hits += rep.status == SolveStatus::IterationLimit ? 1 : 0;
                    p.infeasible += rep.status == SolveStatus::InfeasibleSpec ? 1 : 0;
                    res.samples.push_back(BenchSample{m, p.method, static_cast<int>(next), k, dt,
                                                      std::string(to_string(rep.status))});
                }
                ++next;
            }
            belief = kf_update(belief, batch).posterior;
        }
        for (BenchPoint& p : points) {
            const double n = static_cast<double>(p.runtimes.size());
            p.epochs_used = static_cast<int>(p.runtimes.size());
            p.mean = std::accumulate(p.runtimes.begin(), p.runtimes.end(), 0.0) / std::max(n, 1.0);
            double ss = 0.0;
            for (double t : p.runtimes) ss += (t - p.mean) * (t - p.mean);
            p.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
            res.points.push_back(p);
        }
    }
    return res;
}

void write_bench(const RunConfig& cfg, const BenchResult& result) {
    ensure_dir(cfg.output_dir);
    write_text_file(join(cfg.output_dir, "config.json"), config_to_json(cfg));
    std::ostringstream csv;
    csv << provenance_line(cfg) << "m,method,run_idx,runtime_s\n";
    for (const BenchSample& s : result.samples)
        csv << s.m << ',' << s.method << ',' << s.run_idx << ',' << fmt(s.runtime) << '\n';
    write_text_file(join(cfg.output_dir, "bench.csv"), csv.str());

    ojson j;
    j["version"] = version_string();
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    ojson pts = ojson::array();
    for (const BenchPoint& p : result.points) {
        pts.push_back(ojson{{"m", p.m},
                            {"method", p.method},
                            {"mean_s", p.mean},
                            {"stddev_s", p.stddev},
                            {"epochs_used", p.epochs_used},
                            {"limit_hits", p.limit_hits},
                            {"infeasible_spec", p.infeasible},
                            {"flagged", p.limit_hits > 0}});
    }
    j["points"] = pts;
    write_text_file(join(cfg.output_dir, "bench_summary.json"), j.dump(2) + "\n");
}

// ---------------------------------------------------------------- oracle check

RapsInstance random_oracle_instance(std::uint64_t seed, std::uint64_t index) {
    Rng rng(seed, 1000 + index);
    const int n = 2 + static_cast<int>(rng.uniform() * 3.0);
    const int m = 6 + static_cast<int>(rng.uniform() * 7.0);
    Matrix g(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) g(a, b) = rng.normal();
    RapsInstance inst;
    inst.prior_information = 0.05 * (g * g.transpose() / n + 0.2 * Matrix::Identity(n, n));
    inst.prior_mean = Vector(n);
    for (int a = 0; a < n; ++a) inst.prior_mean(a) = rng.normal(0.0, 5.0);
    Vector truth = inst.prior_mean;
    for (int a = 0; a < n; ++a) truth(a) += rng.normal();

    inst.batch.rows = Matrix(m, n);
    inst.batch.values = Vector(m);
    inst.batch.sigmas = Vector(m);
    for (int i = 0; i < m; ++i) {
        Vector h(n);
        for (int a = 0; a < n; ++a) h(a) = rng.normal();
        inst.batch.rows.row(i) = h.normalized().transpose();
        inst.batch.sigmas(i) = rng.uniform(0.5, 2.0);
        double y = inst.batch.rows.row(i).dot(truth) + rng.normal(0.0, inst.batch.sigmas(i));
        if (rng.uniform() < 0.15) y += rng.normal(0.0, 10.0 * inst.batch.sigmas(i));
        inst.batch.values(i) = y;
    }
    inst.spec = InfoSpec::zeros(n);
    // Every 25th instance keeps J_d = 0: the degenerate case where b = 0 is optimal.
    if (index % 25 != 0) {
        const Matrix j_all = inst.prior_information + inst.batch.rows.transpose() *
                                                          inst.batch.weights().asDiagonal() * inst.batch.rows;
        const double floor = min_eigenvalue(j_all);
        for (int a = 0; a < n; ++a) inst.spec.diag_lower_bound(a) = (0.2 + 0.8 * rng.uniform()) * floor;
    }
    return inst;
}

OracleReport run_oracle_check(const RunConfig& cfg, int count, std::uint64_t seed) {
    if (count < 1) config_error("oracle-check needs count >= 1");
    OracleReport rep;
    rep.count = count;
    const auto start = Clock::now();
    for (int i = 0; i < count; ++i) {
        const RapsInstance inst = random_oracle_instance(seed, static_cast<std::uint64_t>(i));
        bool ok = true;
        for (RapsMode mode : {RapsMode::Diag, RapsMode::Full}) {
            const SolveReport ex = exhaustive_raps(inst, mode);
            const SolveReport bb = solve_raps(inst, mode, cfg.bnb);
            if (ex.status == bb.status && std::abs(ex.risk - bb.risk) <= 1e-6) continue;
            ok = false;
            OracleFailure f;
            f.index = i;
            f.mode = std::string(to_string(mode));
            f.bnb_risk = bb.risk;
            f.exhaustive_risk = ex.risk;
            f.bnb_status = std::string(to_string(bb.status));
            f.exhaustive_status = std::string(to_string(ex.status));
            ensure_dir(cfg.output_dir);
            f.reproducer = join(cfg.output_dir, "oracle_failure_" + std::to_string(i) + "_" + f.mode + ".json");
            write_text_file(f.reproducer, instance_to_json(inst));
            rep.failures.push_back(f);
        }
        rep.passed += ok ? 1 : 0;
    }
    rep.seconds = elapsed(start);
    return rep;
}

std::string oracle_report_json(const RunConfig& cfg, const OracleReport& report) {
    ojson j;
    j["version"] = version_string();
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["count"] = report.count;
    j["passed"] = report.passed;
    j["seconds"] = report.seconds;
    ojson fails = ojson::array();
    for (const OracleFailure& f : report.failures) {
        fails.push_back(ojson{{"index", f.index},
                              {"mode", f.mode},
                              {"bnb_risk", f.bnb_risk},
                              {"exhaustive_risk", f.exhaustive_risk},
                              {"bnb_status", f.bnb_status},
                              {"exhaustive_status", f.exhaustive_status},
                              {"reproducer", f.reproducer}});
    }
    j["failures"] = fails;
    return j.dump(2) + "\n";
}

}  // namespace raps::harness
