#include "raps/scenario_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "raps/error.hpp"

namespace raps {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::IoError, what); }

json vec(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(encode_double(v(i)));
    return a;
}

json mat(const Matrix& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", a}};
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) fail(std::string("missing field '") + key + "'");
    return j.at(key);
}

double num(const json& j, const char* key) {
    const json& v = field(j, key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a hex-float string");
    return decode_double(v.get<std::string>());
}

Vector to_vec(const json& j) {
    if (!j.is_array()) fail("expected an array of hex-float strings");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_string()) fail("expected a hex-float string");
        v(static_cast<Eigen::Index>(i)) = decode_double(j[i].get<std::string>());
    }
    return v;
}

Matrix to_mat(const json& j) {
    const auto rows = field(j, "rows").get<Eigen::Index>();
    const auto cols = field(j, "cols").get<Eigen::Index>();
    const json& data = field(j, "data");
    if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows)
        fail("matrix shape does not match its data");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Vector row = to_vec(data[static_cast<std::size_t>(r)]);
        if (row.size() != cols) fail("matrix row length does not match cols");
        m.row(r) = row.transpose();
    }
    return m;
}

json batch_json(const MeasurementBatch& b) {
    return json{{"time", encode_double(b.time)}, {"values", vec(b.values)}, {"rows", mat(b.rows)},
                {"sigmas", vec(b.sigmas)}};
}

MeasurementBatch batch_from(const json& j) {
    MeasurementBatch b;
    b.time = num(j, "time");
    b.values = to_vec(field(j, "values"));
    b.rows = to_mat(field(j, "rows"));
    b.sigmas = to_vec(field(j, "sigmas"));
    return b;
}

json vec_list(const std::vector<Vector>& vs) {
    json a = json::array();
    for (const Vector& v : vs) a.push_back(vec(v));
    return a;
}

std::vector<Vector> vec_list_from(const json& j) {
    if (!j.is_array()) fail("expected an array of vectors");
    std::vector<Vector> out;
    out.reserve(j.size());
    for (const json& v : j) out.push_back(to_vec(v));
    return out;
}

json parse(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("malformed JSON: ") + e.what());
    }
}

void check_schema(const json& j, const char* kind, int version) {
    if (field(j, "kind") != kind) fail(std::string("document kind is not '") + kind + "'");
    if (field(j, "schema_version") != version)
        fail("unsupported schema_version " + field(j, "schema_version").dump());
}

}  // namespace

std::string encode_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    std::string body(buf, res.ptr);
    if (!std::isfinite(v)) return body;
    // "-1.8p+1" -> "-0x1.8p+1"
    if (body.front() == '-') return "-0x" + body.substr(1);
    return "0x" + body;
}

double decode_double(std::string_view text) {
    bool neg = false;
    if (!text.empty() && text.front() == '-') {
        neg = true;
        text.remove_prefix(1);
    }
    if (text.size() >= 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) text.remove_prefix(2);
    if (text.empty() || text.front() == '-' || text.front() == '+') fail("malformed hex-float '" + std::string(text) + "'");
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v, std::chars_format::hex);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        fail("malformed hex-float '" + std::string(text) + "'");
    return neg ? -v : v;
}

std::string scenario_to_json(const Scenario& s) {
    const TrajectoryParams& t = s.trajectory;
    json j;
    j["kind"] = "raps-scenario";
    j["schema_version"] = kScenarioSchemaVersion;
    j["seed"] = std::to_string(s.seed);
    j["trajectory"] = json{{"edge", encode_double(t.edge)},
                           {"fillet", encode_double(t.fillet)},
                           {"speed", encode_double(t.speed)},
                           {"amplitude", encode_double(t.amplitude)},
                           {"vert_period", encode_double(t.vert_period)},
                           {"period", encode_double(t.period)},
                           {"epochs", t.epochs}};
    j["constellation"] = json{{"azimuth", vec(s.constellation.azimuth)}, {"elevation", vec(s.constellation.elevation)}};
    j["sigma_noise"] = encode_double(s.sigma_noise);
    j["outliers"] = json{{"a_el", encode_double(s.outliers.a_el)},
                         {"a_az", encode_double(s.outliers.a_az)},
                         {"epsilon", encode_double(s.outliers.epsilon)},
                         {"literal_formulas", s.outliers.literal_formulas}};
    j["initial"] = json{{"time", encode_double(s.initial.time)},
                        {"mean", vec(s.initial.mean)},
                        {"covariance", mat(s.initial.covariance)}};
    j["truth"] = vec_list(s.truth);
    j["noise_draws"] = vec_list(s.noise_draws);
    j["outlier_draws"] = vec_list(s.outlier_draws);
    json batches = json::array();
    for (const MeasurementBatch& b : s.batches) batches.push_back(batch_json(b));
    j["batches"] = std::move(batches);
    return j.dump(1) + "\n";
}

Scenario scenario_from_json(std::string_view text) {
    const json j = parse(text);
    Scenario s;
    try {
        check_schema(j, "raps-scenario", kScenarioSchemaVersion);
        s.seed = std::stoull(field(j, "seed").get<std::string>());
        const json& t = field(j, "trajectory");
        s.trajectory.edge = num(t, "edge");
        s.trajectory.fillet = num(t, "fillet");
        s.trajectory.speed = num(t, "speed");
        s.trajectory.amplitude = num(t, "amplitude");
        s.trajectory.vert_period = num(t, "vert_period");
        s.trajectory.period = num(t, "period");
        s.trajectory.epochs = field(t, "epochs").get<int>();
        const json& c = field(j, "constellation");
        s.constellation.azimuth = to_vec(field(c, "azimuth"));
        s.constellation.elevation = to_vec(field(c, "elevation"));
        s.sigma_noise = num(j, "sigma_noise");
        const json& o = field(j, "outliers");
        s.outliers.a_el = num(o, "a_el");
        s.outliers.a_az = num(o, "a_az");
        s.outliers.epsilon = num(o, "epsilon");
        s.outliers.literal_formulas = field(o, "literal_formulas").get<bool>();
        const json& init = field(j, "initial");
        s.initial.time = num(init, "time");
        s.initial.mean = to_vec(field(init, "mean"));
        s.initial.covariance = to_mat(field(init, "covariance"));
        s.truth = vec_list_from(field(j, "truth"));
        s.noise_draws = vec_list_from(field(j, "noise_draws"));
        s.outlier_draws = vec_list_from(field(j, "outlier_draws"));
        const json& batches = field(j, "batches");
        if (!batches.is_array()) fail("'batches' must be an array");
        for (const json& b : batches) s.batches.push_back(batch_from(b));
    } catch (const json::exception& e) {
        fail(std::string("scenario JSON: ") + e.what());
    } catch (const std::logic_error& e) {
        fail(std::string("scenario JSON: ") + e.what());
    }
    const std::size_t k = s.truth.size();
    if (s.batches.size() != k || s.noise_draws.size() != k || s.outlier_draws.size() != k)
        fail("scenario JSON: per-epoch arrays differ in length");
    if (s.constellation.azimuth.size() != s.constellation.elevation.size())
        fail("scenario JSON: constellation arrays differ in length");
    try {
        s.trajectory.validate();
        s.outliers.validate();
        s.initial.validate();
        for (const MeasurementBatch& b : s.batches) b.validate(s.initial.dim());
    } catch (const Error& e) {
        fail(std::string("scenario JSON: ") + e.what());
    }
    return s;
}

std::string instance_to_json(const RapsInstance& inst) {
    json j;
    j["kind"] = "raps-instance";
    j["schema_version"] = kInstanceSchemaVersion;
    j["prior_mean"] = vec(inst.prior_mean);
    j["prior_information"] = mat(inst.prior_information);
    j["batch"] = batch_json(inst.batch);
    j["spec"] = json{{"diag_lower_bound", vec(inst.spec.diag_lower_bound)}};
    if (inst.spec.full) j["spec"]["full"] = mat(*inst.spec.full);
    return j.dump(1) + "\n";
}

RapsInstance instance_from_json(std::string_view text) {
    const json j = parse(text);
    RapsInstance inst;
    try {
        check_schema(j, "raps-instance", kInstanceSchemaVersion);
        inst.prior_mean = to_vec(field(j, "prior_mean"));
        inst.prior_information = to_mat(field(j, "prior_information"));
        inst.batch = batch_from(field(j, "batch"));
        const json& spec = field(j, "spec");
        inst.spec.diag_lower_bound = to_vec(field(spec, "diag_lower_bound"));
        if (spec.contains("full")) inst.spec.full = to_mat(spec.at("full"));
        inst.validate();
    } catch (const json::exception& e) {
        fail(std::string("instance JSON: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::IoError) throw;
        fail(std::string("instance JSON: ") + e.what());
    }
    return inst;
}

std::uint64_t batches_hash(const Scenario& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const MeasurementBatch& b : s.batches) {
        for (const char c : batch_json(b).dump()) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace raps
