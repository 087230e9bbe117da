#include "raps/sim.hpp"

#include <cmath>
#include <string>

#include "raps/dynamics.hpp"
#include "raps/error.hpp"
#include "raps/rng.hpp"

namespace raps {

namespace {

// Substream identifiers of one scenario seed.
enum Stream : std::uint64_t { kNoise = 1, kOutlier = 2, kInitial = 3, kConstellation = 4 };

void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidParams, what);
}

}  // namespace

void TrajectoryParams::validate() const {
    require(fillet >= 0.0, "TrajectoryParams: fillet must be >= 0");
    require(edge > 2.0 * fillet, "TrajectoryParams: edge must exceed twice the fillet");
    require(speed > 0.0, "TrajectoryParams: speed must be > 0");
    require(vert_period > 0.0, "TrajectoryParams: vertical period must be > 0");
    require(period > 0.0, "TrajectoryParams: period must be > 0");
    require(epochs >= 0, "TrajectoryParams: epochs must be >= 0");
}

double TrajectoryParams::perimeter() const { return 4.0 * (edge - 2.0 * fillet) + 2.0 * kPi * fillet; }

Vector trajectory_state(const TrajectoryParams& p, double t) {
    const double half = 0.5 * p.edge;
    const double straight = p.edge - 2.0 * p.fillet;
    const double side = straight + 0.5 * kPi * p.fillet;
    const double v = p.speed;

    double s = std::fmod(v * t, p.perimeter());
    if (s < 0.0) s += p.perimeter();
    int q = static_cast<int>(s / side);
    if (q > 3) q = 3;
    const double u = s - q * side;

    // Side 0 runs along E = -half in the +N direction, then turns left into +E.
    double pos[2], vel[2], acc[2];
    if (u < straight) {
        pos[0] = -half + p.fillet + u;
        pos[1] = -half;
        vel[0] = v;
        vel[1] = 0.0;
        acc[0] = acc[1] = 0.0;
    } else {
        const double phi = (u - straight) / p.fillet;
        const double cn = half - p.fillet, ce = -half + p.fillet;
        pos[0] = cn + p.fillet * std::sin(phi);
        pos[1] = ce - p.fillet * std::cos(phi);
        vel[0] = v * std::cos(phi);
        vel[1] = v * std::sin(phi);
        const double a = v * v / p.fillet;
        acc[0] = -a * std::sin(phi);
        acc[1] = a * std::cos(phi);
    }

    // Rotate by q quarter turns in the (N, E) plane.
    auto rotate = [q](double* w) {
        for (int k = 0; k < q; ++k) {
            const double n = w[0];
            w[0] = -w[1];
            w[1] = n;
        }
    };
    rotate(pos);
    rotate(vel);
    rotate(acc);

    const double omega = 2.0 * kPi / p.vert_period;
    Vector x(kStateDim);
    x << pos[0], pos[1], p.amplitude * std::sin(omega * t),
        vel[0], vel[1], p.amplitude * omega * std::cos(omega * t),
        acc[0], acc[1], -p.amplitude * omega * omega * std::sin(omega * t);
    return x;
}

std::vector<Vector> generate_trajectory(const TrajectoryParams& p) {
    p.validate();
    std::vector<Vector> states;
    states.reserve(static_cast<std::size_t>(p.epochs));
    for (int k = 0; k < p.epochs; ++k) states.push_back(trajectory_state(p, k * p.period));
    return states;
}

Constellation generate_constellation(Eigen::Index m, double el_min, double el_max, std::uint64_t seed) {
    require(m >= 0, "generate_constellation: m must be >= 0");
    require(el_min > 0.0 && el_min < el_max && el_max <= 0.5 * kPi,
            "generate_constellation: need 0 < el_min < el_max <= pi/2");
    Rng rng(seed, kConstellation);
    Constellation c{Vector(m), Vector(m)};
    for (Eigen::Index i = 0; i < m; ++i) {
        c.azimuth(i) = rng.uniform(0.0, 2.0 * kPi);
        c.elevation(i) = rng.uniform(el_min, el_max);
    }
    return c;
}

Vector los_row(double azimuth, double elevation, Eigen::Index n) {
    require(elevation > 0.0, "los_row: elevation must be > 0");
    require(n >= 3, "los_row: state dimension must be >= 3");
    Vector h = Vector::Zero(n);
    h(0) = std::cos(elevation) * std::cos(azimuth);
    h(1) = std::cos(elevation) * std::sin(azimuth);
    h(2) = std::sin(elevation);
    return h;
}

void OutlierModel::validate() const {
    require(a_el >= 0.0 && a_az >= 0.0, "OutlierModel: coefficients must be >= 0");
    require(epsilon > 0.0, "OutlierModel: epsilon must be > 0");
}

double outlier_sigma(const OutlierModel& model, double elevation, double relative_azimuth) {
    model.validate();
    require(elevation > 0.0, "outlier_sigma: elevation must be > 0");
    require(relative_azimuth > -kPi - 1e-12 && relative_azimuth <= kPi + 1e-12,
            "outlier_sigma: relative azimuth must lie in (-pi, pi]");
    const double el_arg = model.literal_formulas ? std::abs(relative_azimuth) : elevation;
    const double az_arg = model.literal_formulas ? elevation : std::abs(relative_azimuth);
    const double s_el = model.a_el / (el_arg + model.epsilon);
    const double s_az = model.a_az / (az_arg + model.epsilon);
    return std::sqrt(s_el * s_el + s_az * s_az);
}

double relative_azimuth(double azimuth, const Vector& position) {
    const double bearing = std::atan2(-position(1), -position(0));
    double d = std::remainder(azimuth - bearing, 2.0 * kPi);
    if (d <= -kPi) d += 2.0 * kPi;
    return d;
}

Vector default_initial_variances() {
    Vector v(kStateDim);
    v << 100, 100, 100, 25, 25, 25, 10, 10, 10;
    return v;
}

Scenario generate_scenario(const TrajectoryParams& traj, const Constellation& constellation,
                           double sigma_noise, const OutlierModel& model, std::uint64_t seed,
                           const Vector& initial_variances) {
    traj.validate();
    model.validate();
    require(sigma_noise >= 0.0, "generate_scenario: sigma_noise must be >= 0");
    require(constellation.elevation.size() == constellation.azimuth.size(),
            "generate_scenario: constellation arrays differ in length");
    require(initial_variances.size() == kStateDim && (initial_variances.array() > 0.0).all(),
            "generate_scenario: initial variances must be 9 positive entries");

    Scenario sc;
    sc.trajectory = traj;
    sc.constellation = constellation;
    sc.sigma_noise = sigma_noise;
    sc.outliers = model;
    sc.seed = seed;
    sc.truth = generate_trajectory(traj);

    const Eigen::Index m = constellation.size();
    Matrix rows(m, kStateDim);
    for (Eigen::Index i = 0; i < m; ++i)
        rows.row(i) = los_row(constellation.azimuth(i), constellation.elevation(i)).transpose();

    // Measurements are reported with the nominal noise level; outliers are unmodeled.
    const double reported_sigma = sigma_noise > 0.0 ? sigma_noise : 1.0;

    Rng noise_rng(seed, kNoise), outlier_rng(seed, kOutlier);
    for (int k = 0; k < traj.epochs; ++k) {
        const Vector& x = sc.truth[static_cast<std::size_t>(k)];
        Vector eta(m), s(m);
        for (Eigen::Index i = 0; i < m; ++i) eta(i) = noise_rng.normal(0.0, sigma_noise);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double psi = relative_azimuth(constellation.azimuth(i), x);
            const double ss = outlier_sigma(model, constellation.elevation(i), psi);
            s(i) = outlier_rng.normal(0.0, ss);
        }
        MeasurementBatch b;
        b.rows = rows;
        b.values = rows * x + eta + s;
        b.sigmas = Vector::Constant(m, reported_sigma);
        b.time = k * traj.period;
        sc.batches.push_back(std::move(b));
        sc.noise_draws.push_back(std::move(eta));
        sc.outlier_draws.push_back(std::move(s));
    }

    Rng init_rng(seed, kInitial);
    const Vector x0 = sc.truth.empty() ? trajectory_state(traj, 0.0) : sc.truth.front();
    Vector mean(kStateDim);
    for (Eigen::Index j = 0; j < kStateDim; ++j)
        mean(j) = x0(j) + init_rng.normal(0.0, std::sqrt(initial_variances(j)));
    sc.initial = StateBelief{mean, initial_variances.asDiagonal(), 0.0};
    return sc;
}

}  // namespace raps
