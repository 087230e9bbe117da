#pragma once

// Scenario generator: a vehicle circling a city block under a fixed random
// satellite constellation, with Gaussian noise plus elevation/azimuth
// dependent outliers from a reflector at the block center.

#include <cstdint>
#include <vector>

#include "raps/linalg.hpp"
#include "raps/types.hpp"

namespace raps {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr int kStateDim = 9;

struct TrajectoryParams {
    double edge = 200.0;       // m
    double fillet = 10.0;      // corner radius, m
    double speed = 10.0;       // m/s
    double amplitude = 2.0;    // vertical, m
    double vert_period = 120.0;  // s
    double period = 1.0;       // epoch period T, s
    int epochs = 240;

    void validate() const;
    double perimeter() const;
    double lap_time() const { return perimeter() / speed; }
};

/// Truth state (pN, pE, pD, vN, vE, vD, aN, aE, aD) at time t.
Vector trajectory_state(const TrajectoryParams& p, double t);

/// One state per epoch, epoch k at t = k T.
std::vector<Vector> generate_trajectory(const TrajectoryParams& p);

struct Constellation {
    Vector azimuth;    // rad, [0, 2 pi)
    Vector elevation;  // rad

    Eigen::Index size() const { return azimuth.size(); }
};

inline constexpr double kDefaultElevationMin = 5.0 * kPi / 180.0;
inline constexpr double kDefaultElevationMax = 85.0 * kPi / 180.0;

Constellation generate_constellation(Eigen::Index m, double el_min, double el_max,
                                     std::uint64_t seed);

/// Unit line-of-sight row (cos el cos az, cos el sin az, sin el, 0, ...).
Vector los_row(double azimuth, double elevation, Eigen::Index n = kStateDim);

struct OutlierModel {
    double a_el = 0.6;   // m rad
    double a_az = 0.3;   // m rad
    double epsilon = 0.05;  // rad
    /// Swap the angle arguments of the two terms (elevation term divided by the
    /// azimuth offset and vice versa).
    bool literal_formulas = false;

    void validate() const;
};

/// Outlier standard deviation for elevation theta and reflector-relative azimuth psi.
double outlier_sigma(const OutlierModel& model, double elevation, double relative_azimuth);

/// Satellite azimuth minus the bearing from `position` (N, E) to the origin,
/// wrapped to (-pi, pi].
double relative_azimuth(double azimuth, const Vector& position);

struct Scenario {
    TrajectoryParams trajectory;
    Constellation constellation;
    double sigma_noise = 1.5;
    OutlierModel outliers;
    std::uint64_t seed = 0;

    std::vector<Vector> truth;
    std::vector<MeasurementBatch> batches;
    std::vector<Vector> noise_draws;    // eta per epoch
    std::vector<Vector> outlier_draws;  // s per epoch
    StateBelief initial;                // belief at t = 0, before the first update

    Eigen::Index epochs() const { return static_cast<Eigen::Index>(truth.size()); }
};

/// P0 = diag(100, 100, 100, 25, 25, 25, 10, 10, 10).
Vector default_initial_variances();

Scenario generate_scenario(const TrajectoryParams& traj, const Constellation& constellation,
                           double sigma_noise, const OutlierModel& model, std::uint64_t seed,
                           const Vector& initial_variances = default_initial_variances());

}  // namespace raps
