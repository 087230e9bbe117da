#pragma once

#include "raps/linalg.hpp"
#include "raps/types.hpp"

namespace raps {

/// Position-velocity-acceleration model driven by white jerk noise.
struct PvaParams {
    double period = 1.0;       // T, seconds
    double jerk_psd = 1.0;     // S, m^2/s^5 per axis
    int axes = 3;

    void validate() const;
};

struct DiscreteModel {
    Matrix transition;      // F
    Matrix process_noise;   // Q
    double period = 0.0;
};

/// Index of the `block`-th derivative (0 = position, 1 = velocity, 2 = acceleration)
/// of `axis` in the state ordering (p1..p3, v1..v3, a1..a3).
constexpr Eigen::Index pva_index(int block, int axis, int axes = 3) { return block * axes + axis; }

/// Closed-form F and Q for the triple integrator over one period:
///   F_a = [[1, T, T^2/2], [0, 1, T], [0, 0, 1]]
///   Q_a = S [[T^5/20, T^4/8, T^3/6], [T^4/8, T^3/3, T^2/2], [T^3/6, T^2/2, T]]
DiscreteModel discretize_pva(const PvaParams& params);

/// mean <- F mean, P <- F P F^T + Q, time <- time + T.
StateBelief propagate(const StateBelief& belief, const DiscreteModel& model);

}  // namespace raps
