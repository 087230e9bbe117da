#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "raps/linalg.hpp"

namespace raps {

/// Gaussian belief over the state: mean, covariance and the epoch time (s).
struct StateBelief {
    Vector mean;
    Matrix covariance;
    double time = 0.0;

    Eigen::Index dim() const { return mean.size(); }
    Matrix information() const { return spd_inverse(covariance); }

    /// Throws DimensionMismatch / NotPositiveDefinite when the invariants fail.
    void validate() const;
};

/// One epoch of scalar measurements y_i = h_i x + noise, noise ~ N(0, sigma_i^2).
struct MeasurementBatch {
    Vector values;  // y, meters
    Matrix rows;    // H, m x n
    Vector sigmas;  // noise standard deviations, meters
    double time = 0.0;

    Eigen::Index size() const { return values.size(); }

    void validate(Eigen::Index state_dim) const;
    /// Per-measurement information weights 1 / sigma_i^2.
    Vector weights() const;
    /// Rows restricted to the first `count` measurements.
    MeasurementBatch head(Eigen::Index count) const;
};

enum class SelectionMode { Binary, Relaxed };

/// Per-measurement usage decisions b.
class SelectionVector {
public:
    SelectionVector() = default;
    explicit SelectionVector(Vector entries, SelectionMode mode = SelectionMode::Binary);

    static SelectionVector all(Eigen::Index m) { return SelectionVector(Vector::Ones(m)); }
    static SelectionVector none(Eigen::Index m) { return SelectionVector(Vector::Zero(m)); }

    const Vector& entries() const { return entries_; }
    SelectionMode mode() const { return mode_; }
    Eigen::Index size() const { return entries_.size(); }
    double operator[](Eigen::Index i) const { return entries_(i); }
    bool selected(Eigen::Index i) const { return entries_(i) > 0.5; }
    Eigen::Index count() const;

    bool operator==(const SelectionVector& other) const;

private:
    Vector entries_;
    SelectionMode mode_ = SelectionMode::Binary;
};

/// Lower bound on the posterior information. The vector form constrains the
/// diagonal; `full` optionally replaces the diagonal embedding for the LMI form.
struct InfoSpec {
    Vector diag_lower_bound;
    std::optional<Matrix> full;

    static InfoSpec zeros(Eigen::Index n) { return {Vector::Zero(n), std::nullopt}; }

    Eigen::Index dim() const { return diag_lower_bound.size(); }
    /// n x n matrix lower bound: `full` when set, otherwise diag(diag_lower_bound).
    Matrix matrix() const;
    void validate(Eigen::Index state_dim) const;
};

enum class SolveStatus { Optimal, InfeasibleSpec, IterationLimit };
std::string_view to_string(SolveStatus s);

struct SolveReport {
    SelectionVector selection;
    Vector estimate;
    Matrix posterior_information;
    double risk = 0.0;
    SolveStatus status = SolveStatus::Optimal;
    std::size_t nodes_explored = 0;
    double wall_time = 0.0;
    /// Incumbent risk minus the best open bound (0 when proven optimal).
    double gap = 0.0;
    /// Number of big-M enlargements triggered during the solve.
    std::size_t big_m_doublings = 0;
    /// Eigen-cuts added (Full-RAPS only).
    std::size_t cuts_added = 0;
};

}  // namespace raps
