#pragma once

#include "raps/linalg.hpp"
#include "raps/types.hpp"

namespace raps {

struct MapUpdate {
    Vector estimate;
    StateBelief posterior;   // mean = estimate, covariance = (J+)^-1
    Matrix information;      // J+
};

/// Posterior information J(b) = J_prior + sum_i b_i h_i^T h_i / sigma_i^2.
/// Linear in b, so relaxed selections are accepted.
Matrix selected_information(const Matrix& prior_information, const MeasurementBatch& batch,
                            const Vector& b);

/// Minimizer of the selection-weighted MAP cost
///   sum_i b_i ((y_i - h_i x) / sigma_i)^2 + (x - xbar)^T J_prior (x - xbar)
/// computed in information form with one Cholesky solve.
/// Returns {estimate, J+}; throws NotPositiveDefinite if J+ is singular.
std::pair<Vector, Matrix> map_estimate(const Vector& prior_mean, const Matrix& prior_information,
                                       const MeasurementBatch& batch, const Vector& b);

MapUpdate map_update_with_selection(const StateBelief& belief, const MeasurementBatch& batch,
                                    const SelectionVector& b);

/// Kalman filter measurement update: every measurement used (b = 1).
MapUpdate kf_update(const StateBelief& belief, const MeasurementBatch& batch);

enum class TdNormalization {
    Innovation,  // |nu_i| / sqrt(h_i P h_i^T + sigma_i^2)
    NoiseOnly,   // |nu_i| / sigma_i
};

struct TdConfig {
    double lambda = 2.0;
    TdNormalization normalization = TdNormalization::Innovation;

    void validate() const;
};

/// Normalized prior residuals |y_i - h_i xbar| / s_i (see TdNormalization).
Vector normalized_innovations(const StateBelief& belief, const MeasurementBatch& batch,
                              TdNormalization normalization);

/// b_i = 1 iff the normalized innovation is <= lambda. Each measurement is
/// tested against the prior independently.
SelectionVector td_select(const StateBelief& belief, const MeasurementBatch& batch,
                          const TdConfig& cfg);

struct TdUpdate {
    SelectionVector selection;
    MapUpdate update;
};

TdUpdate td_update(const StateBelief& belief, const MeasurementBatch& batch, const TdConfig& cfg);

}  // namespace raps
