#include "raps/types.hpp"

#include <cmath>

#include "raps/error.hpp"

namespace raps {

void StateBelief::validate() const {
    const auto n = mean.size();
    if (n < 1 || covariance.rows() != n || covariance.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "StateBelief: covariance must be n x n with n >= 1");
    }
    const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw Error(ErrorCode::InvalidParams, "StateBelief: covariance is not symmetric");
    }
    if (!(min_eigenvalue(covariance) > 0.0)) {
        throw Error(ErrorCode::NotPositiveDefinite, "StateBelief: covariance is not positive definite");
    }
}

void MeasurementBatch::validate(Eigen::Index state_dim) const {
    const auto m = values.size();
    if (rows.rows() != m || sigmas.size() != m || (m > 0 && rows.cols() != state_dim)) {
        throw Error(ErrorCode::DimensionMismatch, "MeasurementBatch: inconsistent shapes");
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(sigmas(i) > 0.0) || !std::isfinite(sigmas(i))) {
            throw Error(ErrorCode::InvalidParams, "MeasurementBatch: sigma must be positive");
        }
    }
}

Vector MeasurementBatch::weights() const { return sigmas.array().square().inverse().matrix(); }

MeasurementBatch MeasurementBatch::head(Eigen::Index count) const {
    MeasurementBatch out;
    out.values = values.head(count);
    out.rows = rows.topRows(count);
    out.sigmas = sigmas.head(count);
    out.time = time;
    return out;
}

SelectionVector::SelectionVector(Vector entries, SelectionMode mode)
    : entries_(std::move(entries)), mode_(mode) {
    for (Eigen::Index i = 0; i < entries_.size(); ++i) {
        const double b = entries_(i);
        if (mode_ == SelectionMode::Binary) {
            if (b != 0.0 && b != 1.0) {
                throw Error(ErrorCode::InvalidParams, "SelectionVector: binary entries must be 0 or 1");
            }
        } else if (!(b >= -1e-9 && b <= 1.0 + 1e-9)) {
            throw Error(ErrorCode::InvalidParams, "SelectionVector: relaxed entries must lie in [0,1]");
        }
    }
}

Eigen::Index SelectionVector::count() const {
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < entries_.size(); ++i) c += selected(i) ? 1 : 0;
    return c;
}

bool SelectionVector::operator==(const SelectionVector& other) const {
    return mode_ == other.mode_ && entries_.size() == other.entries_.size() &&
           entries_ == other.entries_;
}

Matrix InfoSpec::matrix() const {
    if (full) return *full;
    return diag_lower_bound.asDiagonal();
}

void InfoSpec::validate(Eigen::Index state_dim) const {
    if (diag_lower_bound.size() != state_dim) {
        throw Error(ErrorCode::DimensionMismatch, "InfoSpec: length must equal the state dimension");
    }
    for (Eigen::Index i = 0; i < state_dim; ++i) {
        if (!(diag_lower_bound(i) >= 0.0) || !std::isfinite(diag_lower_bound(i))) {
            throw Error(ErrorCode::InvalidParams, "InfoSpec: entries must be finite and >= 0");
        }
    }
    if (full && (full->rows() != state_dim || full->cols() != state_dim)) {
        throw Error(ErrorCode::DimensionMismatch, "InfoSpec: full matrix must be n x n");
    }
}

std::string_view to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "Optimal";
        case SolveStatus::InfeasibleSpec: return "InfeasibleSpec";
        case SolveStatus::IterationLimit: return "IterationLimit";
    }
    return "Unknown";
}

}  // namespace raps
