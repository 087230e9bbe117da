#include "raps/estimators.hpp"

#include <cmath>

#include "raps/error.hpp"

namespace raps {
namespace {

void check_dims(const Vector& mean, const Matrix& info, const MeasurementBatch& batch,
                const Vector& b) {
    const auto n = mean.size();
    if (info.rows() != n || info.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "prior information must be n x n");
    }
    batch.validate(n);
    if (b.size() != batch.size()) {
        throw Error(ErrorCode::DimensionMismatch, "selection length must equal measurement count");
    }
}

}  // namespace

Matrix selected_information(const Matrix& prior_information, const MeasurementBatch& batch,
                            const Vector& b) {
    if (b.size() != batch.size() || (batch.size() > 0 && batch.rows.cols() != prior_information.cols())) {
        throw Error(ErrorCode::DimensionMismatch, "selected_information: shape mismatch");
    }
    const Vector w = b.cwiseProduct(batch.weights());
    Matrix j = prior_information;
    if (batch.size() > 0) j.noalias() += batch.rows.transpose() * w.asDiagonal() * batch.rows;
    return symmetrize(j);
}

std::pair<Vector, Matrix> map_estimate(const Vector& prior_mean, const Matrix& prior_information,
                                       const MeasurementBatch& batch, const Vector& b) {
    check_dims(prior_mean, prior_information, batch, b);
    Matrix j = selected_information(prior_information, batch, b);
    if (batch.size() == 0) return {prior_mean, j};
    const Vector innov = batch.values - batch.rows * prior_mean;
    const Vector g = batch.rows.transpose() * b.cwiseProduct(batch.weights()).cwiseProduct(innov);
    Vector x = prior_mean + chol_solve(j, g);
    return {std::move(x), std::move(j)};
}

MapUpdate map_update_with_selection(const StateBelief& belief, const MeasurementBatch& batch,
                                    const SelectionVector& b) {
    if (b.mode() != SelectionMode::Binary) {
        throw Error(ErrorCode::InvalidParams, "map_update_with_selection: selection must be binary");
    }
    const Matrix prior_info = belief.information();
    auto [x, j] = map_estimate(belief.mean, prior_info, batch, b.entries());
    MapUpdate out;
    out.estimate = x;
    out.posterior.mean = std::move(x);
    out.posterior.covariance = spd_inverse(j);
    out.posterior.time = belief.time;
    out.information = std::move(j);
    return out;
}

MapUpdate kf_update(const StateBelief& belief, const MeasurementBatch& batch) {
    return map_update_with_selection(belief, batch, SelectionVector::all(batch.size()));
}

void TdConfig::validate() const {
    if (!(lambda > 0.0)) {
        throw Error(ErrorCode::InvalidParams, "TdConfig: lambda must be > 0");
    }
}

Vector normalized_innovations(const StateBelief& belief, const MeasurementBatch& batch,
                              TdNormalization normalization) {
    batch.validate(belief.mean.size());
    const auto m = batch.size();
    Vector out(m);
    if (m == 0) return out;
    const Vector innov = batch.values - batch.rows * belief.mean;
    const Matrix hp = batch.rows * belief.covariance;
    for (Eigen::Index i = 0; i < m; ++i) {
        double var = batch.sigmas(i) * batch.sigmas(i);
        if (normalization == TdNormalization::Innovation) var += hp.row(i).dot(batch.rows.row(i));
        out(i) = std::abs(innov(i)) / std::sqrt(var);
    }
    return out;
}

SelectionVector td_select(const StateBelief& belief, const MeasurementBatch& batch,
                          const TdConfig& cfg) {
    cfg.validate();
    const Vector r = normalized_innovations(belief, batch, cfg.normalization);
    Vector b(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) b(i) = r(i) <= cfg.lambda ? 1.0 : 0.0;
    return SelectionVector(std::move(b));
}

TdUpdate td_update(const StateBelief& belief, const MeasurementBatch& batch, const TdConfig& cfg) {
    SelectionVector b = td_select(belief, batch, cfg);
    MapUpdate u = map_update_with_selection(belief, batch, b);
    return {std::move(b), std::move(u)};
}

}  // namespace raps
