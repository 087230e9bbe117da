#include "raps/dynamics.hpp"

#include <cmath>

#include "raps/error.hpp"

namespace raps {

void PvaParams::validate() const {
    if (!(period > 0.0) || !std::isfinite(period)) {
        throw Error(ErrorCode::InvalidParams, "PvaParams: period must be > 0");
    }
    if (!(jerk_psd >= 0.0) || !std::isfinite(jerk_psd)) {
        throw Error(ErrorCode::InvalidParams, "PvaParams: jerk PSD must be >= 0");
    }
    if (axes < 1) {
        throw Error(ErrorCode::InvalidParams, "PvaParams: need at least one axis");
    }
}

DiscreteModel discretize_pva(const PvaParams& params) {
    params.validate();
    const double t = params.period;
    const double s = params.jerk_psd;

    Eigen::Matrix3d fa;
    fa << 1.0, t, 0.5 * t * t,
          0.0, 1.0, t,
          0.0, 0.0, 1.0;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    Eigen::Matrix3d qa;
    qa << t5 / 20.0, t4 / 8.0, t3 / 6.0,
          t4 / 8.0,  t3 / 3.0, t2 / 2.0,
          t3 / 6.0,  t2 / 2.0, t;
    qa *= s;

    const int k = params.axes;
    const Eigen::Index n = 3 * k;
    DiscreteModel model;
    model.period = t;
    model.transition = Matrix::Zero(n, n);
    model.process_noise = Matrix::Zero(n, n);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            for (int axis = 0; axis < k; ++axis) {
                model.transition(pva_index(r, axis, k), pva_index(c, axis, k)) = fa(r, c);
                model.process_noise(pva_index(r, axis, k), pva_index(c, axis, k)) = qa(r, c);
            }
        }
    }
    return model;
}

StateBelief propagate(const StateBelief& belief, const DiscreteModel& model) {
    const auto n = belief.mean.size();
    if (model.transition.rows() != n || model.transition.cols() != n ||
        model.process_noise.rows() != n || model.process_noise.cols() != n ||
        belief.covariance.rows() != n || belief.covariance.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "propagate: model and belief dimensions differ");
    }
    StateBelief out;
    out.mean = model.transition * belief.mean;
    out.covariance = symmetrize(model.transition * belief.covariance * model.transition.transpose() +
                                model.process_noise);
    out.time = belief.time + model.period;
    return out;
}

}  // namespace raps
