#include "raps/selector.hpp"

#include <cmath>
#include <limits>

#include "raps/error.hpp"
#include "raps/estimators.hpp"

namespace raps {

std::string_view to_string(RapsMode m) { return m == RapsMode::Diag ? "diag" : "full"; }

RapsInstance RapsInstance::from_belief(const StateBelief& belief, const MeasurementBatch& batch,
                                       const InfoSpec& spec) {
    return RapsInstance{belief.mean, belief.information(), batch, spec};
}

void RapsInstance::validate() const {
    const auto n = prior_mean.size();
    if (prior_information.rows() != n || prior_information.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "RapsInstance: prior information must be n x n");
    }
    if (asymmetry(prior_information) > 1e-9) {
        throw Error(ErrorCode::InvalidParams, "RapsInstance: prior information must be symmetric");
    }
    if (n > 0 && min_eigenvalue(prior_information) < -1e-9) {
        throw Error(ErrorCode::NotPositiveDefinite, "RapsInstance: prior information must be PSD");
    }
    batch.validate(n);
    spec.validate(n);
}

void BnbOptions::validate() const {
    if (!(big_m_multiplier >= 3.0)) throw Error(ErrorCode::InvalidParams, "BnbOptions: kappa must be >= 3");
    if (!(gap > 0.0)) throw Error(ErrorCode::InvalidParams, "BnbOptions: gap must be > 0");
    if (node_limit == 0) throw Error(ErrorCode::InvalidParams, "BnbOptions: node limit must be >= 1");
    if (fixed_big_m && !(*fixed_big_m > 0.0)) {
        throw Error(ErrorCode::InvalidParams, "BnbOptions: fixed big-M must be > 0");
    }
    if (branching == Branching::MostFractional && relaxation != Relaxation::BigMQp) {
        throw Error(ErrorCode::InvalidParams, "BnbOptions: MostFractional branching needs the QP relaxation");
    }
}

Matrix posterior_information(const RapsInstance& inst, const SelectionVector& b) {
    if (b.size() != inst.size()) {
        throw Error(ErrorCode::DimensionMismatch, "posterior_information: selection length must equal m");
    }
    return selected_information(inst.prior_information, inst.batch, b.entries());
}

double evaluate_risk(const RapsInstance& inst, const SelectionVector& b, const Vector& x) {
    if (b.size() != inst.size() || x.size() != inst.state_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "evaluate_risk: shape mismatch");
    }
    if (b.mode() != SelectionMode::Binary) {
        throw Error(ErrorCode::InvalidParams, "evaluate_risk: selection must be binary");
    }
    const Vector dx = x - inst.prior_mean;
    double risk = dx.dot(inst.prior_information * dx);
    for (Eigen::Index i = 0; i < inst.size(); ++i) {
        if (!b.selected(i)) continue;
        const double r = (inst.batch.values(i) - inst.batch.rows.row(i).dot(x)) / inst.batch.sigmas(i);
        risk += r * r;
    }
    return std::max(risk, 0.0);
}

SelectionRisk optimal_risk_for_selection(const RapsInstance& inst, const SelectionVector& b) {
    if (b.mode() != SelectionMode::Binary) {
        throw Error(ErrorCode::InvalidParams, "optimal_risk_for_selection: selection must be binary");
    }
    auto [x, j] = map_estimate(inst.prior_mean, inst.prior_information, inst.batch, b.entries());
    const double r = evaluate_risk(inst, b, x);
    return {r, std::move(x)};
}

bool spec_satisfied(const Matrix& information, const InfoSpec& spec, RapsMode mode, double tol) {
    const Matrix jd = spec.matrix();
    if (mode == RapsMode::Diag) {
        return ((information.diagonal() - jd.diagonal()).array() >= -tol).all();
    }
    if (information.rows() == 0) return true;
    return min_eigenvalue(symmetrize(information - jd)) >= -tol;
}

namespace {

// Preference among equal-risk selections: fewer measurements, then the
// lexicographically smallest b.
bool preferred(const Vector& a, const Vector& b) {
    const double ca = a.sum(), cb = b.sum();
    if (ca != cb) return ca < cb;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i) != b(i)) return a(i) < b(i);
    }
    return false;
}

SolveReport make_report(const RapsInstance& inst, const Vector& b, SolveStatus status) {
    SolveReport rep;
    rep.selection = SelectionVector(b);
    const SelectionRisk sr = optimal_risk_for_selection(inst, rep.selection);
    rep.estimate = sr.estimate;
    rep.risk = sr.risk;
    rep.posterior_information = posterior_information(inst, rep.selection);
    rep.status = status;
    return rep;
}

}  // namespace

SolveReport exhaustive_raps(const RapsInstance& inst, RapsMode mode) {
    inst.validate();
    const Eigen::Index m = inst.size();
    if (m > kExhaustiveMaxMeasurements) {
        throw Error(ErrorCode::TooManyMeasurements, "exhaustive_raps: m must be <= 20");
    }
    const std::uint64_t count = std::uint64_t{1} << m;
    // Ties are judged against the final minimum, so collect risks first.
    std::vector<double> risks(count, std::numeric_limits<double>::infinity());
    double best = std::numeric_limits<double>::infinity();
    Vector b(m);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        for (Eigen::Index i = 0; i < m; ++i) b(i) = (mask >> i) & 1U ? 1.0 : 0.0;
        const SelectionVector sel(b);
        if (!spec_satisfied(posterior_information(inst, sel), inst.spec, mode)) continue;
        risks[mask] = optimal_risk_for_selection(inst, sel).risk;
        best = std::min(best, risks[mask]);
    }
    if (!std::isfinite(best)) {
        SolveReport rep = make_report(inst, Vector::Ones(m), SolveStatus::InfeasibleSpec);
        rep.nodes_explored = count;
        return rep;
    }
    constexpr double kTie = 1e-9;
    Vector chosen;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        if (!(risks[mask] <= best + kTie)) continue;
        for (Eigen::Index i = 0; i < m; ++i) b(i) = (mask >> i) & 1U ? 1.0 : 0.0;
        if (chosen.size() == 0 || preferred(b, chosen)) chosen = b;
    }
    SolveReport rep = make_report(inst, chosen, SolveStatus::Optimal);
    rep.nodes_explored = count;
    return rep;
}

std::optional<Vector> lmi_cut(const Matrix& information, const Matrix& spec_matrix) {
    if (information.rows() != spec_matrix.rows() || information.cols() != spec_matrix.cols() ||
        information.rows() != information.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "lmi_cut: shape mismatch");
    }
    if (information.rows() == 0) return std::nullopt;
    const EigenPair e = sym_eig_min(symmetrize(information - spec_matrix));
    if (e.value >= -1e-8) return std::nullopt;
    return e.vector.normalized();
}

SolveReport solve_diag_raps(const RapsInstance& inst, const BnbOptions& opts) {
    return solve_raps(inst, RapsMode::Diag, opts);
}

SolveReport solve_full_raps(const RapsInstance& inst, const BnbOptions& opts) {
    return solve_raps(inst, RapsMode::Full, opts);
}

}  // namespace raps
