#pragma once

// Risk-averse, performance-specified measurement selection.
//
//   minimize_{b in {0,1}^m, x}  sum_i b_i ((y_i - h_i x) / sigma_i)^2 + (x - xbar)^T J- (x - xbar)
//   subject to                  diag(J(b)) >= J_d          (Diag)
//                               J(b) - J_d_matrix >= 0     (Full, LMI)
//
// with J(b) = J- + sum_i b_i h_i^T h_i / sigma_i^2.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "raps/linalg.hpp"
#include "raps/types.hpp"

namespace raps {

enum class RapsMode { Diag, Full };
std::string_view to_string(RapsMode m);

struct RapsInstance {
    Vector prior_mean;          // xbar
    Matrix prior_information;   // J-
    MeasurementBatch batch;
    InfoSpec spec;

    static RapsInstance from_belief(const StateBelief& belief, const MeasurementBatch& batch,
                                    const InfoSpec& spec);

    Eigen::Index state_dim() const { return prior_mean.size(); }
    Eigen::Index size() const { return batch.size(); }
    /// Throws DimensionMismatch / NotPositiveDefinite / InvalidParams.
    void validate() const;
};

enum class Branching {
    Auto,               // MostFractional under the QP relaxation, CheapestIncrement otherwise
    MostFractional,     // relaxed b_i closest to 1/2 (QP relaxation only)
    LowestIndex,
    CheapestIncrement,  // free measurement with the smallest risk increase
};

enum class NodeOrder { BestBound, DepthFirst };

enum class Relaxation {
    /// Exact lower bounds from risk monotonicity: covering bottleneck and
    /// split-prior sum bound. No QP per node.
    Combinatorial,
    /// Big-M linearized convex QP per node (with eigen-cuts for the LMI).
    BigMQp,
};

enum class BigMRule {
    /// M_i from the incumbent: any completion that improves on it keeps
    /// |y_i - h_i x| below M_i, so the linearization is exact where it matters.
    IncumbentBound,
    /// M_i = kappa sqrt(h_i P- h_i^T + sigma_i^2), doubled when a residual
    /// reaches 99% of M_i.
    InnovationScaled,
};

struct BnbOptions {
    double big_m_multiplier = 10.0;  // kappa
    double gap = 1e-6;               // absolute
    std::size_t node_limit = 200000;
    double time_limit = 600.0;       // seconds, <= 0 or inf disables
    Branching branching = Branching::Auto;
    NodeOrder order = NodeOrder::BestBound;
    Relaxation relaxation = Relaxation::Combinatorial;
    BigMRule big_m_rule = BigMRule::IncumbentBound;
    /// Test hook: use this M for every measurement and never enlarge it.
    std::optional<double> fixed_big_m;
    /// Run drop/swap local search on the root incumbent.
    bool local_search = true;

    void validate() const;
};

/// J(b) = J- + sum_i b_i h_i^T h_i / sigma_i^2 (relaxed b allowed).
Matrix posterior_information(const RapsInstance& inst, const SelectionVector& b);

/// sum_i b_i ((y_i - h_i x) / sigma_i)^2 + (x - xbar)^T J- (x - xbar). Requires binary b.
double evaluate_risk(const RapsInstance& inst, const SelectionVector& b, const Vector& x);

struct SelectionRisk {
    double risk = 0.0;
    Vector estimate;
};

/// Exact optimal cost of a fixed binary selection (x at the MAP estimate).
SelectionRisk optimal_risk_for_selection(const RapsInstance& inst, const SelectionVector& b);

/// Feasibility of J against the requirement: diagonal entries (Diag) or
/// lambda_min(J - J_d_matrix) >= -tol (Full).
bool spec_satisfied(const Matrix& information, const InfoSpec& spec, RapsMode mode, double tol = 1e-9);

inline constexpr Eigen::Index kExhaustiveMaxMeasurements = 20;

/// Ground truth by enumerating every binary b (m <= 20).
SolveReport exhaustive_raps(const RapsInstance& inst, RapsMode mode);

/// Separation oracle for J - J_d >= 0: the minimum eigenvector when
/// lambda_min < -1e-8, nothing otherwise.
std::optional<Vector> lmi_cut(const Matrix& information, const Matrix& spec_matrix);

SolveReport solve_diag_raps(const RapsInstance& inst, const BnbOptions& opts = {});
SolveReport solve_full_raps(const RapsInstance& inst, const BnbOptions& opts = {});
SolveReport solve_raps(const RapsInstance& inst, RapsMode mode, const BnbOptions& opts = {});

/// Lower bound the solver uses for the node with the given fixings, with
/// `upper_bound` as the incumbent risk. +inf when the node is provably
/// infeasible or cannot beat upper_bound. Exposed for bound-validity tests.
double node_lower_bound(const RapsInstance& inst, RapsMode mode, const std::vector<Eigen::Index>& fixed_one,
                        const std::vector<Eigen::Index>& fixed_zero, double upper_bound,
                        const BnbOptions& opts = {});

}  // namespace raps
