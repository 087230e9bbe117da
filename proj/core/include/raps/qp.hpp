#pragma once

// Convex QP solver used for the branch-and-bound node relaxations:
//
//   minimize    1/2 z^T P z + q^T z
//   subject to  A z <= u,  lower <= z <= upper
//
// Operator splitting (OSQP-style ADMM) with Ruiz equilibration, over-relaxation,
// adaptive step size, a cached sparse factorization of the reduced KKT matrix,
// and an active-set polish once the iterates settle.

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Sparse>

#include "raps/linalg.hpp"

namespace raps {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpProblem {
    Matrix hessian;   // P, symmetric PSD
    Vector linear;    // q
    Matrix ineq;      // A
    Vector ineq_upper;  // u
    Vector lower;     // box, entries may be -inf
    Vector upper;     // box, entries may be +inf

    Eigen::Index num_vars() const { return linear.size(); }
    /// Throws InvalidProblem on shape mismatch, asymmetry > 1e-10 or lambda_min(P) < -1e-8.
    void validate() const;
};

enum class QpStatus {
    Solved,
    MaxIter,
    Infeasible,
    Unbounded,
    Cutoff,  // dual bound reached QpSettings::cutoff before convergence
};

std::string_view to_string(QpStatus s);

struct QpSolution {
    Vector minimizer;
    double objective = 0.0;
    Vector ineq_dual;  // multipliers of A z <= u, >= 0
    Vector box_dual;   // > 0 on an active upper bound, < 0 on an active lower bound
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double complementarity = 0.0;
    /// Lagrangian dual value at the returned multipliers: a certified lower
    /// bound on the optimum (-inf if the multipliers do not certify one).
    double dual_objective = -kInf;
    std::size_t iterations = 0;
    QpStatus status = QpStatus::MaxIter;
    bool polished = false;
    std::string diagnostic;
};

struct QpSettings {
    double tol = 1e-8;
    std::size_t max_iter = 50000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    bool scaling = true;
    bool adaptive_rho = true;
    std::size_t adaptive_rho_interval = 25;
    bool polish = true;
    /// Iterations between convergence / certificate checks.
    std::size_t check_interval = 10;
    double infeasibility_tol = 1e-6;
    /// Stop early with status Cutoff once the certified dual bound is >= cutoff.
    double cutoff = kInf;
};

/// Sparse problem in the general two-sided form used internally:
///   minimize 1/2 x^T P x + q^T x  s.t.  l <= C x <= u,  lx <= x <= ux.
/// P must hold both triangles.
struct SparseQp {
    SparseMatrix hessian;
    Vector linear;
    SparseMatrix constraints;
    Vector row_lower;
    Vector row_upper;
    Vector var_lower;
    Vector var_upper;

    Eigen::Index num_vars() const { return linear.size(); }
    Eigen::Index num_rows() const { return constraints.rows(); }
};

/// Reusable ADMM engine for one SparseQp. Warm starts carry across solve() calls.
class QpEngine {
public:
    QpEngine(SparseQp problem, QpSettings settings = {});

    /// x in variable space; row_dual for C rows; var_dual for the variable boxes.
    void warm_start(const Vector& x, const Vector& row_dual, const Vector& var_dual);

    QpSolution solve();

    const SparseQp& problem() const { return problem_; }
    QpSettings& settings() { return settings_; }

    /// Certified Lagrangian lower bound for the given multipliers (unscaled).
    double dual_bound(const Vector& row_dual, const Vector& var_dual) const;

private:
    struct Residuals {
        double primal = 0.0;
        double dual = 0.0;
        double complementarity = 0.0;
    };

    void setup();
    void factorize();
    void unscaled_iterates(Vector& x, Vector& y) const;
    Residuals residuals(const Vector& x, const Vector& y) const;
    bool converged(const Vector& x, const Vector& y) const;
    bool primal_infeasible(const Vector& dy) const;
    bool dual_infeasible(const Vector& dx) const;
    bool polish(const Vector& x, const Vector& y, QpSolution& out) const;
    void fill_solution(const Vector& x, const Vector& y, QpSolution& out) const;

    SparseQp problem_;
    QpSettings settings_;

    // Stacked rows [C; I_boxed] (unscaled) and their bounds.
    SparseMatrix a_stack_;
    Vector l_stack_, u_stack_;
    std::vector<Eigen::Index> boxed_vars_;

    // Scaled data.
    SparseMatrix pbar_, abar_, abar_t_;
    Vector qbar_, lbar_, ubar_;
    Vector d_, e_;  // variable / row scaling
    double cost_scale_ = 1.0;

    Vector rho_vec_;
    double rho_ = 0.1;
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> kkt_;
    bool analyzed_ = false;

    // Iterates in scaled space.
    Vector x_, z_, y_;

    // Dual-bound helpers in unscaled space.
    std::vector<Eigen::Index> quad_vars_, lin_vars_;
    Eigen::LLT<Matrix> quad_factor_;
    bool quad_factor_ok_ = false;
};

/// Dense entry point. Validates p and runs the engine with the given tolerance.
QpSolution solve_qp(const QpProblem& p, double tol = 1e-8, std::size_t max_iter = 50000);
QpSolution solve_qp(const QpProblem& p, const QpSettings& settings);

}  // namespace raps
