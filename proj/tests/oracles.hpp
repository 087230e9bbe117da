#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library code paths being checked.

#include <cstdint>
#include <optional>
#include <random>

#include <Eigen/Dense>

namespace raps::testing {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Random symmetric positive-definite matrix with condition number ~cond.
Mat random_spd(std::mt19937_64& rng, int n, double cond = 100.0);
Mat random_symmetric(std::mt19937_64& rng, int n);
Vec random_unit(std::mt19937_64& rng, int n);

struct EnumQpResult {
    bool feasible = false;
    Vec z;
    double objective = 0.0;
};

/// Strictly convex QP  min 1/2 z'Pz + q'z  s.t. A z <= u  by trying every
/// active set, solving the equality-constrained KKT system, and keeping the
/// best primal-feasible point with nonnegative multipliers.
EnumQpResult enumerate_active_sets(const Mat& p, const Vec& q, const Mat& a, const Vec& u);

/// Van Loan: exp([[-A, G W G^T], [0, A^T]] T) gives F = exp(A T) and Q.
/// Implemented with a scaling-and-squaring Taylor series, independent of Eigen's
/// MatrixFunctions module.
std::pair<Mat, Mat> van_loan(const Mat& a, const Mat& gwg, double t);
Mat expm_taylor(const Mat& a);

/// Stacked weighted least squares: minimize ||W^(1/2)(y - Hx)||^2 + (x - xbar)' J (x - xbar)
/// through the normal equations of the stacked system [sqrt(J); W^(1/2) H].
Vec stacked_wls(const Vec& xbar, const Mat& prior_info, const Mat& h, const Vec& y, const Vec& w);

/// Standard normal CDF via erfc.
double normal_cdf(double x);

}  // namespace raps::testing

namespace raps::testing {

struct BruteForceResult {
    bool feasible = false;
    double risk = 0.0;
    std::uint64_t mask = 0;  // an optimal selection
};

/// Independent enumeration of every selection mask consistent with the
/// fixings (bit i of fixed_one / fixed_zero). Feasibility is checked with
/// Eigen's symmetric eigensolver (full) or the diagonal (diag), risk with
/// stacked_wls and an explicit cost loop.
BruteForceResult brute_force_raps(const Vec& xbar, const Mat& prior_info, const Mat& h, const Vec& y,
                                  const Vec& sigma, const Mat& spec, bool full, std::uint64_t fixed_one = 0,
                                  std::uint64_t fixed_zero = 0);

}  // namespace raps::testing
