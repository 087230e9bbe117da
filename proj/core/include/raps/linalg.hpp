#pragma once

// Dense linear-algebra kernels shared by every module. Matrices here are tiny
// (n = 9 states, m <= ~60 measurements) so everything is dense.

#include <Eigen/Dense>

namespace raps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// (A + A^T) / 2.
Matrix symmetrize(const Matrix& a);

/// Solves A X = B for symmetric positive-definite A via Cholesky.
/// A is symmetrized first. Throws Error{NotPositiveDefinite} when a pivot is <= 0.
Matrix chol_solve(const Matrix& a, const Matrix& b);

/// Inverse of an SPD matrix (chol_solve against the identity), symmetrized.
Matrix spd_inverse(const Matrix& a);

struct EigenPair {
    double value = 0.0;
    Vector vector;
};

struct SymmetricEigen {
    Vector values;   // ascending
    Matrix vectors;  // column k pairs with values(k)
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Iterates until the
/// off-diagonal Frobenius norm is <= 1e-12 * ||A||_F (absolute floor 1e-300).
/// Throws Error{ConvergenceFailure} if 100 sweeps do not suffice.
SymmetricEigen jacobi_eigen(const Matrix& a);

/// Minimum eigenvalue and a unit eigenvector of a symmetric matrix.
EigenPair sym_eig_min(const Matrix& a);

/// Convenience: sym_eig_min(a).value.
double min_eigenvalue(const Matrix& a);

/// Max |A - A^T| relative to max(1, max|A|).
double asymmetry(const Matrix& a);

}  // namespace raps
