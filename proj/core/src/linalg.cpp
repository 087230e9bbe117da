#include "raps/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "raps/error.hpp"

namespace raps {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::InvalidProblem: return "InvalidProblem";
        case ErrorCode::TooManyMeasurements: return "TooManyMeasurements";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Matrix symmetrize(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "symmetrize: matrix is not square");
    }
    return 0.5 * (a + a.transpose());
}

Matrix chol_solve(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || a.rows() != b.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "chol_solve: incompatible shapes");
    }
    const Matrix s = symmetrize(a);
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NotPositiveDefinite, "chol_solve: Cholesky pivot <= 0");
    }
    // Eigen's LLT does not flag tiny pivots; reject anything non-positive or non-finite.
    const auto diag = llt.matrixLLT().diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
        if (!(diag(i) > 0.0) || !std::isfinite(diag(i))) {
            throw Error(ErrorCode::NotPositiveDefinite, "chol_solve: Cholesky pivot <= 0");
        }
    }
    return llt.solve(b);
}

Matrix spd_inverse(const Matrix& a) {
    return symmetrize(chol_solve(a, Matrix::Identity(a.rows(), a.cols())));
}

double asymmetry(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

SymmetricEigen jacobi_eigen(const Matrix& a_in) {
    if (a_in.rows() != a_in.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "jacobi_eigen: matrix is not square");
    }
    const Eigen::Index n = a_in.rows();
    Matrix a = symmetrize(a_in);
    Matrix v = Matrix::Identity(n, n);

    const double fro = a.norm();
    const double target = std::max(1e-12 * fro, 1e-300);
    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    for (; sweep < kMaxSweeps && off_norm() > target; ++sweep) {
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Rutishauser's stable rotation.
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (off_norm() > target) {
        throw Error(ErrorCode::ConvergenceFailure,
                    "jacobi_eigen: no convergence after " + std::to_string(kMaxSweeps) + " sweeps");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
        out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]).normalized();
    }
    return out;
}

EigenPair sym_eig_min(const Matrix& a) {
    if (a.rows() == 0) {
        throw Error(ErrorCode::DimensionMismatch, "sym_eig_min: empty matrix");
    }
    SymmetricEigen e = jacobi_eigen(a);
    return {e.values(0), e.vectors.col(0)};
}

double min_eigenvalue(const Matrix& a) { return sym_eig_min(a).value; }

}  // namespace raps
