#include "raps/qp.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "raps/error.hpp"

namespace raps {
namespace {

QpProblem unconstrained(const Matrix& p, const Vector& q) {
    QpProblem prob;
    prob.hessian = p;
    prob.linear = q;
    prob.ineq = Matrix(0, q.size());
    prob.ineq_upper = Vector(0);
    prob.lower = Vector::Constant(q.size(), -kInf);
    prob.upper = Vector::Constant(q.size(), kInf);
    return prob;
}

TEST(SolveQp, UnconstrainedIdentity) {
    const QpProblem prob = unconstrained(Matrix::Identity(2, 2), Vector{{-1.0, -2.0}});
    const QpSolution sol = solve_qp(prob);
    ASSERT_EQ(sol.status, QpStatus::Solved);
    EXPECT_NEAR(sol.minimizer(0), 1.0, 1e-9);
    EXPECT_NEAR(sol.minimizer(1), 2.0, 1e-9);
    EXPECT_NEAR(sol.objective, -2.5, 1e-9);
}

TEST(SolveQp, ClampedScalar) {
    QpProblem prob = unconstrained(Matrix::Identity(1, 1), Vector::Zero(1));
    prob.lower(0) = 2.0;
    prob.upper(0) = 3.0;
    const QpSolution sol = solve_qp(prob);
    ASSERT_EQ(sol.status, QpStatus::Solved);
    EXPECT_NEAR(sol.minimizer(0), 2.0, 1e-9);
    EXPECT_NEAR(sol.objective, 2.0, 1e-9);
    EXPECT_LT(sol.box_dual(0), 0.0);  // lower bound active
}

TEST(SolveQp, DetectsBoxContradiction) {
    QpProblem prob = unconstrained(Matrix::Identity(1, 1), Vector::Zero(1));
    prob.lower(0) = 1.0;
    prob.upper(0) = 0.0;
    EXPECT_EQ(solve_qp(prob).status, QpStatus::Infeasible);
}

TEST(SolveQp, DetectsInfeasibleRows) {
    // z <= -1 and -z <= -1 (z >= 1).
    QpProblem prob = unconstrained(Matrix::Identity(1, 1), Vector::Zero(1));
    prob.ineq = Matrix{{1.0}, {-1.0}};
    prob.ineq_upper = Vector{{-1.0, -1.0}};
    const QpSolution sol = solve_qp(prob);
    EXPECT_EQ(sol.status, QpStatus::Infeasible);
    EXPECT_FALSE(sol.diagnostic.empty());
}

TEST(SolveQp, DetectsUnboundedLinearDirection) {
    QpProblem prob = unconstrained(Matrix::Zero(1, 1), Vector{{1.0}});
    EXPECT_EQ(solve_qp(prob).status, QpStatus::Unbounded);
}

TEST(SolveQp, RejectsIndefiniteHessian) {
    QpProblem prob = unconstrained(Matrix{{1.0, 0.0}, {0.0, -1.0}}, Vector::Zero(2));
    try {
        solve_qp(prob);
        FAIL() << "expected InvalidProblem";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidProblem);
    }
}

TEST(SolveQp, RejectsDimensionMismatch) {
    QpProblem prob = unconstrained(Matrix::Identity(2, 2), Vector::Zero(3));
    EXPECT_THROW(solve_qp(prob), Error);
}

QpProblem random_qp(std::mt19937_64& rng, int n, int rows) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.1, 2.0);
    QpProblem prob = unconstrained(testing::random_spd(rng, n, 50.0), Vector::Zero(n));
    for (int i = 0; i < n; ++i) prob.linear(i) = 3.0 * g(rng);
    prob.ineq = Matrix(rows, n);
    prob.ineq_upper = Vector(rows);
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < n; ++j) prob.ineq(r, j) = g(rng);
        prob.ineq_upper(r) = unif(rng);  // z = 0 is strictly feasible
    }
    return prob;
}

TEST(SolveQp, MatchesActiveSetEnumerationAndKkt) {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> dim(1, 6), nrows(0, 12);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = dim(rng);
        const int rows = nrows(rng);
        const QpProblem prob = random_qp(rng, n, rows);
        const auto oracle = testing::enumerate_active_sets(prob.hessian, prob.linear, prob.ineq, prob.ineq_upper);
        ASSERT_TRUE(oracle.feasible);
        const QpSolution sol = solve_qp(prob);
        ASSERT_EQ(sol.status, QpStatus::Solved) << "trial " << trial;
        EXPECT_NEAR(sol.objective, oracle.objective, 1e-6 * (1.0 + std::abs(oracle.objective))) << "trial " << trial;
        const double unorm = rows ? prob.ineq_upper.cwiseAbs().maxCoeff() : 0.0;
        EXPECT_LE(sol.primal_residual, 1e-8 * (1.0 + unorm));
        EXPECT_LE(sol.dual_residual, 1e-8 * (1.0 + prob.linear.cwiseAbs().maxCoeff()));
        EXPECT_LE(sol.complementarity, 1e-8);
        if (rows) {
            EXPECT_LE((prob.ineq * sol.minimizer - prob.ineq_upper).maxCoeff(), 1e-7);
            EXPECT_GE(sol.ineq_dual.minCoeff(), 0.0);
        }
        // Strong duality at tolerance.
        EXPECT_NEAR(sol.dual_objective, sol.objective, 1e-6 * (1.0 + std::abs(sol.objective)));
    }
}

TEST(SolveQp, BoxedLinearVariablesGiveCertifiedBound) {
    // min 1/2 x^2 - x*b0 ... x coupled with a purely linear variable in a box.
    QpProblem prob;
    prob.hessian = Matrix::Zero(2, 2);
    prob.hessian(0, 0) = 1.0;
    prob.linear = Vector{{0.0, -1.0}};
    prob.ineq = Matrix{{-1.0, 1.0}};  // b <= x
    prob.ineq_upper = Vector{{0.0}};
    prob.lower = Vector{{-kInf, 0.0}};
    prob.upper = Vector{{kInf, 1.0}};
    const QpSolution sol = solve_qp(prob);
    ASSERT_EQ(sol.status, QpStatus::Solved);
    // optimum: b = x = 1 -> 0.5 - 1 = -0.5
    EXPECT_NEAR(sol.objective, -0.5, 1e-9);
    EXPECT_NEAR(sol.dual_objective, -0.5, 1e-7);
    EXPECT_LE(sol.dual_objective, sol.objective + 1e-9);
}

TEST(SolveQp, Deterministic) {
    std::mt19937_64 rng(7);
    const QpProblem prob = random_qp(rng, 5, 8);
    const QpSolution a = solve_qp(prob);
    const QpSolution b = solve_qp(prob);
    EXPECT_EQ(a.minimizer, b.minimizer);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.objective, b.objective);
}

TEST(QpEngine, CutoffStopsEarlyWithValidBound) {
    std::mt19937_64 rng(11);
    const QpProblem prob = random_qp(rng, 6, 10);
    const QpSolution full = solve_qp(prob);
    ASSERT_EQ(full.status, QpStatus::Solved);
    QpSettings s;
    s.cutoff = full.objective - 1.0;
    const QpSolution cut = solve_qp(prob, s);
    ASSERT_EQ(cut.status, QpStatus::Cutoff);
    EXPECT_GE(cut.dual_objective, s.cutoff);
    EXPECT_LE(cut.dual_objective, full.objective + 1e-9);
}

}  // namespace
}  // namespace raps
