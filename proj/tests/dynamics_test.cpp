#include "raps/dynamics.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "raps/error.hpp"

namespace raps {
namespace {

// Continuous PVA model for one axis: d/dt [p v a] = [v a w].
std::pair<Matrix, Matrix> continuous_axis(double psd) {
    Matrix a = Matrix::Zero(3, 3);
    a(0, 1) = 1.0;
    a(1, 2) = 1.0;
    Matrix gwg = Matrix::Zero(3, 3);
    gwg(2, 2) = psd;
    return {a, gwg};
}

Matrix axis_block(const Matrix& m, int axis) {
    Matrix out(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = m(pva_index(r, axis), pva_index(c, axis));
    return out;
}

TEST(DiscretizePva, NoiselessIntegrator) {
    const DiscreteModel m = discretize_pva({1.0, 0.0});
    EXPECT_TRUE(m.process_noise.isZero(0.0));
    const Matrix fa = axis_block(m.transition, 1);
    EXPECT_EQ(fa, (Matrix{{1, 1, 0.5}, {0, 1, 1}, {0, 0, 1}}));
}

TEST(DiscretizePva, RejectsInvalidParams) {
    EXPECT_THROW(discretize_pva({0.0, 1.0}), Error);
    EXPECT_THROW(discretize_pva({-1.0, 1.0}), Error);
    EXPECT_THROW(discretize_pva({1.0, -0.1}), Error);
}

TEST(DiscretizePva, UnitPeriodUnitPsdMatchesVanLoan) {
    const DiscreteModel m = discretize_pva({1.0, 1.0});
    const auto [a, gwg] = continuous_axis(1.0);
    const auto [f_ref, q_ref] = testing::van_loan(a, gwg, 1.0);
    for (int axis = 0; axis < 3; ++axis) {
        EXPECT_LE((axis_block(m.process_noise, axis) - q_ref).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((axis_block(m.transition, axis) - f_ref).cwiseAbs().maxCoeff(), 1e-10);
    }
    const Matrix expected{{0.05, 0.125, 1.0 / 6.0}, {0.125, 1.0 / 3.0, 0.5}, {1.0 / 6.0, 0.5, 1.0}};
    EXPECT_LE((axis_block(m.process_noise, 0) - expected).cwiseAbs().maxCoeff(), 1e-15);
    // Cross-axis blocks are zero.
    EXPECT_EQ(m.process_noise(pva_index(0, 0), pva_index(0, 1)), 0.0);
}

TEST(DiscretizePva, MatchesVanLoanOverParameterGrid) {
    for (double t : {0.1, 0.5, 1.0, 2.5, 10.0}) {
        for (double s : {0.0, 0.3, 1.0, 100.0}) {
            const DiscreteModel m = discretize_pva({t, s});
            const auto [a, gwg] = continuous_axis(s);
            const auto [f_ref, q_ref] = testing::van_loan(a, gwg, t);
            const double qscale = std::max(1.0, q_ref.cwiseAbs().maxCoeff());
            EXPECT_LE((axis_block(m.process_noise, 2) - q_ref).cwiseAbs().maxCoeff(), 1e-10 * qscale)
                << "T=" << t << " S=" << s;
            EXPECT_LE((axis_block(m.transition, 2) - f_ref).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, t * t));
        }
    }
}

TEST(DiscretizePva, ProcessNoiseIsPsd) {
    for (double t = 0.05; t <= 10.0; t *= 1.7) {
        for (double s : {0.0, 0.01, 1.0, 100.0}) {
            const DiscreteModel m = discretize_pva({t, s});
            EXPECT_GE(min_eigenvalue(m.process_noise), -1e-12) << "T=" << t << " S=" << s;
        }
    }
}

TEST(DiscretizePva, SemigroupProperty) {
    for (double t : {0.3, 1.0, 2.0}) {
        const DiscreteModel one = discretize_pva({t, 1.0});
        const DiscreteModel two = discretize_pva({2.0 * t, 1.0});
        EXPECT_LE((one.transition * one.transition - two.transition).norm(), 1e-12 * two.transition.norm());
        const Matrix composed =
            one.transition * one.process_noise * one.transition.transpose() + one.process_noise;
        EXPECT_LE((composed - two.process_noise).norm(), 1e-9 * two.process_noise.norm());
    }
}

TEST(Propagate, NoiselessPolynomialMotion) {
    const DiscreteModel m = discretize_pva({2.0, 0.0});
    StateBelief b;
    b.mean = Vector::Zero(9);
    b.mean(pva_index(0, 0)) = 1.0;   // p
    b.mean(pva_index(1, 0)) = 3.0;   // v
    b.mean(pva_index(2, 0)) = 0.5;   // a
    b.covariance = Matrix::Zero(9, 9);
    b.time = 4.0;
    const StateBelief out = propagate(b, m);
    EXPECT_NEAR(out.mean(pva_index(0, 0)), 1.0 + 3.0 * 2.0 + 0.5 * 0.5 * 4.0, 1e-14);
    EXPECT_NEAR(out.mean(pva_index(1, 0)), 3.0 + 0.5 * 2.0, 1e-14);
    EXPECT_TRUE(out.covariance.isZero(0.0));
    EXPECT_DOUBLE_EQ(out.time, 6.0);
}

TEST(Propagate, IdentityModelAddsNoise) {
    DiscreteModel m{Matrix::Identity(4, 4), Matrix::Identity(4, 4), 1.0};
    std::mt19937_64 rng(1);
    StateBelief b{Vector::Ones(4), testing::random_spd(rng, 4), 0.0};
    const StateBelief out = propagate(b, m);
    EXPECT_LE((out.covariance - (b.covariance + Matrix::Identity(4, 4))).norm(), 1e-14);
}

TEST(Propagate, MatchesDenseOracleAndStaysSymmetric) {
    std::mt19937_64 rng(5);
    const DiscreteModel m = discretize_pva({1.0, 1.0});
    for (int trial = 0; trial < 20; ++trial) {
        StateBelief b{testing::random_unit(rng, 9), testing::random_spd(rng, 9, 1e3), 0.0};
        const StateBelief out = propagate(b, m);
        // Element-wise triple loop as the independent product.
        Matrix ref = m.process_noise;
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j)
                for (int k = 0; k < 9; ++k)
                    for (int l = 0; l < 9; ++l)
                        ref(i, j) += m.transition(i, k) * b.covariance(k, l) * m.transition(j, l);
        EXPECT_LE((out.covariance - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
        EXPECT_LE(asymmetry(out.covariance), 1e-12);
    }
}

TEST(Propagate, RejectsDimensionMismatch) {
    const DiscreteModel m = discretize_pva({1.0, 1.0});
    StateBelief b{Vector::Zero(3), Matrix::Identity(3, 3), 0.0};
    EXPECT_THROW(propagate(b, m), Error);
}

}  // namespace
}  // namespace raps
