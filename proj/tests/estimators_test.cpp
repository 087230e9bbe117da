#include "raps/estimators.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "raps/error.hpp"

namespace raps {
namespace {

struct Instance {
    StateBelief belief;
    MeasurementBatch batch;
};

Instance random_instance(std::mt19937_64& rng, int n, int m) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> sig(0.5, 2.0);
    Instance inst;
    inst.belief.mean = Vector(n);
    for (int i = 0; i < n; ++i) inst.belief.mean(i) = g(rng);
    inst.belief.covariance = testing::random_spd(rng, n, 50.0);
    inst.batch.values = Vector(m);
    inst.batch.rows = Matrix(m, n);
    inst.batch.sigmas = Vector(m);
    for (int i = 0; i < m; ++i) {
        inst.batch.rows.row(i) = testing::random_unit(rng, n).transpose();
        inst.batch.sigmas(i) = sig(rng);
        inst.batch.values(i) = 3.0 * g(rng);
    }
    return inst;
}

double map_cost(const Instance& inst, const Vector& b, const Vector& x) {
    const Matrix j = inst.belief.information();
    const Vector dx = x - inst.belief.mean;
    double c = dx.dot(j * dx);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double r = (inst.batch.values(i) - inst.batch.rows.row(i).dot(x)) / inst.batch.sigmas(i);
        c += b(i) * r * r;
    }
    return c;
}

Vector random_binary(std::mt19937_64& rng, int m) {
    std::bernoulli_distribution coin(0.5);
    Vector b(m);
    for (int i = 0; i < m; ++i) b(i) = coin(rng) ? 1.0 : 0.0;
    return b;
}

TEST(MapUpdate, EmptySelectionKeepsPrior) {
    std::mt19937_64 rng(1);
    const Instance inst = random_instance(rng, 4, 6);
    const MapUpdate u = map_update_with_selection(inst.belief, inst.batch, SelectionVector::none(6));
    EXPECT_LE((u.estimate - inst.belief.mean).norm(), 1e-14);
    EXPECT_LE((u.information - inst.belief.information()).norm(), 1e-12);
}

TEST(MapUpdate, ScalarFusion) {
    StateBelief b{Vector::Zero(1), Matrix::Identity(1, 1), 0.0};
    MeasurementBatch batch{Vector::Ones(1), Matrix::Ones(1, 1), Vector::Ones(1), 0.0};
    const MapUpdate u = kf_update(b, batch);
    EXPECT_NEAR(u.estimate(0), 0.5, 1e-15);
    EXPECT_NEAR(u.posterior.covariance(0, 0), 0.5, 1e-15);
}

TEST(MapUpdate, MatchesStackedWlsOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, 9, 12);
        const MapUpdate u = map_update_with_selection(inst.belief, inst.batch, SelectionVector::all(12));
        const Vector ref = testing::stacked_wls(inst.belief.mean, inst.belief.information(), inst.batch.rows,
                                                inst.batch.values, inst.batch.weights());
        EXPECT_LE((u.estimate - ref).norm(), 1e-9 * (1.0 + ref.norm()));
    }
}

TEST(MapUpdate, GradientVanishesAtEstimate) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, 6, 10);
        const Vector b = random_binary(rng, 10);
        const MapUpdate u = map_update_with_selection(inst.belief, inst.batch, SelectionVector(b));
        const double cost = map_cost(inst, b, u.estimate);
        Vector grad(6);
        const double h = 1e-3;
        for (int k = 0; k < 6; ++k) {
            Vector xp = u.estimate, xm = u.estimate;
            xp(k) += h;
            xm(k) -= h;
            grad(k) = (map_cost(inst, b, xp) - map_cost(inst, b, xm)) / (2 * h);
        }
        EXPECT_LE(grad.norm(), 1e-8 * (1.0 + cost));
    }
}

TEST(MapUpdate, RejectsSingularPriorAndRelaxedSelection) {
    std::mt19937_64 rng(4);
    Instance inst = random_instance(rng, 3, 2);
    EXPECT_THROW(map_update_with_selection(inst.belief, inst.batch,
                                           SelectionVector(Vector::Constant(2, 0.5), SelectionMode::Relaxed)),
                 Error);
    inst.belief.covariance = Matrix::Zero(3, 3);
    try {
        kf_update(inst.belief, inst.batch);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotPositiveDefinite);
    }
}

TEST(MapUpdate, InformationIsMonotoneInSelection) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 1000; ++trial) {
        const Instance inst = random_instance(rng, 4, 8);
        const Vector b = random_binary(rng, 8);
        Vector bp = b;
        for (int i = 0; i < 8; ++i)
            if (coin(rng)) bp(i) = 1.0;
        const Matrix jp = inst.belief.information();
        const Matrix j = selected_information(jp, inst.batch, b);
        const Matrix jbig = selected_information(jp, inst.batch, bp);
        EXPECT_GE(min_eigenvalue(j - jp), -1e-10);
        EXPECT_GE(min_eigenvalue(jbig - j), -1e-10);
    }
}

TEST(KfUpdate, NoMeasurementsLeavesBeliefUnchanged) {
    std::mt19937_64 rng(6);
    const Instance inst = random_instance(rng, 9, 0);
    const MapUpdate u = kf_update(inst.belief, inst.batch);
    EXPECT_LE((u.estimate - inst.belief.mean).norm(), 1e-15);
    EXPECT_LE((u.posterior.covariance - inst.belief.covariance).norm(), 1e-10);
}

TEST(KfUpdate, EqualsAllSelectedBitForBit) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const Instance inst = random_instance(rng, 5, 7);
        const MapUpdate a = kf_update(inst.belief, inst.batch);
        const MapUpdate b = map_update_with_selection(inst.belief, inst.batch, SelectionVector::all(7));
        EXPECT_EQ(a.estimate, b.estimate);
        EXPECT_EQ(a.information, b.information);
    }
}

TEST(KfUpdate, RepeatedMeasurementsShrinkVariance) {
    StateBelief b{Vector::Zero(1), Matrix::Constant(1, 1, 4.0), 0.0};
    for (int m : {1, 10, 100}) {
        MeasurementBatch batch{Vector::Constant(m, 2.0), Matrix::Ones(m, 1), Vector::Constant(m, 1.5), 0.0};
        const MapUpdate u = kf_update(b, batch);
        // Normal equations of the stacked system: info = 1/4 + m / 1.5^2.
        const double var = 1.0 / (0.25 + m / 2.25);
        EXPECT_NEAR(u.posterior.covariance(0, 0), var, 1e-12);
        const Vector ref = testing::stacked_wls(b.mean, Matrix::Constant(1, 1, 0.25), batch.rows, batch.values,
                                                batch.weights());
        EXPECT_NEAR(u.estimate(0), ref(0), 1e-12);
    }
}

TEST(TdSelect, GatesOnNormalizedInnovation) {
    StateBelief b{Vector::Zero(2), Matrix::Identity(2, 2), 0.0};
    MeasurementBatch batch;
    batch.rows = Matrix::Identity(2, 2);
    batch.sigmas = Vector::Ones(2);
    const double s = std::sqrt(2.0);  // sqrt(h P h' + sigma^2)
    batch.values = Vector{{0.0, 3.0 * s}};
    const SelectionVector sel = td_select(b, batch, TdConfig{2.0});
    EXPECT_EQ(sel.entries(), (Vector{{1.0, 0.0}}));
    const SelectionVector all = td_select(b, batch, TdConfig{1e9});
    EXPECT_EQ(all.count(), 2);
}

TEST(TdSelect, NoiseOnlyNormalization) {
    StateBelief b{Vector::Zero(1), Matrix::Identity(1, 1), 0.0};
    MeasurementBatch batch{Vector{{2.5}}, Matrix::Ones(1, 1), Vector::Ones(1), 0.0};
    EXPECT_EQ(td_select(b, batch, {2.0, TdNormalization::Innovation}).count(), 1);  // 2.5/sqrt(2) < 2
    EXPECT_EQ(td_select(b, batch, {2.0, TdNormalization::NoiseOnly}).count(), 0);
}

TEST(TdSelect, InvariantToJointScaling) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Instance inst = random_instance(rng, 3, 6);
        const SelectionVector base = td_select(inst.belief, inst.batch, TdConfig{});
        // Scale residuals and innovation std by c: y -> xbar-projection + c*nu, P -> c^2 P, sigma -> c sigma.
        const double c = 3.7;
        Instance scaled = inst;
        const Vector pred = inst.batch.rows * inst.belief.mean;
        scaled.batch.values = pred + c * (inst.batch.values - pred);
        scaled.belief.covariance *= c * c;
        scaled.batch.sigmas *= c;
        EXPECT_EQ(td_select(scaled.belief, scaled.batch, TdConfig{}).entries(), base.entries());
    }
}

TEST(TdSelect, CalibrationMatchesTwoSidedNormal) {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);
    const int trials = 100000;
    const double p_var = 0.7, sigma = 1.5;
    StateBelief b{Vector::Zero(1), Matrix::Constant(1, 1, p_var), 0.0};
    MeasurementBatch batch{Vector::Zero(trials), Matrix::Ones(trials, 1), Vector::Constant(trials, sigma), 0.0};
    for (int k = 0; k < trials; ++k)
        batch.values(k) = std::sqrt(p_var) * g(rng) + sigma * g(rng);
    const double rate = static_cast<double>(td_select(b, batch, TdConfig{2.0}).count()) / trials;
    const double expected = 2.0 * testing::normal_cdf(2.0) - 1.0;
    EXPECT_NEAR(expected, 0.9545, 1e-4);
    EXPECT_NEAR(rate, expected, 0.005);
}

TEST(TdUpdate, HugeLambdaEqualsKf) {
    std::mt19937_64 rng(10);
    const Instance inst = random_instance(rng, 4, 5);
    const TdUpdate td = td_update(inst.belief, inst.batch, TdConfig{1e12});
    const MapUpdate kf = kf_update(inst.belief, inst.batch);
    EXPECT_EQ(td.update.estimate, kf.estimate);
}

TEST(TdUpdate, DropsTenSigmaOutlier) {
    StateBelief b{Vector::Zero(2), Matrix::Identity(2, 2) * 0.01, 0.0};
    MeasurementBatch batch;
    batch.rows = Matrix(5, 2);
    batch.rows << 1, 0, 0, 1, 1, 0, 0, 1, 1, 0;
    batch.sigmas = Vector::Ones(5);
    batch.values = Vector::Constant(5, 0.1);
    batch.values(3) = 10.0;
    const TdUpdate td = td_update(b, batch, TdConfig{2.0});
    EXPECT_EQ(td.selection.entries(), (Vector{{1, 1, 1, 0, 1}}));
}

TEST(TdUpdate, NeverExceedsKfInformation) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Instance inst = random_instance(rng, 4, 8);
        const TdUpdate td = td_update(inst.belief, inst.batch, TdConfig{1.0});
        const MapUpdate kf = kf_update(inst.belief, inst.batch);
        EXPECT_GE(min_eigenvalue(kf.information - td.update.information), -1e-10);
    }
}

}  // namespace
}  // namespace raps
