#include "gec/aipw.hpp"
#include "gec/data.hpp"
#include "gec/errors.hpp"
#include "gec/propensity.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gec;
using gec::testing::random_data;

namespace {

struct Fixture {
    ObservedData data;
    PropensityFit fit;
    Mat basis;
};

Fixture make(std::uint64_t seed, long N = 300) {
    Rng rng(seed);
    Fixture f{random_data(rng, N, 2), {}, {}};
    f.fit = fit_logistic(f.data, {0, 1});
    f.basis = build_basis(f.data, BasisSpec::linear({0, 1}));
    return f;
}

}  // namespace

TEST(Ipw, HorvitzThompsonMean) {
    const auto f = make(41);
    double s = 0.0;
    for (long i = 0; i < f.data.N(); ++i) s += f.data.delta_y()(i) / f.fit.pi_hat(i);
    EXPECT_NEAR(ipw_estimate(f.data, f.fit).theta_hat, s / f.data.N(), 1e-13);
}

TEST(Ipw, ZeroPropensityAtResponderIsRejected) {
    auto f = make(42);
    f.fit.pi_hat(f.data.responder_indices()[0]) = 0.0;
    EXPECT_THROW(ipw_estimate(f.data, f.fit), InvalidArgument);
}

TEST(Aipw, RecomputedFromWeightedNormalEquations) {
    const auto f = make(43);
    const QWeights q = QWeights::power(f.fit.pi_hat, 0.4);
    const auto est = aipw_estimate(f.data, f.fit, f.basis, q);
    const Vec w = f.data.delta().cwiseProduct(q.values);
    const Mat A = f.basis.transpose() * w.asDiagonal() * f.basis;
    const Vec beta = A.ldlt().solve(f.basis.transpose() * w.asDiagonal() * f.data.delta_y());
    double theta = 0.0;
    for (long i = 0; i < f.data.N(); ++i) {
        const double pred = f.basis.row(i).dot(beta);
        theta += pred + f.data.delta()(i) * (f.data.delta_y()(i) - pred) / f.fit.pi_hat(i);
    }
    theta /= f.data.N();
    EXPECT_NEAR(est.theta_hat, theta, 1e-11);
    EXPECT_LT((est.beta - beta).cwiseAbs().maxCoeff(), 1e-10);
    ASSERT_TRUE(est.kappa.has_value());
    EXPECT_DOUBLE_EQ(*est.kappa, 0.4);
}

TEST(Aipw, ExactLinearOutcomeGivesPopulationPrediction) {
    auto f = make(44);
    Vec y = 2.0 * f.basis.col(0) + 3.0 * f.basis.col(1) - f.basis.col(2);
    std::vector<bool> r(f.data.N());
    for (long i = 0; i < f.data.N(); ++i) r[i] = f.data.responded(i);
    const ObservedData data(f.data.x(), y, r);
    const auto est = aipw_estimate(data, f.fit, f.basis, QWeights::unit(data.N()));
    EXPECT_NEAR(est.theta_hat, y.mean(), 1e-11);
}

TEST(Aipw, ZeroColumnsAreDropped) {
    const auto f = make(45);
    Mat b(f.basis.rows(), 4);
    b << f.basis, Vec::Zero(f.basis.rows());
    const auto a = aipw_estimate(f.data, f.fit, b, QWeights::unit(f.data.N()));
    const auto ref = aipw_estimate(f.data, f.fit, f.basis, QWeights::unit(f.data.N()));
    EXPECT_NEAR(a.theta_hat, ref.theta_hat, 1e-12);
    EXPECT_EQ(a.beta(3), 0.0);
}

TEST(Aipw, EmpiricalLossMatchesDirectFormula) {
    const auto f = make(46);
    const Vec v = squared_residual_vtilde(f.data, f.fit, f.basis);
    for (double kappa : {-0.5, 0.0, 1.0, 2.0}) {
        const long N = f.data.N();
        Vec q = f.fit.pi_hat.array().pow(kappa - 1.0);
        Mat M = Mat::Zero(3, 3);
        Vec db = Vec::Zero(3);
        for (long i = 0; i < N; ++i) {
            db += (f.data.delta()(i) / f.fit.pi_hat(i) - 1.0) * f.basis.row(i).transpose();
            M += f.data.delta()(i) * q(i) * f.basis.row(i).transpose() * f.basis.row(i);
        }
        const Vec a = M.ldlt().solve(db);
        double s = 0.0;
        for (long i = 0; i < N; ++i) {
            if (!f.data.responded(i)) continue;
            const double t = 1.0 / f.fit.pi_hat(i) - q(i) * f.basis.row(i).dot(a);
            s += t * t * v(i);
        }
        EXPECT_NEAR(empirical_loss(f.data, f.fit, f.basis, kappa, v), s / N, 1e-9 * std::max(1.0, s / N));
    }
}

TEST(Aipw, KappaSelectionMinimisesGrid) {
    const auto f = make(47);
    for (VMode mode : {VMode::Unit, VMode::SquaredResidual}) {
        const auto sel = select_kappa(f.data, f.fit, f.basis, mode);
        ASSERT_EQ(sel.grid.size(), sel.grid_loss.size());
        EXPECT_EQ(sel.grid.size(), 41u);
        for (double l : sel.grid_loss) {
            if (!std::isnan(l)) {
                EXPECT_GE(l, 0.0);
                EXPECT_LE(sel.loss, l + 1e-12);
            }
        }
        EXPECT_GE(sel.kappa, -1.0);
        EXPECT_LE(sel.kappa, 3.0);
        const auto again = select_kappa(f.data, f.fit, f.basis, mode);
        EXPECT_EQ(again.kappa, sel.kappa);
    }
}

TEST(Aipw, GridMinimiserTiesPreferKappaOne) {
    const auto sel = minimise_on_grid([](double) { return 2.0; }, {-1.0, 3.0, 0.5, 0.0});
    EXPECT_DOUBLE_EQ(sel.kappa, 1.0);
    const auto quad = minimise_on_grid([](double k) { return (k - 0.37) * (k - 0.37); }, {-1.0, 3.0, 0.1, 1e-8});
    EXPECT_NEAR(quad.kappa, 0.37, 1e-6);
    EXPECT_THROW(minimise_on_grid([](double) -> double { throw Error("x"); }, {}), InfeasibleCalibration);
}
