#include "gec/entropy.hpp"
#include "gec/errors.hpp"
#include "gec/random.hpp"
#include "gec/regression.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gec;
using gec::testing::random_data;

namespace {

Mat with_intercept(const Mat& x) {
    Mat z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(x.cols()) = x;
    return z;
}

}  // namespace

TEST(Regression, WeightedFitSolvesWeightedNormalEquations) {
    Rng rng(31);
    const auto data = random_data(rng, 120, 3);
    const Mat X = with_intercept(data.x());
    Vec w(120);
    for (long i = 0; i < 120; ++i) w(i) = 0.5 + rng.uniform();
    const auto fit = fit_weighted(X, data, w);
    const Vec dw = data.delta().cwiseProduct(w);
    const Vec score = X.transpose() * dw.cwiseProduct(fit.residuals);
    EXPECT_LT(score.cwiseAbs().maxCoeff(), 1e-9);
    for (long i = 0; i < 120; ++i) {
        if (!data.responded(i)) { EXPECT_EQ(fit.residuals(i), 0.0); }
    }
}

TEST(Regression, GlsUsesInverseVariance) {
    Rng rng(32);
    const auto data = random_data(rng, 80, 2);
    const Mat X = with_intercept(data.x());
    Vec v(80);
    for (long i = 0; i < 80; ++i) v(i) = 0.2 + 2 * rng.uniform();
    const auto a = fit_gls(X, data, v);
    const auto b = fit_weighted(X, data, v.cwiseInverse());
    EXPECT_EQ(a.coef, b.coef);
    Vec bad = v;
    bad(data.responder_indices()[0]) = -1.0;
    EXPECT_THROW(fit_weighted(X, data, bad), InvalidArgument);
}

TEST(Regression, GammaHatWeightsAreQOverSecondDerivative) {
    Rng rng(33);
    const auto data = random_data(rng, 100, 2);
    const Mat X = with_intercept(data.x());
    Vec omega(100), q(100);
    for (long i = 0; i < 100; ++i) {
        omega(i) = 1.2 + rng.uniform();
        q(i) = 0.5 + rng.uniform();
    }
    const auto e = EntropySpec::el();
    const auto fit = fit_gamma_hat(X, data, e, omega, q);
    Vec w(100);
    for (long i = 0; i < 100; ++i) w(i) = q(i) * omega(i) * omega(i);
    const auto ref = fit_weighted(X, data, w);
    EXPECT_LT((fit.coef - ref.coef).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lasso, MatchesProximalGradientOracle) {
    Rng rng(34);
    const auto data = random_data(rng, 150, 8);
    const Mat z = with_intercept(data.x());
    Vec w(150);
    for (long i = 0; i < 150; ++i) w(i) = 0.5 + rng.uniform();
    for (double tau1 : {0.0, 0.01, 0.1, 0.5}) {
        const auto fit = fit_lasso_weighted(z, data, w, tau1);
        Vec pf = Vec::Ones(z.cols());
        pf(0) = 0.0;
        const Vec oracle = gec::testing::ista_lasso(z, data.delta_y(), data.delta().cwiseProduct(w), 0.5 * 150 * tau1, pf);
        EXPECT_LT((fit.coef - oracle).cwiseAbs().maxCoeff(), 1e-6) << tau1;
        EXPECT_LT(lasso_kkt(z, data, w, tau1, fit.coef), 1e-6);
        EXPECT_LE(lasso_objective(z, data, w, tau1, fit.coef), lasso_objective(z, data, w, tau1, oracle) + 1e-10);
    }
}

TEST(Lasso, LargePenaltyLeavesWeightedMean) {
    Rng rng(35);
    const auto data = random_data(rng, 100, 5);
    const Mat z = with_intercept(data.x());
    const auto fit = fit_lasso_weighted(z, data, Vec::Ones(100), 100.0);
    for (long j = 1; j < z.cols(); ++j) EXPECT_EQ(fit.coef(j), 0.0);
    EXPECT_NEAR(fit.coef(0), data.delta_y().sum() / data.n(), 1e-10);
    EXPECT_THROW(fit_lasso_weighted(z, data, Vec::Ones(100), -1.0), InvalidArgument);
}

TEST(Lasso, ZeroPenaltyEqualsLeastSquares) {
    Rng rng(36);
    const auto data = random_data(rng, 100, 4);
    const Mat z = with_intercept(data.x());
    const auto lasso = fit_lasso_weighted(z, data, Vec::Ones(100), 0.0);
    const auto ols = fit_weighted(z, data, Vec::Ones(100));
    EXPECT_LT((lasso.coef - ols.coef).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lasso, ObjectiveTraceIsMonotone) {
    Rng rng(37);
    const auto data = random_data(rng, 200, 10);
    const Mat z = with_intercept(data.x());
    Vec pf = Vec::Ones(z.cols());
    pf(0) = 0.0;
    std::vector<double> trace;
    LassoControl ctl;
    ctl.objective_trace = &trace;
    double kkt = 0.0;
    int sweeps = 0;
    coordinate_descent_lasso(z, data.delta_y(), data.delta(), 3.0, pf, Vec::Zero(z.cols()), ctl, kkt, sweeps);
    ASSERT_GE(trace.size(), 2u);
    for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1] + 1e-9 * std::abs(trace[k - 1]));
    EXPECT_LT(kkt, 1e-9);
}

TEST(Lasso, DependentUnpenalisedColumnsThrow) {
    Rng rng(38);
    const auto data = random_data(rng, 60, 2);
    Mat z(60, 3);
    z.col(0).setOnes();
    z.col(1).setConstant(2.0);
    z.col(2) = data.x().col(0);
    Vec pf(3);
    pf << 0.0, 0.0, 1.0;
    double kkt = 0.0;
    int sweeps = 0;
    EXPECT_THROW(coordinate_descent_lasso(z, data.delta_y(), data.delta(), 1.0, pf, Vec::Zero(3), {}, kkt, sweeps),
                 RankDeficiencyError);
}
