#include "gec/errors.hpp"
#include "gec/propensity.hpp"
#include "gec/random.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gec;
using gec::testing::random_data;

TEST(Logistic, ScoreEquationsVanish) {
    Rng rng(21);
    const auto data = random_data(rng, 400, 3);
    const auto fit = fit_logistic(data, {0, 1, 2});
    const Vec score = fit.x_rp.transpose() * (data.delta() - fit.pi_hat);
    EXPECT_LT(score.cwiseAbs().maxCoeff() / 400.0, 1e-10);
    EXPECT_FALSE(fit.separation);
    EXPECT_EQ(fit.d(), 4);
    for (long i = 0; i < fit.pi_hat.size(); ++i) {
        EXPECT_NEAR(fit.pi_hat(i), expit(fit.x_rp.row(i).dot(fit.phi_hat)), 1e-15);
    }
}

TEST(Logistic, InterceptOnlyMatchesResponseRate) {
    Rng rng(22);
    const auto data = random_data(rng, 300, 2);
    const auto fit = fit_logistic(data, {});
    EXPECT_NEAR(fit.pi_hat(0), data.delta().mean(), 1e-12);
    EXPECT_NEAR(fit.phi_hat(0), std::log(data.delta().mean() / (1 - data.delta().mean())), 1e-10);
}

TEST(Logistic, PiGradientMatchesFiniteDifference) {
    Rng rng(23);
    const auto data = random_data(rng, 200, 2);
    const auto fit = fit_logistic(data, {0, 1});
    const Mat G = pi_gradient_matrix(fit);
    for (long i : {0L, 17L, 133L}) {
        for (long j = 0; j < fit.d(); ++j) {
            Vec ph = fit.phi_hat;
            const double h = 1e-6;
            ph(j) += h;
            const double up = expit(fit.x_rp.row(i).dot(ph));
            ph(j) -= 2 * h;
            const double dn = expit(fit.x_rp.row(i).dot(ph));
            EXPECT_NEAR(G(i, j), (up - dn) / (2 * h), 1e-8);
        }
        EXPECT_EQ(pi_gradient(fit, i), G.row(i).transpose());
    }
}

TEST(Logistic, SeparationIsWarnedNotThrown) {
    Mat x(20, 1);
    Vec y = Vec::Ones(20);
    std::vector<bool> r(20);
    for (long i = 0; i < 20; ++i) {
        x(i, 0) = i < 10 ? -1.0 - i : 1.0 + i;
        r[i] = i >= 10;
    }
    const ObservedData data(x, y, r);
    const auto fit = fit_logistic(data, {0});
    EXPECT_TRUE(fit.separation);
    EXPECT_FALSE(fit.warnings.empty());
}

TEST(Logistic, AllRespondingIsSeparation) {
    Rng rng(24);
    Mat x(30, 1);
    for (long i = 0; i < 30; ++i) x(i, 0) = rng.normal();
    const ObservedData data(x, Vec::Ones(30), std::vector<bool>(30, true));
    const auto fit = fit_logistic(data, {0});
    EXPECT_TRUE(fit.separation);
}

TEST(Logistic, RankDeficientDesignThrows) {
    Rng rng(25);
    Mat x(50, 2);
    for (long i = 0; i < 50; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = 2.0 * x(i, 0);
    }
    std::vector<bool> r(50);
    for (long i = 0; i < 50; ++i) r[i] = i % 3 != 0;
    const ObservedData data(x, Vec::Ones(50), r);
    EXPECT_THROW(fit_logistic(data, {0, 1}), RankDeficiencyError);
    EXPECT_THROW(fit_logistic(data, {5}), InvalidArgument);
}

TEST(LogisticL1, MatchesProximalGradientOracle) {
    Rng rng(26);
    const auto data = random_data(rng, 250, 6);
    const Mat X = rp_design(data.x(), {0, 1, 2, 3, 4, 5});
    for (double pen : {0.002, 0.01, 0.03}) {
        const auto fit = fit_logistic_l1(X, data.delta(), pen);
        const Vec oracle = gec::testing::proximal_logistic(X, data.delta(), pen);
        EXPECT_LT((fit.phi_hat - oracle).cwiseAbs().maxCoeff(), 1e-6) << pen;
        EXPECT_LT(logistic_l1_kkt(X, data.delta(), pen, fit.phi_hat), 1e-6);
        EXPECT_LE(logistic_l1_objective(X, data.delta(), pen, fit.phi_hat),
                  logistic_l1_objective(X, data.delta(), pen, oracle) + 1e-12);
    }
}

TEST(LogisticL1, LargePenaltyZeroesSlopes) {
    Rng rng(27);
    const auto data = random_data(rng, 200, 4);
    const auto fit = fit_logistic_l1(data, 10.0);
    EXPECT_TRUE(fit.regularized);
    for (long j = 1; j < fit.phi_hat.size(); ++j) EXPECT_EQ(fit.phi_hat(j), 0.0);
    EXPECT_NEAR(fit.pi_hat(0), data.delta().mean(), 1e-9);
}

TEST(LogisticL1, ZeroPenaltyIsMaximumLikelihood) {
    Rng rng(28);
    const auto data = random_data(rng, 300, 3);
    const auto l1 = fit_logistic_l1(data, 0.0, {0, 1, 2});
    const auto ml = fit_logistic(data, {0, 1, 2});
    EXPECT_LT((l1.phi_hat - ml.phi_hat).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_THROW(fit_logistic_l1(data, -1.0), InvalidArgument);
}

TEST(LogisticL1, CrossValidationIsSeededAndOnGrid) {
    Rng rng(29);
    const auto data = random_data(rng, 300, 8);
    const Mat X = rp_design(data.x(), {0, 1, 2, 3, 4, 5, 6, 7});
    const auto a = cv_logistic_l1(X, data.delta(), 99);
    const auto b = cv_logistic_l1(X, data.delta(), 99);
    EXPECT_EQ(a.penalty, b.penalty);
    EXPECT_EQ(a.deviance, b.deviance);
    EXPECT_EQ(a.grid.size(), 20u);
    EXPECT_NE(std::find(a.grid.begin(), a.grid.end(), a.penalty), a.grid.end());
    // The largest grid penalty zeroes every slope.
    const auto top = fit_logistic_l1(X, data.delta(), a.grid.front());
    for (long j = 1; j < top.phi_hat.size(); ++j) EXPECT_EQ(top.phi_hat(j), 0.0);
    EXPECT_THROW(cv_logistic_l1(X, data.delta(), 1, 1), InvalidArgument);
}
