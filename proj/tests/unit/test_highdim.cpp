#include "gec/errors.hpp"
#include "gec/highdim.hpp"
#include "gec/propensity.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace gec;

namespace {

struct HdCase {
    ObservedData data;
    PropensityFit fit;
    Mat basis;
};

HdCase hd_case(std::uint64_t seed, long N = 300, long p = 30) {
    Rng rng(seed);
    Mat x(N, p);
    Vec y(N);
    std::vector<bool> r(N);
    for (long i = 0; i < N; ++i) {
        for (long j = 0; j < p; ++j) x(i, j) = rng.normal();
        y(i) = 1.0 + x(i, 0) - 0.5 * x(i, 1) + 0.3 * x(i, 2) + rng.normal();
        r[i] = rng.uniform() < expit(0.3 + 0.5 * x(i, 0) - 0.4 * x(i, 3));
    }
    HdCase c{ObservedData(x, y, r), {}, {}};
    std::vector<long> cols(p);
    std::iota(cols.begin(), cols.end(), 0L);
    c.fit = fit_logistic_l1(c.data, 0.5 * std::sqrt(std::log(static_cast<double>(p)) / N));
    c.basis = build_basis(c.data, BasisSpec::linear(cols));
    return c;
}

SoftCalibConfig config_for(const HdCase& c, double c2) {
    const auto taus = default_taus(c.data.n(), c.basis.cols() + c.fit.d(), std::nullopt, 0.5, c2);
    SoftCalibConfig cfg;
    cfg.tau1 = taus.first;
    cfg.tau2 = taus.second;
    return cfg;
}

}  // namespace

TEST(DefaultTaus, Rates) {
    const auto t = default_taus(400, 100);
    EXPECT_DOUBLE_EQ(t.first, 0.5 * std::sqrt(std::log(100.0) / 400));
    EXPECT_DOUBLE_EQ(t.second, 0.5 * std::sqrt(10 * std::log(100.0) / 400));
    EXPECT_DOUBLE_EQ(default_taus(400, 100, 4, 1.0, 1.0).second, std::sqrt(4 * std::log(100.0) / 400));
    EXPECT_THROW(default_taus(0, 10), InvalidArgument);
}

TEST(SoftCalibration, ConstraintsAndComplementarySlackness) {
    const auto c = hd_case(81);
    for (const auto& e : {EntropySpec::el(), EntropySpec::et(), EntropySpec::hd()}) {
        const auto cfg = config_for(c, 0.15);
        const auto r = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), cfg);
        const auto& s = r.solution.dual;
        EXPECT_LE(s.exact_residual.cwiseAbs().maxCoeff(), 1e-7) << to_string(e);
        int active = 0;
        for (long j = 0; j < s.soft_residual.size(); ++j) {
            EXPECT_LE(std::abs(s.soft_residual(j)), cfg.tau2 + 1e-7);
            if (s.lam4(j) != 0.0) {
                ++active;
                EXPECT_NEAR(std::abs(s.soft_residual(j)), cfg.tau2, 1e-7);
                EXPECT_LT(s.soft_residual(j) * s.lam4(j), 0.0);
            }
        }
        EXPECT_GT(active, 0) << "soft constraints should bind at this tolerance";
        EXPECT_GT(s.initial_soft_residual, cfg.tau2);
        EXPECT_LE(s.kkt_residual, cfg.tol);
        for (long i = 0; i < c.data.N(); ++i) {
            if (c.data.responded(i)) { EXPECT_TRUE(in_domain(e, r.solution.weights.omega(i))); }
        }
    }
}

TEST(SoftCalibration, ObjectiveTraceIsMonotone) {
    const auto c = hd_case(82);
    const auto e = EntropySpec::et();
    const auto r = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), config_for(c, 0.2));
    const auto& tr = r.solution.dual.objective_trace;
    ASSERT_GE(tr.size(), 2u);
    for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_LE(tr[k], tr[k - 1] + 1e-12 * std::abs(tr[k - 1]));
}

TEST(SoftCalibration, DualObjectiveIsMinimal) {
    const auto c = hd_case(83);
    const auto e = EntropySpec::hd();
    const auto cfg = config_for(c, 0.2);
    const auto r = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), cfg);
    const auto& s = r.solution.dual;
    Vec lam(3 + s.lam4.size());
    lam << s.lam1, s.lam2, s.lam3, s.lam4;
    const double best = soft_dual_objective(r.soft, e, cfg.tau2, lam);
    EXPECT_NEAR(best, s.objective, 1e-10 * std::max(1.0, std::abs(best)));
    Rng rng(830);
    for (int k = 0; k < 20; ++k) {
        Vec cand = lam;
        for (long j = 0; j < cand.size(); ++j) cand(j) += 1e-3 * rng.normal() * std::max(1e-2, std::abs(lam(j)));
        double v = 0.0;
        try {
            v = soft_dual_objective(r.soft, e, cfg.tau2, cand);
        } catch (const LinkRangeError&) {
            continue;
        }
        EXPECT_GE(v, best - 1e-12);
    }
}

TEST(SoftCalibration, FistaAndNewtonAgree) {
    const auto c = hd_case(84);
    const auto e = EntropySpec::et();
    auto cfg = config_for(c, 0.2);
    const auto ref = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), cfg);
    cfg.fista_iter = 0;
    const auto newton = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), cfg);
    EXPECT_EQ(newton.solution.dual.fista_iterations, 0);
    EXPECT_LT((ref.solution.weights.omega - newton.solution.weights.omega).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_NEAR(ref.estimate.theta_hat, newton.estimate.theta_hat, 1e-6);
}

TEST(SoftCalibration, LargeToleranceLeavesSoftConstraintsInactive) {
    const auto c = hd_case(85);
    const auto e = EntropySpec::el();
    auto cfg = config_for(c, 0.5);
    cfg.tau2 = 10.0;
    const auto r = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), cfg);
    EXPECT_EQ(r.solution.dual.lam4.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE(r.solution.dual.exact_residual.cwiseAbs().maxCoeff(), 1e-7);
}

TEST(SoftCalibration, EstimateUsesProjectionLinearisation) {
    const auto c = hd_case(86);
    const auto e = EntropySpec::et();
    const auto r = run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), config_for(c, 0.3));
    double s = 0.0;
    for (long i = 0; i < c.data.N(); ++i) s += c.data.delta()(i) * r.solution.weights.omega(i) * c.data.delta_y()(i);
    EXPECT_NEAR(r.estimate.theta_hat, s / c.data.N(), 1e-12);
    EXPECT_GT(r.estimate.v_hat, 0.0);
    EXPECT_LT(r.estimate.ci_lo, r.estimate.theta_hat);
}

TEST(SoftCalibration, RegressionWeightsAreQOverCurvature) {
    Vec pi(3), q(3);
    pi << 0.2, 0.5, 0.9;
    q << 1.0, 2.0, 0.5;
    const Vec w = hd_regression_weights(EntropySpec::el(), pi, q);
    for (long i = 0; i < 3; ++i) EXPECT_NEAR(w(i), q(i) / (pi(i) * pi(i)), 1e-12);
}

TEST(SoftCalibration, ZeroToleranceNeedsEnoughRespondents) {
    const auto c = hd_case(87, 120, 60);
    auto cfg = config_for(c, 0.5);
    cfg.tau2 = 0.0;
    EXPECT_THROW(run_gec_hd(c.data, c.basis, c.fit, EntropySpec::et(), QWeights::unit(c.data.N()), cfg),
                 InvalidArgument);
}
