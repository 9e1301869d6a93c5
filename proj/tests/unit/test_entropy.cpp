#include "gec/entropy.hpp"
#include "gec/errors.hpp"
#include "gec/random.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gec;
using gec::testing::five_point;
using gec::testing::table_entropies;

namespace {

double sample_weight(const EntropySpec& e, Rng& rng) {
    return e.domain_lo > 0.0 ? 1.05 + 15.0 * rng.uniform() : 0.05 + 15.0 * rng.uniform();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(Entropy, LinkIsDerivativeOfGenerator) {
    Rng rng(101);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 50; ++k) {
            const double w = sample_weight(e, rng);
            const double h = 1e-4 * std::min(1.0, w - e.domain_lo);
            const double fd = five_point([&](double v) { return g_value(e, v); }, w, h);
            EXPECT_LT(rel(g_deriv(e, w), fd), 1e-6) << to_string(e) << " w=" << w;
        }
    }
}

TEST(Entropy, SecondDerivativeMatchesFiniteDifference) {
    Rng rng(102);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 50; ++k) {
            const double w = sample_weight(e, rng);
            const double h = 1e-4 * std::min(1.0, w - e.domain_lo);
            const double fd = five_point([&](double v) { return g_deriv(e, v); }, w, h);
            EXPECT_LT(rel(g_second(e, w), fd), 1e-6) << to_string(e) << " w=" << w;
            EXPECT_GT(g_second(e, w), 0.0);
        }
    }
}

TEST(Entropy, InverseLinkRoundTrips) {
    Rng rng(103);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 50; ++k) {
            const double w = sample_weight(e, rng);
            const double nu = g_deriv(e, w);
            EXPECT_TRUE(in_link_range(e, nu));
            EXPECT_LT(rel(g_inverse(e, nu), w), 1e-9) << to_string(e);
        }
    }
}

TEST(Entropy, ConjugateDerivativeIsInverseLink) {
    Rng rng(104);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 50; ++k) {
            const double w = sample_weight(e, rng);
            const double nu = g_deriv(e, w);
            const double h = 1e-4 * std::max(1e-3, std::abs(nu)) * 1e-2;
            const double fd = five_point([&](double v) { return conjugate(e, v); }, nu, h);
            EXPECT_LT(rel(fd, g_inverse(e, nu)), 1e-6) << to_string(e) << " nu=" << nu;
            const double fd2 = five_point([&](double v) { return g_inverse(e, v); }, nu, h);
            EXPECT_LT(rel(g_inverse_deriv(e, nu), fd2), 1e-6) << to_string(e);
        }
    }
}

TEST(Entropy, FenchelEquality) {
    Rng rng(105);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 50; ++k) {
            const double w = sample_weight(e, rng);
            const double nu = g_deriv(e, w);
            EXPECT_LT(rel(conjugate(e, nu), w * nu - g_value(e, w)), 1e-9) << to_string(e);
            // Young's inequality at a different weight.
            const double w2 = sample_weight(e, rng);
            EXPECT_GE(conjugate(e, nu) + 1e-9 * std::max(1.0, std::abs(w2 * nu)), w2 * nu - g_value(e, w2));
        }
    }
}

TEST(Entropy, DualTermsAgreeWithScalarFunctions) {
    Rng rng(106);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 20; ++k) {
            const double nu = g_deriv(e, sample_weight(e, rng));
            double F = 0.0, f = 0.0, fp = 0.0;
            ASSERT_TRUE(dual_terms(e, nu, F, f, fp));
            EXPECT_DOUBLE_EQ(F, conjugate(e, nu));
            EXPECT_NEAR(f, g_inverse(e, nu), 1e-12 * std::max(1.0, std::abs(f)));
            EXPECT_NEAR(fp, g_inverse_deriv(e, nu), 1e-10 * std::max(1.0, std::abs(fp)));
        }
    }
}

TEST(Entropy, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(g_deriv(EntropySpec::el(), 2.0), -0.5);
    EXPECT_DOUBLE_EQ(g_deriv(EntropySpec::et(), 1.0), 0.0);
    EXPECT_DOUBLE_EQ(g_inverse(EntropySpec::et(), 0.0), 1.0);
    EXPECT_DOUBLE_EQ(g_deriv(EntropySpec::hd(), 4.0), -1.0);
    EXPECT_DOUBLE_EQ(g_deriv(EntropySpec::inverse(), 1.0), -0.5);
    EXPECT_NEAR(g_deriv(EntropySpec::contrast(), 2.0), std::log(0.5), 1e-15);
    EXPECT_NEAR(g_deriv(EntropySpec::loglog(), std::exp(1.0)), -std::exp(-1.0), 1e-15);
    EXPECT_DOUBLE_EQ(g_second(EntropySpec::el(), 2.0), 0.25);
}

TEST(Entropy, RenyiOneIsQuadratic) {
    const auto e = EntropySpec::renyi(1.0);
    for (double w : {0.3, 1.0, 2.5, 7.0}) {
        EXPECT_DOUBLE_EQ(g_deriv(e, w), w);
        EXPECT_DOUBLE_EQ(g_second(e, w), 1.0);
    }
    const double slope = (g_deriv(e, 3.0) - g_deriv(e, 1.0)) / 2.0;
    EXPECT_NEAR(slope, 1.0, 1e-14);
}

TEST(Entropy, DebiasCovariateIsLinkAtInverseProbability) {
    Rng rng(107);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 20; ++k) {
            const double pi = 0.05 + 0.9 * rng.uniform();
            EXPECT_NEAR(debias_covariate(e, pi), g_deriv(e, 1.0 / pi), 1e-12 * std::max(1.0, std::abs(g_deriv(e, 1.0 / pi))))
                << to_string(e);
        }
    }
    EXPECT_DOUBLE_EQ(debias_covariate(EntropySpec::el(), 0.25), -0.25);
    EXPECT_NEAR(debias_covariate(EntropySpec::et(), 0.25), std::log(4.0), 1e-15);
}

TEST(Entropy, DomainBoundariesAreOpen) {
    EXPECT_THROW(g_value(EntropySpec::el(), 0.0), DomainError);
    EXPECT_THROW(g_value(EntropySpec::el(), -1.0), DomainError);
    EXPECT_THROW(g_deriv(EntropySpec::contrast(), 1.0), DomainError);
    EXPECT_THROW(g_deriv(EntropySpec::loglog(), 1.0 + 1e-13), DomainError);
    EXPECT_THROW(g_second(EntropySpec::hd(), std::nan("")), DomainError);
    EXPECT_NO_THROW(g_deriv(EntropySpec::contrast(), 1.0 + 1e-9));
    EXPECT_FALSE(in_domain(EntropySpec::et(), 0.0));
    EXPECT_TRUE(in_domain(EntropySpec::et(), 1e-6));
}

TEST(Entropy, LinkRangeViolationsThrow) {
    EXPECT_THROW(g_inverse(EntropySpec::el(), 0.0), LinkRangeError);
    EXPECT_THROW(g_inverse(EntropySpec::hd(), 0.5), LinkRangeError);
    EXPECT_THROW(conjugate(EntropySpec::contrast(), 1e-14), LinkRangeError);
    EXPECT_THROW(g_inverse(EntropySpec::renyi(2.0), -1.0), LinkRangeError);
    EXPECT_NO_THROW(g_inverse(EntropySpec::et(), 30.0));
    double F = 0.0, f = 0.0, fp = 0.0;
    EXPECT_FALSE(dual_terms(EntropySpec::el(), 1.0, F, f, fp));
}

TEST(Entropy, BregmanIsNonnegativeAndZeroOnDiagonal) {
    Rng rng(108);
    for (const auto& e : table_entropies()) {
        for (int k = 0; k < 30; ++k) {
            const double a = sample_weight(e, rng);
            const double b = sample_weight(e, rng);
            EXPECT_GE(bregman(e, a, b), 0.0);
            EXPECT_EQ(bregman(e, a, a), 0.0);
        }
    }
}

TEST(Entropy, ParseAndPrint) {
    for (const char* name : {"el", "ET", "contrast", "hd", "loglog", "inverse"}) {
        const auto e = parse_entropy(name);
        EXPECT_EQ(parse_entropy(to_string(e)).kind, e.kind);
    }
    const auto r = parse_entropy("renyi:0.5");
    EXPECT_EQ(r.kind, EntropyKind::Renyi);
    EXPECT_DOUBLE_EQ(r.alpha, 0.5);
    EXPECT_THROW(parse_entropy("shannon"), InvalidArgument);
    EXPECT_THROW(parse_entropy("renyi:x"), InvalidArgument);
    EXPECT_THROW(EntropySpec::renyi(0.0), InvalidArgument);
}
