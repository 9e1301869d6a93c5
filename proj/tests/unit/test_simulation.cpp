#include "gec/errors.hpp"
#include "gec/simulation.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gec;

namespace {

SimScenario small(const char* name, long B) {
    SimScenario s = parse_scenario(name);
    s.B = B;
    return s;
}

}  // namespace

TEST(Scenario, ParseNamesAndTargets) {
    const auto s = parse_scenario("o2v1");
    EXPECT_EQ(s.outcome, OutcomeModel::O2);
    EXPECT_EQ(s.variance, VarianceModel::V1);
    EXPECT_EQ(s.name(), "O2V1");
    EXPECT_THROW(parse_scenario("O3V1"), InvalidArgument);
    EXPECT_EQ(parse_target("finite"), TargetMode::FinitePopulation);
    EXPECT_EQ(to_string(parse_target("super")), "super");
    EXPECT_THROW(parse_target("both"), InvalidArgument);
}

TEST(Scenario, SuperpopulationMeansMatchLargeSample) {
    for (auto model : {OutcomeModel::O1, OutcomeModel::O2}) {
        SimScenario s;
        s.outcome = model;
        s.variance = VarianceModel::V2;
        s.N = 400000;
        Rng rng(91);
        const auto pop = generate_population(s, rng);
        const double m = pop.y.mean();
        const double sd = std::sqrt((pop.y.array() - m).square().sum() / (s.N - 1));
        EXPECT_NEAR(m, superpopulation_mean(model), 4.0 * sd / std::sqrt(static_cast<double>(s.N)));
    }
    EXPECT_DOUBLE_EQ(superpopulation_mean(OutcomeModel::O1), 1.0);
    EXPECT_DOUBLE_EQ(superpopulation_mean(OutcomeModel::O2), 4.2);
}

TEST(Scenario, StrataQuotasAreMetExactly) {
    const auto s = small("O1V1", 1);
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
        const auto ds = draw_replication(s, rep);
        std::array<long, 4> count{0, 0, 0, 0};
        for (long i = 0; i < ds.data.N(); ++i) {
            if (ds.data.responded(i)) count[stratum_of(ds.data.x()(i, 1), ds.data.x()(i, 2))]++;
        }
        EXPECT_EQ(count, s.strata_sizes);
        EXPECT_EQ(ds.data.n(), 400);
        EXPECT_DOUBLE_EQ(ds.super_mean, 1.0);
    }
}

TEST(Scenario, QuotaLargerThanStratumThrows) {
    SimScenario s;
    s.N = 100;
    Rng rng(92);
    const auto pop = generate_population(s, rng);
    EXPECT_THROW(stratified_missingness(pop, {10, 10, 10, 90}, rng), DataError);
}

TEST(Scenario, StratumCoding) {
    EXPECT_EQ(stratum_of(1.0, 1.0), 0);
    EXPECT_EQ(stratum_of(1.0, 3.0), 1);
    EXPECT_EQ(stratum_of(3.0, 1.0), 2);
    EXPECT_EQ(stratum_of(3.0, 3.0), 3);
    EXPECT_EQ(stratum_of(2.0, 2.0), 0);
}

TEST(Roster, ParseAndFullList) {
    EXPECT_EQ(full_roster().size(), 15u);
    EXPECT_EQ(parse_roster("all"), full_roster());
    EXPECT_EQ(parse_roster("ipw, el3"), (std::vector<std::string>{"IPW", "EL3"}));
    EXPECT_THROW(parse_roster("EL5"), InvalidArgument);
    EXPECT_THROW(parse_roster(""), InvalidArgument);
}

TEST(MonteCarlo, DeterministicAndThreadInvariant) {
    const auto s = small("O1V1", 4);
    const std::vector<std::string> roster{"IPW", "AIPW1", "ET3"};
    SimOptions one;
    one.keep_replications = true;
    SimOptions two = one;
    two.threads = 2;
    const auto a = run_monte_carlo(s, roster, one);
    const auto b = run_monte_carlo(s, roster, two);
    ASSERT_EQ(a.replications.size(), 4u);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t k = 0; k < roster.size(); ++k) {
            EXPECT_EQ(a.replications[r].outputs[k].theta_hat, b.replications[r].outputs[k].theta_hat);
        }
    }
    for (std::size_t k = 0; k < roster.size(); ++k) {
        EXPECT_EQ(a.rows[k].bias, b.rows[k].bias);
        EXPECT_EQ(a.rows[k].rmse, b.rows[k].rmse);
    }
}

TEST(MonteCarlo, EstimatesDoNotDependOnRosterComposition) {
    const auto s = small("O2V2", 3);
    SimOptions opt;
    opt.keep_replications = true;
    const auto alone = run_monte_carlo(s, {"HD2"}, opt);
    const auto all = run_monte_carlo(s, full_roster(), opt);
    std::size_t idx = 0;
    while (full_roster()[idx] != "HD2") ++idx;
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(alone.replications[r].outputs[0].theta_hat, all.replications[r].outputs[idx].theta_hat);
    }
}

TEST(MonteCarlo, SummaryIdentities) {
    const auto s = small("O1V2", 6);
    SimOptions opt;
    opt.keep_replications = true;
    const auto sum = run_monte_carlo(s, full_roster(), opt);
    for (const auto& row : sum.rows) {
        EXPECT_EQ(row.failures, 0) << row.name;
        EXPECT_EQ(row.replications, 6);
        EXPECT_NEAR(row.rmse * row.rmse, row.bias * row.bias + row.variance, 1e-12);
        double b = 0.0;
        const std::size_t k = static_cast<std::size_t>(&row - &sum.rows[0]);
        for (const auto& rep : sum.replications) b += rep.outputs[k].theta_hat - rep.target;
        EXPECT_NEAR(row.bias, b / 6.0, 1e-14);
        if (row.name.size() == 3 && row.name != "IPW") { EXPECT_LE(row.max_residual, 1e-8) << row.name; }
        if (row.name.rfind("IPW", 0) == 0 || row.name.rfind("AIPW", 0) == 0) {
            EXPECT_TRUE(std::isnan(row.coverage)) << row.name;
        } else {
            EXPECT_GE(row.coverage, 0.0);
            EXPECT_LE(row.coverage, 1.0);
        }
    }
    EXPECT_TRUE(std::isnan(sum.row("IPW").var_rel_bias));
    EXPECT_TRUE(sum.row("EL2").mean_kappa.has_value());
    EXPECT_THROW(sum.row("XYZ"), InvalidArgument);
}

TEST(MonteCarlo, FiniteTargetUsesPopulationMean) {
    auto s = small("O1V1", 2);
    s.target = TargetMode::FinitePopulation;
    SimOptions opt;
    opt.keep_replications = true;
    const auto sum = run_monte_carlo(s, {"IPW"}, opt);
    for (const auto& rep : sum.replications) {
        EXPECT_EQ(rep.target, draw_replication(s, rep.rep).finite_mean);
    }
}

TEST(MonteCarlo, WorkerExceptionsPropagate) {
    EXPECT_THROW(parallel_replications(5, 2, [](std::uint64_t r) -> ReplicationRecord {
                     if (r == 3) throw DataError("boom");
                     return {};
                 }),
                 DataError);
}

TEST(DoubleRobustness, DesignsAndDeterminism) {
    DrStudy st;
    st.N = 400;
    st.B = 3;
    for (auto design : {DrDesign::CorrectOutcome, DrDesign::CorrectPropensity}) {
        st.design = design;
        const auto a = draw_dr_replication(st, 1);
        const auto b = draw_dr_replication(st, 1);
        EXPECT_EQ(a.data.delta(), b.data.delta());
        EXPECT_EQ(a.finite_mean, b.finite_mean);
        const auto sum = run_dr_study(st, {"EL3", "ET3"});
        for (const auto& row : sum.rows) EXPECT_EQ(row.failures, 0);
        EXPECT_EQ(sum.target, TargetMode::FinitePopulation);
    }
}

TEST(HighDimensional, SmallStudyRuns) {
    HdStudy st;
    st.N = 300;
    st.p = 40;
    st.B = 2;
    st.settings.cv = false;
    st.settings.c2 = 0.2;
    const auto sum = run_hd_study(st);
    EXPECT_EQ(sum.rows.size(), hd_roster(st.settings).size());
    for (const auto& row : sum.rows) {
        EXPECT_EQ(row.failures, 0) << row.name;
        if (row.name.rfind("GECHD", 0) == 0) {
            EXPECT_LE(row.max_residual, 1e-7);
            EXPECT_LE(row.max_soft_excess, 1e-7);
            EXPECT_LE(row.max_slackness, 1e-7);
        }
    }
}

TEST(HealthSurveyLike, PopulationMatchesResponseRate) {
    NhanesLikeStudy st;
    const auto np = nhanes_like_population(st);
    EXPECT_EQ(np.pop.x.rows(), 9254);
    EXPECT_EQ(np.pop.x.cols(), 21);
    EXPECT_NEAR(np.pi.mean(), 0.319, 1e-6);
    const auto again = nhanes_like_population(st);
    EXPECT_EQ(np.pop.y, again.pop.y);
}
