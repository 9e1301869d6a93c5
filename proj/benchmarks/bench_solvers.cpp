#include "gec/calibration.hpp"
#include "gec/highdim.hpp"
#include "gec/propensity.hpp"
#include "gec/regression.hpp"
#include "gec/simulation.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>

using namespace gec;

namespace {

struct LowDim {
    ObservedData data;
    PropensityFit fit;
    Mat basis;
};

LowDim low_dim(long N) {
    SimScenario s = parse_scenario("O1V1");
    s.N = N;
    s.strata_sizes = {N * 3 / 20, N / 10, N / 10, N / 20};
    const auto ds = draw_replication(s, 0);
    LowDim c{ds.data, fit_logistic(ds.data, {1, 2}), {}};
    c.basis = build_basis(c.data, BasisSpec::linear({0, 1}));
    return c;
}

struct HighDim {
    ObservedData data;
    PropensityFit fit;
    Mat basis;
};

HighDim high_dim(long p) {
    HdStudy st;
    st.p = p;
    const auto ds = draw_hd_replication(st, 0);
    std::vector<long> cols(p);
    std::iota(cols.begin(), cols.end(), 0L);
    HighDim c{ds.data, {}, {}};
    c.fit = fit_logistic_l1(c.data, 0.5 * std::sqrt(std::log(static_cast<double>(p)) / st.N), cols);
    c.basis = build_basis(c.data, BasisSpec::linear(cols));
    return c;
}

}  // namespace

static void BM_DualSolve(benchmark::State& state) {
    const auto c = low_dim(state.range(0));
    const auto e = EntropySpec::el();
    const auto design = build_design(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()),
                                     parse_constraints("balance,debias,orthogonal"));
    for (auto _ : state) benchmark::DoNotOptimize(solve_dual(design, e).lambda);
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DualSolve)->Arg(1000)->Arg(4000)->Arg(16000)->Complexity();

static void BM_RunGec(benchmark::State& state) {
    const auto c = low_dim(1000);
    const auto e = EntropySpec::et();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            run_gec(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), parse_constraints("balance,debias,orthogonal"))
                .estimate.theta_hat);
    }
}
BENCHMARK(BM_RunGec);

static void BM_SoftCalibration(benchmark::State& state) {
    const auto c = high_dim(state.range(0));
    const auto e = EntropySpec::et();
    const auto taus = default_taus(c.data.n(), c.basis.cols() + c.fit.d());
    SoftCalibConfig cfg;
    cfg.tau1 = taus.first;
    cfg.tau2 = taus.second;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_gec_hd(c.data, c.basis, c.fit, e, QWeights::unit(c.data.N()), cfg).estimate.theta_hat);
    }
}
BENCHMARK(BM_SoftCalibration)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_WeightedLasso(benchmark::State& state) {
    const auto c = high_dim(state.range(0));
    const Vec w = Vec::Ones(c.data.N());
    const double tau1 = 0.5 * std::sqrt(std::log(static_cast<double>(state.range(0))) / c.data.n());
    for (auto _ : state) benchmark::DoNotOptimize(fit_lasso_weighted(c.basis, c.data, w, tau1).coef);
}
BENCHMARK(BM_WeightedLasso)->Arg(50)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
