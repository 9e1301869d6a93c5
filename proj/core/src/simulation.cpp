#include "gec/simulation.hpp"

#include "gec/aipw.hpp"
#include "gec/calibration.hpp"
#include "gec/errors.hpp"
#include "gec/highdim.hpp"
#include "gec/propensity.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace gec {

namespace {

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

EstimatorOutput failed(const std::string& what) {
    EstimatorOutput o;
    o.ok = false;
    o.error = what;
    return o;
}

EstimatorOutput from_gec(const GecResult& r) {
    EstimatorOutput o;
    o.ok = true;
    o.theta_hat = r.estimate.theta_hat;
    o.v_hat = r.estimate.v_hat;
    o.ci_lo = r.estimate.ci_lo;
    o.ci_hi = r.estimate.ci_hi;
    o.has_interval = true;
    o.residual = r.weights.max_residual_scaled();
    o.iterations = r.dual.iterations;
    return o;
}

EstimatorOutput from_baseline(const BaselineEstimate& b) {
    EstimatorOutput o;
    o.ok = true;
    o.theta_hat = b.theta_hat;
    o.v_hat = kNaN;
    o.ci_lo = kNaN;
    o.ci_hi = kNaN;
    o.kappa = b.kappa;
    return o;
}

// An exactly dependent constraint is implied by the others, so removing it
// leaves the feasible set and hence the weights unchanged.
GecResult run_gec_dropping_redundant(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                                     const EntropySpec& entropy, const QWeights& q, const ConstraintSet& constraints,
                                     double level) {
    try {
        return run_gec(data, basis, fit, entropy, q, constraints, level);
    } catch (const RankDeficiencyError& e) {
        const AugmentedDesign full = build_design(data, basis, fit, entropy, q, constraints);
        std::vector<long> keep;
        for (long j = 0; j < full.k(); ++j) {
            if (std::find(e.columns().begin(), e.columns().end(), j) == e.columns().end()) keep.push_back(j);
        }
        GecResult r;
        r.design = select_columns(full, keep);
        r.dual = solve_dual(r.design, entropy);
        r.weights = recover_weights(r.design, entropy, r.dual);
        r.estimate = gec_estimate(data, r.weights, r.design, entropy, level);
        return r;
    }
}

VMode vmode_of(VarianceModel v) { return v == VarianceModel::V1 ? VMode::Unit : VMode::SquaredResidual; }

EntropySpec roster_entropy(const std::string& prefix) {
    if (prefix == "EL") return EntropySpec::el();
    if (prefix == "ET") return EntropySpec::et();
    return EntropySpec::hd();
}

}  // namespace

TargetMode parse_target(const std::string& text) {
    const std::string t = upper(trim(text));
    if (t == "SUPERPOPULATION" || t == "SUPER") return TargetMode::Superpopulation;
    if (t == "FINITE" || t == "FINITE-POPULATION") return TargetMode::FinitePopulation;
    throw InvalidArgument("unknown target '" + text + "' (expected super or finite)");
}

std::string to_string(TargetMode t) { return t == TargetMode::Superpopulation ? "super" : "finite"; }

std::string SimScenario::name() const {
    return std::string(outcome == OutcomeModel::O1 ? "O1" : "O2") + (variance == VarianceModel::V1 ? "V1" : "V2");
}

SimScenario parse_scenario(const std::string& text) {
    const std::string t = upper(trim(text));
    if (t.size() != 4 || t[0] != 'O' || t[2] != 'V' || (t[1] != '1' && t[1] != '2') || (t[3] != '1' && t[3] != '2')) {
        throw InvalidArgument("unknown scenario '" + text + "' (expected O1V1, O1V2, O2V1 or O2V2)");
    }
    SimScenario s;
    s.outcome = t[1] == '1' ? OutcomeModel::O1 : OutcomeModel::O2;
    s.variance = t[3] == '1' ? VarianceModel::V1 : VarianceModel::V2;
    return s;
}

double superpopulation_mean(OutcomeModel model) {
    // E x1 = E x2 = 2, E x1 x2 = 4, E x2^2 = 5.
    if (model == OutcomeModel::O1) return 1.0 + 2.0 - 2.0;
    return 1.0 + 2.0 - 2.0 + 0.5 * 4.0 + 0.3 * (5.0 - 1.0);
}

Population generate_population(const SimScenario& scenario, Rng& rng) {
    if (scenario.N < 1) throw InvalidArgument("population size must be positive");
    Population pop;
    pop.x.resize(scenario.N, 3);
    pop.y.resize(scenario.N);
    for (long i = 0; i < scenario.N; ++i) {
        for (long j = 0; j < 3; ++j) pop.x(i, j) = rng.normal(2.0, 1.0);
    }
    for (long i = 0; i < scenario.N; ++i) {
        const double x1 = pop.x(i, 0);
        const double x2 = pop.x(i, 1);
        const double x3 = pop.x(i, 2);
        double sd = 1.0;
        if (scenario.variance == VarianceModel::V2) sd = std::sqrt(std::max({0.5, x2 * x2 / 4.0, x3 * x3 / 4.0}));
        double mu = 1.0 + x1 - x2;
        if (scenario.outcome == OutcomeModel::O2) mu += 0.5 * x1 * x2 + 0.3 * (x2 * x2 - 1.0);
        pop.y(i) = mu + sd * rng.normal();
    }
    return pop;
}

int stratum_of(double x2, double x3) { return (x2 > 2.0 ? 2 : 0) + (x3 > 2.0 ? 1 : 0); }

std::vector<bool> stratified_missingness(const Population& pop, const std::array<long, 4>& strata_sizes, Rng& rng) {
    if (pop.x.cols() < 3) throw DataError("stratification needs three covariates");
    std::array<std::vector<long>, 4> members;
    for (long i = 0; i < pop.x.rows(); ++i) members[stratum_of(pop.x(i, 1), pop.x(i, 2))].push_back(i);
    for (int h = 0; h < 4; ++h) {
        if (strata_sizes[h] < 0) throw InvalidArgument("stratum sample sizes must be nonnegative");
        if (strata_sizes[h] > static_cast<long>(members[h].size())) {
            throw DataError("stratum " + std::to_string(h + 1) + " has " + std::to_string(members[h].size()) +
                            " units, fewer than its quota " + std::to_string(strata_sizes[h]));
        }
    }
    std::vector<bool> responded(pop.x.rows(), false);
    for (int h = 0; h < 4; ++h) {
        for (long i : rng.sample_without_replacement(members[h], strata_sizes[h])) responded[i] = true;
    }
    return responded;
}

SimDataset draw_replication(const SimScenario& scenario, std::uint64_t rep) {
    Rng stream = Rng(scenario.seed).fork(rep).fork(0);
    for (int attempt = 1; attempt <= 1000; ++attempt) {
        Population pop = generate_population(scenario, stream);
        std::vector<bool> responded;
        try {
            responded = stratified_missingness(pop, scenario.strata_sizes, stream);
        } catch (const DataError&) {
            continue;
        }
        SimDataset ds;
        ds.finite_mean = pop.y.mean();
        ds.super_mean = superpopulation_mean(scenario.outcome);
        ds.population_draws = attempt;
        ds.data = ObservedData(std::move(pop.x), pop.y, responded);
        return ds;
    }
    throw DataError("could not draw a population meeting the stratum quotas");
}

std::vector<std::string> full_roster() {
    std::vector<std::string> r{"IPW", "AIPW1", "AIPW2"};
    for (const char* e : {"EL", "ET", "HD"}) {
        for (int k = 1; k <= 4; ++k) r.push_back(std::string(e) + std::to_string(k));
    }
    return r;
}

std::vector<std::string> parse_roster(const std::string& text) {
    const std::vector<std::string> all = full_roster();
    if (upper(trim(text)) == "ALL") return all;
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string tok = upper(trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (!tok.empty()) {
            if (std::find(all.begin(), all.end(), tok) == all.end()) {
                std::string names;
                for (const auto& a : all) names += (names.empty() ? "" : ", ") + a;
                throw InvalidArgument("unknown estimator '" + tok + "' (valid: all, " + names + ")");
            }
            if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw InvalidArgument("estimator roster is empty");
    return out;
}

std::vector<EstimatorOutput> run_roster(const ObservedData& data, const std::vector<long>& rp_columns,
                                        const Mat& basis, const std::vector<std::string>& roster, VarianceModel vmodel,
                                        double level) {
    std::vector<EstimatorOutput> out(roster.size());
    PropensityFit fit;
    try {
        fit = fit_logistic(data, rp_columns);
    } catch (const Error& e) {
        for (auto& o : out) o = failed(e.what());
        return out;
    }
    const long N = data.N();
    const VMode mode = vmode_of(vmodel);
    ConstraintSet two;
    ConstraintSet three;
    three.orthogonal = true;
    std::map<std::string, KappaSelection> kappas;
    std::map<std::string, std::string> kappa_errors;
    auto kappa_for = [&](const std::string& ent) -> const KappaSelection& {
        auto it = kappas.find(ent);
        if (it != kappas.end()) return it->second;
        auto err = kappa_errors.find(ent);
        if (err != kappa_errors.end()) throw InfeasibleCalibration(err->second);
        try {
            return kappas.emplace(ent, select_kappa_gec(data, basis, fit, roster_entropy(ent), two, mode)).first->second;
        } catch (const Error& e) {
            kappa_errors.emplace(ent, e.what());
            throw;
        }
    };

    for (std::size_t r = 0; r < roster.size(); ++r) {
        const std::string& name = roster[r];
        try {
            if (name == "IPW") {
                out[r] = from_baseline(ipw_estimate(data, fit));
            } else if (name == "AIPW1") {
                out[r] = from_baseline(aipw_estimate(data, fit, basis, QWeights::unit(N)));
            } else if (name == "AIPW2") {
                const KappaSelection sel = select_kappa(data, fit, basis, mode);
                out[r] = from_baseline(aipw_estimate(data, fit, basis, QWeights::power(fit.pi_hat, sel.kappa)));
                out[r].kappa = sel.kappa;
            } else {
                const std::string ent = name.substr(0, 2);
                const int k = name[2] - '0';
                const EntropySpec spec = roster_entropy(ent);
                QWeights q = QWeights::unit(N);
                std::optional<double> kappa;
                if (k == 2 || k == 4) {
                    kappa = kappa_for(ent).kappa;
                    q = QWeights::power(fit.pi_hat, *kappa);
                }
                out[r] = from_gec(run_gec_dropping_redundant(data, basis, fit, spec, q, k <= 2 ? two : three, level));
                out[r].kappa = kappa;
            }
        } catch (const Error& e) {
            out[r] = failed(e.what());
        }
    }
    return out;
}

const EstimatorSummary& SimSummary::row(const std::string& name) const {
    for (const auto& r : rows) if (r.name == name) return r;
    throw InvalidArgument("no estimator '" + name + "' in the summary");
}

std::vector<EstimatorSummary> summarise(const std::vector<std::string>& names,
                                        const std::vector<ReplicationRecord>& reps, long N) {
    std::vector<EstimatorSummary> rows;
    for (std::size_t e = 0; e < names.size(); ++e) {
        EstimatorSummary s;
        s.name = names[e];
        std::vector<double> err;
        std::vector<double> vn;
        long covered = 0;
        long with_ci = 0;
        double iters = 0.0;
        double ksum = 0.0;
        long kcount = 0;
        for (const auto& rec : reps) {
            const EstimatorOutput& o = rec.outputs.at(e);
            if (!o.ok) {
                ++s.failures;
                if (s.failure_messages.size() < 5) {
                    s.failure_messages.push_back("rep " + std::to_string(rec.rep) + ": " + o.error);
                }
                continue;
            }
            err.push_back(o.theta_hat - rec.target);
            s.max_residual = std::max(s.max_residual, o.residual);
            s.max_soft_excess = std::max(s.max_soft_excess, o.soft_excess);
            s.max_slackness = std::max(s.max_slackness, o.slackness);
            iters += o.iterations;
            if (o.kappa) {
                ksum += *o.kappa;
                ++kcount;
            }
            if (o.has_interval) {
                ++with_ci;
                vn.push_back(o.v_hat / static_cast<double>(N));
                if (o.ci_lo <= rec.target && rec.target <= o.ci_hi) ++covered;
            }
        }
        const long B = static_cast<long>(err.size());
        s.replications = B;
        if (kcount > 0) s.mean_kappa = ksum / static_cast<double>(kcount);
        if (B == 0) {
            s.bias = s.rmse = s.variance = s.mcse_bias = s.mcse_rmse = kNaN;
            s.var_rel_bias = s.mcse_var_rel_bias = s.coverage = s.mcse_coverage = kNaN;
            rows.push_back(s);
            continue;
        }
        const double Bd = static_cast<double>(B);
        s.mean_iterations = iters / Bd;
        double sum = 0.0;
        for (double v : err) sum += v;
        s.bias = sum / Bd;
        double mse = 0.0;
        double var = 0.0;
        for (double v : err) {
            mse += v * v;
            var += (v - s.bias) * (v - s.bias);
        }
        mse /= Bd;
        var /= Bd;
        s.variance = var;
        s.rmse = std::sqrt(mse);
        const double sd = B > 1 ? std::sqrt(var * Bd / (Bd - 1.0)) : 0.0;
        s.mcse_bias = sd / std::sqrt(Bd);
        double m4 = 0.0;
        for (double v : err) m4 += (v * v - mse) * (v * v - mse);
        const double se_mse = B > 1 ? std::sqrt(m4 / (Bd - 1.0) / Bd) : 0.0;
        s.mcse_rmse = s.rmse > 0.0 ? se_mse / (2.0 * s.rmse) : 0.0;
        if (with_ci == B && B > 1) {
            double a = 0.0;
            for (double v : vn) a += v;
            a /= Bd;
            double va = 0.0;
            for (double v : vn) va += (v - a) * (v - a);
            const double se_a = std::sqrt(va / (Bd - 1.0) / Bd);
            const double vmc = var * Bd / (Bd - 1.0);
            s.var_rel_bias = a / vmc - 1.0;
            s.mcse_var_rel_bias = (a / vmc) * std::sqrt((se_a / a) * (se_a / a) + 2.0 / (Bd - 1.0));
            s.coverage = static_cast<double>(covered) / Bd;
            s.mcse_coverage = std::sqrt(s.coverage * (1.0 - s.coverage) / Bd);
        } else {
            s.var_rel_bias = s.mcse_var_rel_bias = s.coverage = s.mcse_coverage = kNaN;
        }
        rows.push_back(s);
    }
    return rows;
}

std::vector<ReplicationRecord> parallel_replications(long B, int threads,
                                                     const std::function<ReplicationRecord(std::uint64_t)>& body) {
    if (B < 1) throw InvalidArgument("the number of replications must be positive");
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<long>(B, 1024))));
    std::vector<ReplicationRecord> out(static_cast<std::size_t>(B));
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&]() {
        for (;;) {
            const long r = next.fetch_add(1);
            if (r >= B) return;
            try {
                out[static_cast<std::size_t>(r)] = body(static_cast<std::uint64_t>(r));
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(B);
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return out;
}

namespace {

SimSummary finish(std::string study, TargetMode target, long B, std::uint64_t seed, long N,
                  const std::vector<std::string>& names, std::vector<ReplicationRecord> reps, bool keep) {
    SimSummary s;
    s.study = std::move(study);
    s.target = target;
    s.B = B;
    s.seed = seed;
    double rate = 0.0;
    for (const auto& r : reps) rate += static_cast<double>(r.n_responded) / static_cast<double>(N);
    s.mean_response_rate = rate / static_cast<double>(reps.size());
    s.rows = summarise(names, reps, N);
    if (keep) s.replications = std::move(reps);
    return s;
}

}  // namespace

SimSummary run_monte_carlo(const SimScenario& scenario, const std::vector<std::string>& roster,
                           const SimOptions& options) {
    if (roster.empty()) throw InvalidArgument("estimator roster is empty");
    const BasisSpec basis_spec = BasisSpec::linear({0, 1});
    auto body = [&](std::uint64_t rep) {
        const SimDataset ds = draw_replication(scenario, rep);
        ReplicationRecord rec;
        rec.rep = rep;
        rec.target = scenario.target == TargetMode::Superpopulation ? ds.super_mean : ds.finite_mean;
        rec.n_responded = ds.data.n();
        rec.outputs = run_roster(ds.data, {1, 2}, build_basis(ds.data, basis_spec), roster, scenario.variance,
                                 options.level);
        return rec;
    };
    return finish(scenario.name(), scenario.target, scenario.B, scenario.seed, scenario.N, roster,
                  parallel_replications(scenario.B, options.threads, body), options.keep_replications);
}

SimDataset draw_dr_replication(const DrStudy& study, std::uint64_t rep) {
    if (study.N < 10) throw InvalidArgument("double robustness study needs N >= 10");
    Rng rng = Rng(study.seed).fork(rep).fork(0);
    Mat x(study.N, 2);
    Vec y(study.N);
    std::vector<bool> responded(study.N);
    for (long i = 0; i < study.N; ++i) {
        const double x1 = rng.normal();
        const double x2 = rng.normal();
        x(i, 0) = x1;
        x(i, 1) = x2;
        double mu = 1.0 + x1 + x2;
        double eta = 0.3 + 0.6 * x1 - 0.4 * x2;
        if (study.design == DrDesign::CorrectOutcome) {
            eta += 0.4 * x1 * x2 + 0.3 * x2 * x2;
        } else {
            mu += 0.5 * x1 * x1 + 0.5 * x1 * x2;
        }
        y(i) = mu + rng.normal();
        responded[i] = rng.uniform() < expit(eta);
    }
    SimDataset ds;
    ds.finite_mean = y.mean();
    ds.super_mean = study.design == DrDesign::CorrectOutcome ? 1.0 : 1.5;
    ds.data = ObservedData(std::move(x), y, responded);
    return ds;
}

SimSummary run_dr_study(const DrStudy& study, const std::vector<std::string>& roster, const SimOptions& options) {
    if (roster.empty()) throw InvalidArgument("estimator roster is empty");
    const BasisSpec basis_spec = BasisSpec::linear({0, 1});
    auto body = [&](std::uint64_t rep) {
        const SimDataset ds = draw_dr_replication(study, rep);
        ReplicationRecord rec;
        rec.rep = rep;
        rec.target = ds.finite_mean;
        rec.n_responded = ds.data.n();
        rec.outputs = run_roster(ds.data, {0, 1}, build_basis(ds.data, basis_spec), roster, VarianceModel::V1,
                                 options.level);
        return rec;
    };
    const std::string name = study.design == DrDesign::CorrectOutcome ? "dr-correct-outcome" : "dr-correct-propensity";
    return finish(name + "-N" + std::to_string(study.N), TargetMode::FinitePopulation, study.B, study.seed, study.N,
                  roster, parallel_replications(study.B, options.threads, body), options.keep_replications);
}

std::vector<std::string> hd_roster(const HdSettings& settings) {
    std::vector<std::string> r{"IPW", "AIPW"};
    for (const auto& e : settings.entropies) r.push_back("GECHD-" + to_string(e));
    return r;
}

std::vector<EstimatorOutput> run_hd_roster(const ObservedData& data, const HdSettings& settings, Rng cv_rng,
                                           double level) {
    const std::vector<std::string> names = hd_roster(settings);
    std::vector<EstimatorOutput> out(names.size());
    const long N = data.N();
    const long p0 = data.p0();
    std::vector<long> all(p0);
    for (long j = 0; j < p0; ++j) all[j] = j;
    PropensityFit fit;
    try {
        double penalty = settings.rp_penalty;
        if (std::isnan(penalty)) {
            if (settings.cv) {
                penalty = cv_logistic_l1(rp_design(data.x(), all), data.delta(), cv_rng.next_u64()).penalty;
            } else {
                penalty = settings.rp_scale * std::sqrt(std::log(static_cast<double>(std::max<long>(p0, 2))) /
                                                        static_cast<double>(N));
            }
        }
        fit = fit_logistic_l1(data, penalty, all);
    } catch (const Error& e) {
        for (auto& o : out) o = failed(e.what());
        return out;
    }
    const Mat basis = build_basis(data, BasisSpec::linear(all));
    try {
        out[0] = from_baseline(ipw_estimate(data, fit));
    } catch (const Error& e) {
        out[0] = failed(e.what());
    }
    try {
        // Outcome coefficients by the lasso with the same rate as the GEC-HD regression.
        const double tau = default_taus(data.n(), std::max<long>(basis.cols() - 1, 1), settings.sparsity_hint,
                                        settings.c1, settings.c2).first;
        const RegressionFit beta = fit_lasso_weighted(basis, data, Vec::Ones(N), tau);
        BaselineEstimate b = ipw_estimate(data, fit);
        b.theta_hat -= delta_b(data, fit, basis).dot(beta.coef);
        out[1] = from_baseline(b);
    } catch (const Error& e) {
        out[1] = failed(e.what());
    }
    const auto taus = default_taus(data.n(), basis.cols() + fit.d(), settings.sparsity_hint, settings.c1, settings.c2);
    for (std::size_t k = 0; k < settings.entropies.size(); ++k) {
        EstimatorOutput& o = out[2 + k];
        try {
            SoftCalibConfig cfg;
            cfg.tau1 = taus.first;
            cfg.tau2 = taus.second;
            const HdResult r = run_gec_hd(data, basis, fit, settings.entropies[k], QWeights::unit(N), cfg, level);
            const SoftDualSolution& s = r.solution.dual;
            o.ok = true;
            o.theta_hat = r.estimate.theta_hat;
            o.v_hat = r.estimate.v_hat;
            o.ci_lo = r.estimate.ci_lo;
            o.ci_hi = r.estimate.ci_hi;
            o.has_interval = true;
            o.residual = s.exact_residual.cwiseAbs().maxCoeff();
            o.iterations = s.iterations;
            o.soft_excess = -cfg.tau2;
            for (long j = 0; j < s.soft_residual.size(); ++j) {
                const double a = std::abs(s.soft_residual(j));
                o.soft_excess = std::max(o.soft_excess, a - cfg.tau2);
                if (std::abs(s.lam4(j)) > 1e-8) o.slackness = std::max(o.slackness, std::abs(a - cfg.tau2));
            }
        } catch (const Error& e) {
            o = failed(e.what());
        }
    }
    return out;
}

SimDataset draw_hd_replication(const HdStudy& study, std::uint64_t rep) {
    if (study.p < 5) throw InvalidArgument("high-dimensional study needs p >= 5");
    Rng rng = Rng(study.seed).fork(rep).fork(0);
    Mat x(study.N, study.p);
    Vec y(study.N);
    std::vector<bool> responded(study.N);
    for (long i = 0; i < study.N; ++i) {
        for (long j = 0; j < study.p; ++j) x(i, j) = rng.normal();
        const double eta = 0.2 + 0.6 * x(i, 0) - 0.5 * x(i, 1) + 0.4 * x(i, 2);
        y(i) = 1.0 + x(i, 0) + 0.8 * x(i, 1) - 0.6 * x(i, 3) + 0.5 * x(i, 4) + rng.normal();
        responded[i] = rng.uniform() < expit(eta);
    }
    SimDataset ds;
    ds.finite_mean = y.mean();
    ds.super_mean = 1.0;
    ds.data = ObservedData(std::move(x), y, responded);
    return ds;
}

SimSummary run_hd_study(const HdStudy& study, const SimOptions& options) {
    const std::vector<std::string> names = hd_roster(study.settings);
    auto body = [&](std::uint64_t rep) {
        const SimDataset ds = draw_hd_replication(study, rep);
        ReplicationRecord rec;
        rec.rep = rep;
        rec.target = ds.finite_mean;
        rec.n_responded = ds.data.n();
        rec.outputs = run_hd_roster(ds.data, study.settings, Rng(study.seed).fork(rep).fork(1), options.level);
        return rec;
    };
    return finish("hd-N" + std::to_string(study.N) + "-p" + std::to_string(study.p), TargetMode::FinitePopulation,
                  study.B, study.seed, study.N, names, parallel_replications(study.B, options.threads, body),
                  options.keep_replications);
}

NhanesPopulation nhanes_like_population(const NhanesLikeStudy& study) {
    if (study.p < 21) throw InvalidArgument("the surrogate study needs p >= 21");
    if (!(study.response_rate > 0.0 && study.response_rate < 1.0)) {
        throw InvalidArgument("response rate must lie in (0, 1)");
    }
    NhanesPopulation out;
    Rng rng = Rng(study.seed).fork(0);
    const long N = study.N;
    const long p = study.p;
    const double rho = 0.3;
    Mat x(N, p);
    Vec y(N);
    for (long i = 0; i < N; ++i) {
        x(i, 0) = rng.normal();
        for (long j = 1; j < p; ++j) x(i, j) = rho * x(i, j - 1) + std::sqrt(1.0 - rho * rho) * rng.normal();
        y(i) = 121.0 + 6.0 * x(i, 0) + 4.0 * x(i, 1) - 3.0 * x(i, 3) + 2.5 * x(i, 5) + 2.0 * x(i, 6) -
               1.5 * x(i, 9) + 1.5 * x(i, 0) * x(i, 1) + 20.0 * rng.normal();
    }
    out.active = {0, 1, 2, 4, 7, 10, 14, 19};
    const double coef[8] = {0.5, -0.4, 0.35, 0.3, -0.3, 0.25, 0.2, -0.2};
    Vec lin = Vec::Zero(N);
    for (int k = 0; k < 8; ++k) lin += coef[k] * x.col(out.active[k]);
    auto rate = [&](double a) {
        double s = 0.0;
        for (long i = 0; i < N; ++i) s += expit(a + lin(i));
        return s / static_cast<double>(N);
    };
    double lo = -20.0;
    double hi = 20.0;
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        (rate(mid) < study.response_rate ? lo : hi) = mid;
    }
    out.intercept = 0.5 * (lo + hi);
    out.pi.resize(N);
    for (long i = 0; i < N; ++i) out.pi(i) = expit(out.intercept + lin(i));
    out.pop.x = std::move(x);
    out.pop.y = std::move(y);
    return out;
}

SimSummary nhanes_like_study(const NhanesLikeStudy& study, const SimOptions& options) {
    const NhanesPopulation np = nhanes_like_population(study);
    const std::vector<std::string> names = hd_roster(study.settings);
    const double target = np.pop.y.mean();
    auto body = [&](std::uint64_t rep) {
        Rng rng = Rng(study.seed).fork(rep + 1).fork(0);
        std::vector<bool> responded(study.N);
        for (long i = 0; i < study.N; ++i) responded[i] = rng.uniform() < np.pi(i);
        const ObservedData data(np.pop.x, np.pop.y, responded);
        ReplicationRecord rec;
        rec.rep = rep;
        rec.target = target;
        rec.n_responded = data.n();
        rec.outputs = run_hd_roster(data, study.settings, Rng(study.seed).fork(rep + 1).fork(1), options.level);
        return rec;
    };
    return finish("nhanes-like", TargetMode::FinitePopulation, study.B, study.seed, study.N, names,
                  parallel_replications(study.B, options.threads, body), options.keep_replications);
}

}  // namespace gec
