#pragma once

#include "gec/data.hpp"
#include "gec/entropy.hpp"
#include "gec/linalg.hpp"
#include "gec/random.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gec {

enum class OutcomeModel { O1, O2 };
enum class VarianceModel { V1, V2 };

/// What the per-replication error is measured against.
enum class TargetMode {
    Superpopulation,   ///< E(Y) of the generating model
    FinitePopulation,  ///< N^{-1} sum y of the replication's population
};

TargetMode parse_target(const std::string& text);
std::string to_string(TargetMode t);

struct SimScenario {
    OutcomeModel outcome = OutcomeModel::O1;
    VarianceModel variance = VarianceModel::V1;
    long N = 1000;
    std::array<long, 4> strata_sizes{150, 100, 100, 50};
    long B = 1000;
    std::uint64_t seed = 42;
    TargetMode target = TargetMode::Superpopulation;

    std::string name() const;
};

/// "O1V1", "O1V2", "O2V1" or "O2V2" (case-insensitive).
SimScenario parse_scenario(const std::string& text);

struct Population {
    Mat x;
    Vec y;
};

/// E(Y) under the outcome model with x_j ~ N(2, 1).
double superpopulation_mean(OutcomeModel model);

Population generate_population(const SimScenario& scenario, Rng& rng);

/// Stratum 0..3 of a unit: (x2 <= 2, x3 <= 2), (x2 <= 2, x3 > 2), (x2 > 2, x3 <= 2), (x2 > 2, x3 > 2).
int stratum_of(double x2, double x3);

/// Draws exactly strata_sizes[h] respondents without replacement inside each
/// stratum. Throws DataError when a quota exceeds its stratum.
std::vector<bool> stratified_missingness(const Population& pop, const std::array<long, 4>& strata_sizes, Rng& rng);

struct SimDataset {
    ObservedData data;
    double finite_mean = 0.0;
    double super_mean = 0.0;
    int population_draws = 1;
};

/// Population and missingness of replication `rep`; resamples the population
/// until every stratum can meet its quota.
SimDataset draw_replication(const SimScenario& scenario, std::uint64_t rep);

/// One estimator's output on one replication.
struct EstimatorOutput {
    bool ok = false;
    double theta_hat = 0.0;
    /// Variance estimate and interval; NaN for estimators without one.
    double v_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool has_interval = false;
    /// Largest hard-constraint residual per scaled column (GEC only).
    double residual = 0.0;
    /// Soft-balance audit (GEC-HD only): max(|soft residual| - tau2), and the
    /// largest complementary slackness violation.
    double soft_excess = 0.0;
    double slackness = 0.0;
    std::optional<double> kappa;
    int iterations = 0;
    std::string error;
};

struct ReplicationRecord {
    std::uint64_t rep = 0;
    double target = 0.0;
    long n_responded = 0;
    std::vector<EstimatorOutput> outputs;
};

/// "IPW", "AIPW1", "AIPW2" and "<ENT><k>" for ENT in {EL, ET, HD}, k in 1..4.
std::vector<std::string> full_roster();
/// "all" or a comma separated list of roster names (case-insensitive).
std::vector<std::string> parse_roster(const std::string& text);

/// Runs low-dimensional roster estimators on one dataset. The response model
/// is fitted on `rp_columns`; `basis` is the outcome basis.
std::vector<EstimatorOutput> run_roster(const ObservedData& data, const std::vector<long>& rp_columns,
                                        const Mat& basis, const std::vector<std::string>& roster, VarianceModel vmodel,
                                        double level = 0.95);

struct EstimatorSummary {
    std::string name;
    long replications = 0;
    long failures = 0;
    double bias = 0.0;
    double rmse = 0.0;
    double variance = 0.0;
    double mcse_bias = 0.0;
    double mcse_rmse = 0.0;
    /// mean(v_hat / N) / variance - 1; NaN without a variance estimator.
    double var_rel_bias = 0.0;
    double mcse_var_rel_bias = 0.0;
    double coverage = 0.0;
    double mcse_coverage = 0.0;
    double max_residual = 0.0;
    double max_soft_excess = 0.0;
    double max_slackness = 0.0;
    double mean_iterations = 0.0;
    std::optional<double> mean_kappa;
    std::vector<std::string> failure_messages;
};

struct SimSummary {
    std::string study;
    TargetMode target = TargetMode::Superpopulation;
    long B = 0;
    std::uint64_t seed = 0;
    double mean_response_rate = 0.0;
    std::vector<EstimatorSummary> rows;
    std::vector<ReplicationRecord> replications;

    const EstimatorSummary& row(const std::string& name) const;
};

struct SimOptions {
    /// Worker threads; 0 uses the hardware concurrency.
    int threads = 1;
    bool keep_replications = false;
    double level = 0.95;
};

/// Summaries over the replications that succeeded for each estimator,
/// reduced in replication order.
std::vector<EstimatorSummary> summarise(const std::vector<std::string>& names,
                                        const std::vector<ReplicationRecord>& reps, long N);

/// Evaluates `body(rep)` for rep = 0..B-1 on a worker pool; the result vector
/// is ordered by replication.
std::vector<ReplicationRecord> parallel_replications(long B, int threads,
                                                     const std::function<ReplicationRecord(std::uint64_t)>& body);

SimSummary run_monte_carlo(const SimScenario& scenario, const std::vector<std::string>& roster,
                           const SimOptions& options = {});

/// Two-covariate designs for the double robustness check. Only one of the
/// two working models is correct in each.
enum class DrDesign { CorrectOutcome, CorrectPropensity };

struct DrStudy {
    DrDesign design = DrDesign::CorrectOutcome;
    long N = 2000;
    long B = 400;
    std::uint64_t seed = 7;
};

SimDataset draw_dr_replication(const DrStudy& study, std::uint64_t rep);
/// Target is the finite-population mean.
SimSummary run_dr_study(const DrStudy& study, const std::vector<std::string>& roster, const SimOptions& options = {});

/// Settings shared by the high-dimensional studies.
struct HdSettings {
    std::vector<EntropySpec> entropies{EntropySpec::el(), EntropySpec::et(), EntropySpec::hd()};
    double c1 = 0.5;
    double c2 = 0.5;
    std::optional<long> sparsity_hint;
    /// Penalty of the L1 response model. When NaN it is chosen by
    /// cross-validation if `cv` is set, else rp_scale * sqrt(log p / N).
    double rp_penalty = std::numeric_limits<double>::quiet_NaN();
    bool cv = true;
    double rp_scale = 0.5;
};

/// Runs IPW, AIPW and GEC-HD for each entropy on one dataset with an L1
/// response model on all covariates and a linear outcome basis. AIPW uses
/// lasso outcome coefficients.
std::vector<std::string> hd_roster(const HdSettings& settings);
std::vector<EstimatorOutput> run_hd_roster(const ObservedData& data, const HdSettings& settings, Rng cv_rng,
                                           double level = 0.95);

/// Sparse synthetic design with independent N(0, 1) covariates.
struct HdStudy {
    long N = 600;
    long p = 100;
    long B = 200;
    std::uint64_t seed = 11;
    HdSettings settings;
};

SimDataset draw_hd_replication(const HdStudy& study, std::uint64_t rep);
SimSummary run_hd_study(const HdStudy& study, const SimOptions& options = {});

/// Synthetic stand-in for the health survey study: a fixed correlated
/// Gaussian population, logistic missingness on eight active columns with
/// the intercept tuned to the requested response rate, and repeated
/// missingness draws.
struct NhanesLikeStudy {
    long N = 9254;
    long p = 21;
    double response_rate = 0.319;
    long B = 50;
    std::uint64_t seed = 2018;
    HdSettings settings;
};

struct NhanesPopulation {
    Population pop;
    Vec pi;  ///< true response probabilities
    double intercept = 0.0;
    std::vector<long> active;
};

NhanesPopulation nhanes_like_population(const NhanesLikeStudy& study);
SimSummary nhanes_like_study(const NhanesLikeStudy& study, const SimOptions& options = {});

}  // namespace gec
