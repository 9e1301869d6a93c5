#pragma once

#include "gec/calibration.hpp"
#include "gec/data.hpp"
#include "gec/entropy.hpp"
#include "gec/propensity.hpp"
#include "gec/regression.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace gec {

struct SoftCalibConfig {
    double tau1 = 0.0;  ///< lasso penalty for gamma_hd
    double tau2 = 0.0;  ///< soft balance tolerance
    int max_iter = 500;
    double tol = 1e-9;  ///< KKT tolerance
    int fista_iter = 300;
    /// FISTA hands over to the proximal Newton polish below this KKT residual.
    double fista_handover = 1e-4;
};

struct SoftDualSolution {
    double lam1 = 0.0;  ///< normalisation
    double lam2 = 0.0;  ///< debias
    double lam3 = 0.0;  ///< projection z'gamma_hd
    Vec lam4;           ///< soft balance on u - u_bar
    double objective = 0.0;
    double kkt_residual = 0.0;
    /// N^{-1} sum delta omega (u - u_bar) per column.
    Vec soft_residual;
    /// Residuals of the three exact constraints (normalisation, debias, projection), N^{-1} scale.
    Vec exact_residual;
    int iterations = 0;
    int fista_iterations = 0;
    std::vector<double> objective_trace;
    /// Soft residual at the initial weights 1/pi.
    double initial_soft_residual = 0.0;
};

/// Regression weight q_i / g'(1/pi_i) of the penalised outcome fit.
Vec hd_regression_weights(const EntropySpec& entropy, const Vec& pi_hat, const Vec& q);

/// Components of the soft calibration problem: z, u = first p + d columns
/// of z centred at the full-population mean, and the projection z'gamma.
struct SoftDesign {
    AugmentedDesign design;  ///< z with orthogonality and debias blocks
    Mat u_tilde;
    Vec z_gamma;
};

SoftDesign build_soft_design(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                             const EntropySpec& entropy, const QWeights& q, const RegressionFit& gamma_hd);

/// Objective of the L1 dual at (lam1, lam2, lam3, lam4).
double soft_dual_objective(const SoftDesign& sd, const EntropySpec& entropy, double tau2, const Vec& lam);

struct SoftResult {
    SoftDualSolution dual;
    CalibrationWeights weights;
};

SoftResult soft_solve(const SoftDesign& sd, const EntropySpec& entropy, const SoftCalibConfig& config);
SoftResult soft_solve(const ObservedData& data, const Mat& basis, const PropensityFit& fit_l1,
                      const EntropySpec& entropy, const QWeights& q, const RegressionFit& gamma_hd,
                      const SoftCalibConfig& config);

/// theta = N^{-1} sum delta omega y with the linearisation built from z'gamma_hd.
GecEstimate gec_hd_estimate(const ObservedData& data, const CalibrationWeights& weights, const Mat& z,
                            const RegressionFit& gamma_hd, double level = 0.95);

/// tau1 = c1 sqrt(log p / n), tau2 = c2 sqrt(s log p / n), s defaulting to ceil(sqrt p).
std::pair<double, double> default_taus(long n, long p, std::optional<long> s_guess = std::nullopt, double c1 = 0.5,
                                       double c2 = 0.5);

struct HdResult {
    SoftDesign soft;
    RegressionFit gamma;
    SoftResult solution;
    GecEstimate estimate;
    double tau1 = 0.0;
    double tau2 = 0.0;
};

/// Lasso fit of gamma_hd on z followed by soft calibration and the estimate.
HdResult run_gec_hd(const ObservedData& data, const Mat& basis, const PropensityFit& fit_l1,
                    const EntropySpec& entropy, const QWeights& q, const SoftCalibConfig& config,
                    double level = 0.95);

}  // namespace gec
