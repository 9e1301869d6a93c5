#pragma once

#include "gec/data.hpp"
#include "gec/propensity.hpp"
#include "gec/regression.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gec {

struct BaselineEstimate {
    double theta_hat = 0.0;
    std::string method;
    std::optional<double> kappa;
    /// N^{-1} sum delta b / pi - N^{-1} sum b.
    Vec delta_b;
    /// beta_q (AIPW only).
    Vec beta;
};

/// N^{-1} sum delta y / pi.
BaselineEstimate ipw_estimate(const ObservedData& data, const PropensityFit& fit);

/// N^{-1} sum delta y / pi + (N^{-1} sum b - N^{-1} sum delta b / pi)' beta_q.
/// Basis columns that vanish on every unit are dropped before fitting.
BaselineEstimate aipw_estimate(const ObservedData& data, const PropensityFit& fit, const Mat& basis,
                               const QWeights& q);

Vec delta_b(const ObservedData& data, const PropensityFit& fit, const Mat& basis);

/// L(kappa) = N^{-1} sum delta {1/pi - delta_b' M_q(kappa)^{-1} q_i b_i}^2 v_i with
/// M_q(kappa) = N^{-1} sum delta q b b' and q = pi^(kappa - 1).
double empirical_loss(const ObservedData& data, const PropensityFit& fit, const Mat& basis, double kappa,
                      const Vec& v_tilde);

enum class VMode { Unit, SquaredResidual };

struct KappaSearch {
    double lo = -1.0;
    double hi = 3.0;
    double step = 0.1;
    double tol = 1e-4;
};

struct KappaSelection {
    double kappa = 1.0;
    double loss = 0.0;
    std::vector<double> grid;
    std::vector<double> grid_loss;  ///< NaN where the loss could not be evaluated.
    std::vector<std::string> warnings;
};

/// Grid minimisation followed by golden-section refinement inside the
/// neighbouring grid cells. Ties go to the point nearest kappa = 1.
KappaSelection select_kappa(const ObservedData& data, const PropensityFit& fit, const Mat& basis, VMode mode,
                            const KappaSearch& search = {});

/// Squared residuals of the OLS fit of y on (b, 1/pi), zero for non-responders.
Vec squared_residual_vtilde(const ObservedData& data, const PropensityFit& fit, const Mat& basis);

/// Generic one-dimensional minimiser used by both kappa selectors.
KappaSelection minimise_on_grid(const std::function<double(double)>& loss, const KappaSearch& search);

}  // namespace gec
