#pragma once

#include "gec/data.hpp"
#include "gec/entropy.hpp"
#include "gec/linalg.hpp"

#include <vector>

namespace gec {

struct RegressionFit {
    Vec coef;
    /// Per-unit regression weight (zero for non-responders).
    Vec weights_used;
    /// y_i - x_i' coef for responders, zero elsewhere (length N).
    Vec residuals;
    /// Subgradient optimality residual (penalised fits only).
    double kkt = 0.0;
    int iterations = 0;
};

/// Weighted least squares over responders with regression weight w_i.
RegressionFit fit_weighted(const Mat& X, const ObservedData& data, const Vec& w);

/// (sum delta b b'/v)^{-1} sum delta b y / v.
RegressionFit fit_gls(const Mat& basis, const ObservedData& data, const Vec& v_tilde);
/// Solves sum delta (y - b'beta) b q = 0.
RegressionFit fit_q_weighted(const Mat& basis, const ObservedData& data, const Vec& q);
/// Regression of y on z with weights delta q / g'(omega); omega has length N
/// and only its responder entries are used.
RegressionFit fit_gamma_hat(const Mat& z, const ObservedData& data, const EntropySpec& entropy,
                            const Vec& omega, const Vec& q);

/// Coordinate descent for 0.5 sum w (y - X beta)^2 + lambda sum pf_j |beta_j|.
/// Columns are scaled internally to unit weighted second moment and the
/// solution is mapped back, which leaves the problem unchanged. Returns the
/// solution; `kkt` receives max subgradient violation in the same units.
struct LassoControl {
    double tol = 1e-10;
    int max_sweeps = 100000;
    std::vector<double>* objective_trace = nullptr;
};
Vec coordinate_descent_lasso(const Mat& X, const Vec& y, const Vec& w, double lambda, const Vec& pf,
                             const Vec& start, const LassoControl& ctl, double& kkt, int& sweeps);

/// Minimises N^{-1} sum delta w (y - z'gamma)^2 + tau1 |gamma_{-1}|_1 (first
/// column unpenalised). Throws NonConvergence when the KKT residual of the
/// returned point exceeds 1e-6.
RegressionFit fit_lasso_weighted(const Mat& z, const ObservedData& data, const Vec& w, double tau1);
double lasso_objective(const Mat& z, const ObservedData& data, const Vec& w, double tau1, const Vec& coef);
/// max_j of the subgradient violation of the objective above.
double lasso_kkt(const Mat& z, const ObservedData& data, const Vec& w, double tau1, const Vec& coef);

}  // namespace gec
