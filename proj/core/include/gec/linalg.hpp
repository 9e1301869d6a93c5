#pragma once

#include <Eigen/Dense>

#include <vector>

namespace gec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Relative tolerance for column-pivoted QR rank detection.
inline constexpr double kRankTol = 1e-10;

/// Minimises sum_i w_i (y_i - x_i' b)^2 over rows with w_i > 0 by pivoted QR
/// on the square-root weighted system. Throws RankDeficiencyError naming the
/// dependent columns.
Vec weighted_least_squares(const Mat& X, const Vec& y, const Vec& w, const char* what = "regression design");

/// Columns judged linearly dependent by pivoted QR (empty when full rank).
std::vector<long> dependent_columns(const Mat& X, double tol = kRankTol);

/// Lawson-Hanson non-negative least squares: argmin |A u - b| over u >= 0.
Vec nonnegative_least_squares(const Mat& A, const Vec& b, int max_iter = 0);

/// Standard normal quantile (Wichura AS241, about 1e-16 relative accuracy).
double normal_quantile(double p);
double normal_cdf(double x);

/// Two-pass sample variance with divisor n - 1. Summation is sequential so
/// the result is reproducible from the stored values.
double sample_variance(const Vec& x);
double mean(const Vec& x);

}  // namespace gec
