#pragma once

#include "gec/data.hpp"
#include "gec/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gec {

/// Working logistic response model pi(x; phi) = expit(x_RP' phi).
struct PropensityFit {
    Vec phi_hat;
    Vec pi_hat;
    /// Covariate columns (0-based) entering x_RP after the intercept.
    std::vector<long> rp_columns;
    /// N x d design of the model, first column the intercept.
    Mat x_rp;
    bool regularized = false;
    double penalty = 0.0;
    bool separation = false;
    std::vector<std::string> warnings;
    int iterations = 0;
    double kkt = 0.0;

    long d() const { return x_rp.cols(); }

    /// Wraps known probabilities (no parameter, so no orthogonality block).
    static PropensityFit from_probabilities(const Vec& pi);
};

double expit(double eta);
Vec logistic_probabilities(const Mat& x_rp, const Vec& phi);
/// Design [1 | x_{rp_columns}].
Mat rp_design(const Mat& x, const std::vector<long>& rp_columns);

/// Maximum likelihood by Newton-Raphson with step halving. Separation
/// (|linear predictor| > 30) is reported through `separation` and
/// `warnings` rather than thrown.
PropensityFit fit_logistic(const ObservedData& data, const std::vector<long>& rp_columns);
PropensityFit fit_logistic(const Mat& x_rp, const Vec& delta);

/// d pi(x_i; phi) / d phi at phi_hat.
Vec pi_gradient(const PropensityFit& fit, long i);
/// Rows are pi_gradient(fit, i).
Mat pi_gradient_matrix(const PropensityFit& fit);

/// Minimises -N^{-1} loglik(phi) + penalty |phi_{-1}|_1 by proximal Newton
/// with a coordinate descent inner solver. Uses all covariate columns when
/// `rp_columns` is empty.
PropensityFit fit_logistic_l1(const ObservedData& data, double penalty, const std::vector<long>& rp_columns = {});
PropensityFit fit_logistic_l1(const Mat& x_rp, const Vec& delta, double penalty, const Vec* start = nullptr);

/// Subgradient optimality residual of the penalised objective.
double logistic_l1_kkt(const Mat& x_rp, const Vec& delta, double penalty, const Vec& phi);
double logistic_l1_objective(const Mat& x_rp, const Vec& delta, double penalty, const Vec& phi);

struct CvResult {
    double penalty = 0.0;
    std::vector<double> grid;
    std::vector<double> deviance;
};

/// Chooses the penalty by k-fold cross-validated deviance over a 20-point
/// log grid from the smallest all-zero penalty down by a factor 1000.
CvResult cv_logistic_l1(const Mat& x_rp, const Vec& delta, std::uint64_t seed, int folds = 5);

}  // namespace gec
