#pragma once

#include "gec/aipw.hpp"
#include "gec/data.hpp"
#include "gec/entropy.hpp"
#include "gec/linalg.hpp"
#include "gec/propensity.hpp"
#include "gec/regression.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gec {

struct ConstraintSet {
    bool balance = true;
    bool debias = true;
    bool orthogonal = false;

    bool operator==(const ConstraintSet&) const = default;
};

/// Parses a comma separated subset of {balance, debias, orthogonal}.
/// Balance is always included.
ConstraintSet parse_constraints(const std::string& text);
std::string to_string(const ConstraintSet& c);

/// Calibration covariates z_i = (b_i, orthogonality block, debias scalar)
/// with the optional blocks present according to `constraints`.
struct AugmentedDesign {
    Mat z;
    ConstraintSet constraints;
    QWeights q;
    Vec delta;
    Vec pi_hat;
    long p = 0;  ///< basis columns
    long d = 0;  ///< orthogonality columns (0 when absent)
    std::vector<std::string> labels;

    long N() const { return z.rows(); }
    long k() const { return z.cols(); }
    /// Column index of the debias covariate, -1 when absent.
    long debias_col() const { return constraints.debias ? p + d : -1; }
};

AugmentedDesign build_design(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                             const EntropySpec& entropy, const QWeights& q, const ConstraintSet& constraints,
                             const std::vector<std::string>& basis_labels = {});

/// Restricts a design to a subset of its columns (same units, q and delta).
AugmentedDesign select_columns(const AugmentedDesign& design, const std::vector<long>& columns);

struct DualEval {
    double value = 0.0;
    Vec gradient;
    Mat hessian;
};

/// rho(lambda) = N^{-1} {sum delta q^{-1} F(o + q lambda'z) - lambda' sum z}
/// with its gradient and Hessian. `offset` (o_i = g(w0_i)) may be empty.
/// Throws LinkRangeError naming the first infeasible unit.
DualEval dual_objective(const AugmentedDesign& design, const EntropySpec& entropy, const Vec& lambda,
                        const Vec& offset = Vec());

struct DualOptions {
    double tol = 1e-8;
    int max_iter = 200;
    /// Keep iterating towards this residual when cheap; `tol` decides acceptance.
    double target = 1e-11;
};

struct DualSolution {
    Vec lambda;
    double objective = 0.0;
    double grad_norm = 0.0;         ///< max |residual| per column, unscaled
    double grad_norm_scaled = 0.0;  ///< max |residual| per unit-second-moment column
    int iterations = 0;
    int line_search_backtracks = 0;
    int gradient_steps = 0;
    bool short_circuit = false;
};

/// Damped Newton on the dual with feasibility-preserving backtracking.
/// Throws InfeasibleCalibration when no feasible start exists or the
/// iterates diverge, NonConvergence when the residual stalls above `tol`.
DualSolution solve_dual(const AugmentedDesign& design, const EntropySpec& entropy,
                        const std::optional<Vec>& init = std::nullopt, const Vec& offset = Vec(),
                        const DualOptions& options = {});

/// Default starting point used by solve_dual.
Vec initial_lambda(const AugmentedDesign& design, const EntropySpec& entropy, const Vec& offset = Vec());

struct CalibrationWeights {
    /// omega_i for responders, zero for non-responders (length N).
    Vec omega;
    /// Initial weights 1/pi (empty when unavailable).
    Vec initial;
    /// N^{-1}(sum delta omega z - sum z) per column.
    Vec residual;
    /// The same residual per unit-second-moment column.
    Vec residual_scaled;

    double max_residual() const { return residual.size() ? residual.cwiseAbs().maxCoeff() : 0.0; }
    double max_residual_scaled() const { return residual_scaled.size() ? residual_scaled.cwiseAbs().maxCoeff() : 0.0; }
};

CalibrationWeights recover_weights(const AugmentedDesign& design, const EntropySpec& entropy, const DualSolution& dual,
                                   const Vec& offset = Vec());

/// Calibration residual of an arbitrary weight vector.
Vec calibration_residual(const AugmentedDesign& design, const Vec& omega);
Vec column_scales(const Mat& z);

struct GecEstimate {
    double theta_hat = 0.0;
    double v_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double level = 0.95;
    Vec eta;
    RegressionFit gamma;
};

/// theta - z_{a/2} sqrt(v/N), theta + z_{a/2} sqrt(v/N).
std::pair<double, double> confidence_interval(double theta, double v_hat, long N, double level);

/// Point estimate, linearisation values eta_i = delta omega y + (1 - delta omega) z'gamma,
/// variance (N-1)^{-1} sum (eta - mean)^2 and the Wald interval.
GecEstimate gec_estimate(const ObservedData& data, const CalibrationWeights& weights, const AugmentedDesign& design,
                         const EntropySpec& entropy, double level = 0.95);
/// Same with a supplied regression coefficient (used by the soft calibration estimator).
GecEstimate estimate_from_gamma(const ObservedData& data, const Vec& omega, const Mat& z, const RegressionFit& gamma,
                                double level);

/// Chooses kappa in q = pi^(kappa - 1) by minimising sum delta omega_kappa^2 v,
/// re-solving the dual (and gamma for SquaredResidual) at each grid point.
KappaSelection select_kappa_gec(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                                const EntropySpec& entropy, const ConstraintSet& constraints, VMode mode,
                                const KappaSearch& search = {-1.0, 3.0, 0.1, 0.0});

/// Everything produced by one calibration run.
struct GecResult {
    AugmentedDesign design;
    DualSolution dual;
    CalibrationWeights weights;
    GecEstimate estimate;
};

GecResult run_gec(const ObservedData& data, const Mat& basis, const PropensityFit& fit, const EntropySpec& entropy,
                  const QWeights& q, const ConstraintSet& constraints, double level = 0.95,
                  const std::vector<std::string>& basis_labels = {});

}  // namespace gec
