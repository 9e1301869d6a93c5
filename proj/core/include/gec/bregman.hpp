#pragma once

#include "gec/calibration.hpp"
#include "gec/entropy.hpp"
#include "gec/linalg.hpp"

#include <vector>

namespace gec {

/// sum_i delta_i q_i^{-1} D_G(a_i || b_i).
double weighted_divergence(const EntropySpec& entropy, const Vec& q, const Vec& delta, const Vec& omega_a,
                           const Vec& omega_b);

/// |D(w || w0) - D(w || w_hat) - D(w_hat || w0)| for the weighted divergence,
/// without any feasibility check.
double pythagorean_residual(const EntropySpec& entropy, const Vec& q, const Vec& delta, const Vec& omega_feasible,
                            const Vec& omega_hat, const Vec& omega0);

/// As above after verifying that omega_feasible meets the design's
/// constraints to `feasibility_tol` per scaled column (InvalidArgument otherwise).
double pythagorean_check(const EntropySpec& entropy, const AugmentedDesign& design, const Vec& omega_feasible,
                         const Vec& omega_hat, const Vec& omega0, double feasibility_tol = 1e-6);

/// g(w0_i) on responders, zero elsewhere: the dual offset that turns the
/// calibration problem into a Bregman projection from w0.
Vec projection_offset(const EntropySpec& entropy, const Vec& delta, const Vec& omega0);

/// Projection of w0 onto the constraint set of `design`.
CalibrationWeights bregman_projection(const EntropySpec& entropy, const AugmentedDesign& design, const Vec& omega0,
                                      DualSolution* dual = nullptr);

struct UnitContribution {
    long index = 0;
    double contribution = 0.0;
};

struct BregmanReport {
    double total = 0.0;     ///< D(w_hat || w0), full constraint set
    double baseline = 0.0;  ///< D(w1 || w0), reduced constraint set
    double extras = 0.0;    ///< D(w_hat || w1)
    double ratio = 0.0;     ///< baseline / total
    double additivity_residual = 0.0;
    std::vector<UnitContribution> per_unit;  ///< delta q^{-1} D(w_hat_i || w0_i), descending
    Vec omega_full;
    Vec omega_sub;
};

/// Projects w0 onto the constraint sets of both designs. Every column of
/// `design_sub` must be a column of `design_full`, checked exactly.
BregmanReport nested_decomposition(const EntropySpec& entropy, const AugmentedDesign& design_full,
                                   const AugmentedDesign& design_sub, const Vec& omega0);

}  // namespace gec
