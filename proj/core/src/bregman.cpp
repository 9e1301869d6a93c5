#include "gec/bregman.hpp"

#include "gec/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gec {

double weighted_divergence(const EntropySpec& entropy, const Vec& q, const Vec& delta, const Vec& omega_a,
                           const Vec& omega_b) {
    double s = 0.0;
    for (long i = 0; i < delta.size(); ++i) {
        if (delta(i) == 0.0) continue;
        s += bregman(entropy, omega_a(i), omega_b(i)) / q(i);
    }
    return s;
}

double pythagorean_residual(const EntropySpec& entropy, const Vec& q, const Vec& delta, const Vec& omega_feasible,
                            const Vec& omega_hat, const Vec& omega0) {
    const double lhs = weighted_divergence(entropy, q, delta, omega_feasible, omega0);
    const double rhs = weighted_divergence(entropy, q, delta, omega_feasible, omega_hat) +
                       weighted_divergence(entropy, q, delta, omega_hat, omega0);
    return std::abs(lhs - rhs);
}

double pythagorean_check(const EntropySpec& entropy, const AugmentedDesign& design, const Vec& omega_feasible,
                         const Vec& omega_hat, const Vec& omega0, double feasibility_tol) {
    const Vec r = calibration_residual(design, omega_feasible);
    const Vec s = column_scales(design.z);
    for (long j = 0; j < r.size(); ++j) {
        const double v = s(j) > 0.0 ? r(j) / s(j) : r(j);
        if (std::abs(v) > feasibility_tol) {
            throw InvalidArgument("weights violate constraint '" + design.labels[j] + "' by " + std::to_string(v));
        }
    }
    return pythagorean_residual(entropy, design.q.values, design.delta, omega_feasible, omega_hat, omega0);
}

Vec projection_offset(const EntropySpec& entropy, const Vec& delta, const Vec& omega0) {
    Vec o = Vec::Zero(delta.size());
    for (long i = 0; i < delta.size(); ++i) if (delta(i) != 0.0) o(i) = g_deriv(entropy, omega0(i));
    return o;
}

CalibrationWeights bregman_projection(const EntropySpec& entropy, const AugmentedDesign& design, const Vec& omega0,
                                      DualSolution* dual) {
    const Vec off = projection_offset(entropy, design.delta, omega0);
    const DualSolution sol = solve_dual(design, entropy, std::nullopt, off);
    if (dual) *dual = sol;
    return recover_weights(design, entropy, sol, off);
}

BregmanReport nested_decomposition(const EntropySpec& entropy, const AugmentedDesign& design_full,
                                   const AugmentedDesign& design_sub, const Vec& omega0) {
    if (design_full.N() != design_sub.N() || design_full.delta != design_sub.delta ||
        design_full.q.values != design_sub.q.values) {
        throw InvalidArgument("nested designs must share units, response indicators and q");
    }
    for (long j = 0; j < design_sub.k(); ++j) {
        bool found = false;
        for (long c = 0; c < design_full.k() && !found; ++c) found = design_full.z.col(c) == design_sub.z.col(j);
        if (!found) {
            throw InvalidArgument("constraint '" + (j < static_cast<long>(design_sub.labels.size()) ? design_sub.labels[j] : std::to_string(j)) +
                                  "' of the reduced design is not a constraint of the full design");
        }
    }
    BregmanReport rep;
    rep.omega_full = bregman_projection(entropy, design_full, omega0).omega;
    rep.omega_sub = bregman_projection(entropy, design_sub, omega0).omega;
    const Vec& q = design_full.q.values;
    const Vec& delta = design_full.delta;
    rep.total = weighted_divergence(entropy, q, delta, rep.omega_full, omega0);
    rep.baseline = weighted_divergence(entropy, q, delta, rep.omega_sub, omega0);
    rep.extras = weighted_divergence(entropy, q, delta, rep.omega_full, rep.omega_sub);
    rep.ratio = rep.total > 0.0 ? rep.baseline / rep.total : 0.0;
    rep.additivity_residual = std::abs(rep.total - rep.baseline - rep.extras);
    if (rep.additivity_residual > 1e-8 * std::max(1.0, rep.total)) {
        throw NonConvergence("nested projections are not additive", rep.additivity_residual, 0);
    }
    for (long i = 0; i < delta.size(); ++i) {
        if (delta(i) == 0.0) continue;
        rep.per_unit.push_back({i, bregman(entropy, rep.omega_full(i), omega0(i)) / q(i)});
    }
    std::stable_sort(rep.per_unit.begin(), rep.per_unit.end(),
                     [](const UnitContribution& a, const UnitContribution& b) { return a.contribution > b.contribution; });
    return rep;
}

}  // namespace gec
