#include "gec/highdim.hpp"

#include "gec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gec {

namespace {

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

// Soft calibration dual in coordinates where each column of
// [1, debias, z'gamma, u_tilde] has unit second moment.
class SoftProblem {
public:
    SoftProblem(const SoftDesign& sd, const EntropySpec& entropy, double tau2) : entropy_(entropy) {
        const AugmentedDesign& des = sd.design;
        N_ = static_cast<double>(des.N());
        const long m = sd.u_tilde.cols();
        K_ = 3 + m;
        Mat full(des.N(), K_);
        full.col(0).setOnes();
        full.col(1) = des.z.col(des.debias_col());
        full.col(2) = sd.z_gamma;
        full.rightCols(m) = sd.u_tilde;
        scale_ = column_scales(full);
        target_ = Vec::Zero(K_);
        pen_ = Vec::Zero(K_);
        for (long j = 0; j < K_; ++j) {
            if (scale_(j) <= 0.0) scale_(j) = 0.0;
            if (j < 3 && scale_(j) > 0.0) target_(j) = full.col(j).sum() / N_ / scale_(j);
            if (j >= 3) pen_(j) = scale_(j) > 0.0 ? tau2 / scale_(j) : 0.0;
        }
        for (long i = 0; i < des.N(); ++i) if (des.delta(i) != 0.0) units_.push_back(i);
        const long n = static_cast<long>(units_.size());
        zr_.resize(n, K_);
        q_.resize(n);
        for (long r = 0; r < n; ++r) {
            q_(r) = des.q.values(units_[r]);
            for (long j = 0; j < K_; ++j) zr_(r, j) = scale_(j) > 0.0 ? full(units_[r], j) / scale_(j) : 0.0;
        }
        tau2_ = tau2;
    }

    long K() const { return K_; }
    const Vec& scale() const { return scale_; }
    const Vec& pen() const { return pen_; }

    bool smooth(const Vec& x, double& value, Vec* grad, Mat* hess) const {
        const long n = zr_.rows();
        const Vec lin = zr_ * x;
        Vec f(n);
        Vec fp(n);
        double s = 0.0;
        for (long r = 0; r < n; ++r) {
            double F = 0.0;
            double d = 0.0;
            if (!dual_terms(entropy_, q_(r) * lin(r), F, f(r), d)) return false;
            s += F / q_(r);
            fp(r) = d * q_(r);
        }
        value = s / N_ - x.dot(target_);
        if (grad) *grad = zr_.transpose() * f / N_ - target_;
        if (hess) *hess = zr_.transpose() * fp.asDiagonal() * zr_ / N_;
        return true;
    }

    double penalty(const Vec& x) const {
        double s = 0.0;
        for (long j = 3; j < K_; ++j) if (x(j) != 0.0) s += pen_(j) * std::abs(x(j));
        return s;
    }

    // KKT residual in the original (unscaled) units.
    double kkt(const Vec& x, const Vec& g) const {
        double v = 0.0;
        for (long j = 0; j < K_; ++j) {
            if (scale_(j) <= 0.0) continue;
            const double go = g(j) * scale_(j);
            if (j < 3) {
                v = std::max(v, std::abs(go));
            } else if (x(j) != 0.0) {
                v = std::max(v, std::abs(go + tau2_ * (x(j) > 0.0 ? 1.0 : -1.0)));
            } else {
                v = std::max(v, std::abs(go) - tau2_);
            }
        }
        return v;
    }

    Vec prox(const Vec& v, double step) const {
        Vec out = v;
        for (long j = 3; j < K_; ++j) out(j) = scale_(j) > 0.0 ? soft_threshold(v(j), step * pen_(j)) : 0.0;
        return out;
    }

    Vec weights(const Vec& x) const {
        Vec w(zr_.rows());
        const Vec lin = zr_ * x;
        for (long r = 0; r < w.size(); ++r) w(r) = g_inverse(entropy_, q_(r) * lin(r));
        return w;
    }

    const std::vector<long>& units() const { return units_; }

private:
    const EntropySpec& entropy_;
    double N_ = 0.0;
    long K_ = 0;
    double tau2_ = 0.0;
    Mat zr_;
    Vec q_;
    Vec scale_;
    Vec target_;
    Vec pen_;
    std::vector<long> units_;
};

// min g'd + 0.5 d'(H + mu I)d + sum pen_j |x_j + d_j| by coordinate descent.
Vec prox_newton_direction(const Vec& x, const Vec& g, const Mat& H, const Vec& pen, double mu) {
    const long K = x.size();
    Vec d = Vec::Zero(K);
    Vec Hd = Vec::Zero(K);
    for (int sweep = 0; sweep < 2000; ++sweep) {
        double change = 0.0;
        for (long j = 0; j < K; ++j) {
            const double a = H(j, j) + mu;
            if (!(a > 0.0)) continue;
            const double c = g(j) + Hd(j) - H(j, j) * d(j);
            const double vj = soft_threshold(a * x(j) - c, pen(j)) / a;
            const double nd = vj - x(j);
            const double delta = nd - d(j);
            if (delta != 0.0) {
                Hd.noalias() += delta * H.col(j);
                d(j) = nd;
                change = std::max(change, std::abs(delta) * std::sqrt(a));
            }
        }
        if (change < 1e-14) break;
    }
    return d;
}

}  // namespace

Vec hd_regression_weights(const EntropySpec& entropy, const Vec& pi_hat, const Vec& q) {
    Vec w(pi_hat.size());
    for (long i = 0; i < w.size(); ++i) w(i) = q(i) / g_second(entropy, 1.0 / pi_hat(i));
    return w;
}

SoftDesign build_soft_design(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                             const EntropySpec& entropy, const QWeights& q, const RegressionFit& gamma_hd) {
    SoftDesign sd;
    ConstraintSet c;
    c.debias = true;
    c.orthogonal = fit.d() > 0;
    sd.design = build_design(data, basis, fit, entropy, q, c);
    const long m = sd.design.p + sd.design.d;
    const Mat u = sd.design.z.leftCols(m);
    const Vec ubar = u.colwise().mean().transpose();
    sd.u_tilde = u.rowwise() - ubar.transpose();
    if (gamma_hd.coef.size() != sd.design.k()) throw InvalidArgument("gamma_hd does not match the augmented design");
    sd.z_gamma = sd.design.z * gamma_hd.coef;
    return sd;
}

double soft_dual_objective(const SoftDesign& sd, const EntropySpec& entropy, double tau2, const Vec& lam) {
    const SoftProblem prob(sd, entropy, tau2);
    Vec x(prob.K());
    for (long j = 0; j < prob.K(); ++j) x(j) = lam(j) * prob.scale()(j);
    double v = 0.0;
    if (!prob.smooth(x, v, nullptr, nullptr)) throw LinkRangeError(to_string(entropy), std::numeric_limits<double>::quiet_NaN());
    return v + prob.penalty(x);
}

SoftResult soft_solve(const SoftDesign& sd, const EntropySpec& entropy, const SoftCalibConfig& cfg) {
    if (!(cfg.tau2 >= 0.0)) throw InvalidArgument("tau2 must be nonnegative");
    const long n = static_cast<long>(sd.design.delta.sum());
    if (cfg.tau2 == 0.0 && sd.u_tilde.cols() + 3 > n) {
        throw InvalidArgument("tau2 must be positive when the balance dimension exceeds the number of respondents");
    }
    const SoftProblem prob(sd, entropy, cfg.tau2);
    const long K = prob.K();
    SoftResult res;
    SoftDualSolution& sol = res.dual;

    // Start from omega = 1/pi: lam2 = 1 reproduces g(1/pi) exactly.
    Vec x = Vec::Zero(K);
    x(1) = prob.scale()(1);
    double h = 0.0;
    Vec g;
    if (!prob.smooth(x, h, &g, nullptr)) throw InfeasibleCalibration("initial weights 1/pi are outside the entropy domain");
    for (long j = 3; j < K; ++j) sol.initial_soft_residual = std::max(sol.initial_soft_residual, std::abs(g(j) * prob.scale()(j)));
    double phi = h + prob.penalty(x);
    sol.objective_trace.push_back(phi);
    double kkt = prob.kkt(x, g);

    // Monotone FISTA with adaptive step and restart.
    {
        Mat H;
        double tmp = 0.0;
        prob.smooth(x, tmp, nullptr, &H);
        double L = std::max(H.diagonal().maxCoeff(), 1e-8);
        Vec y = x;
        Vec xprev = x;
        double t = 1.0;
        int it = 0;
        for (; it < cfg.fista_iter && kkt > cfg.fista_handover; ++it) {
            double hy = 0.0;
            Vec gy;
            if (!prob.smooth(y, hy, &gy, nullptr)) {
                y = x;
                t = 1.0;
                prob.smooth(y, hy, &gy, nullptr);
            }
            Vec zc;
            double hz = 0.0;
            bool ok = false;
            for (int bt = 0; bt < 60; ++bt) {
                zc = prob.prox(y - gy / L, 1.0 / L);
                const Vec dz = zc - y;
                if (prob.smooth(zc, hz, nullptr, nullptr) && hz <= hy + gy.dot(dz) + 0.5 * L * dz.squaredNorm() + 1e-15 * std::abs(hy)) {
                    ok = true;
                    break;
                }
                L *= 2.0;
            }
            if (!ok) break;
            const double phiz = hz + prob.penalty(zc);
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            xprev = x;
            if (phiz <= phi) {
                x = zc;
                phi = phiz;
                y = x + ((t - 1.0) / tn) * (x - xprev);
                t = tn;
            } else {
                y = x;
                t = 1.0;
            }
            sol.objective_trace.push_back(phi);
            prob.smooth(x, h, &g, nullptr);
            kkt = prob.kkt(x, g);
            L *= 0.9;
            if (x.cwiseAbs().maxCoeff() > 1e12) throw InfeasibleCalibration("soft calibration dual diverges");
        }
        sol.fista_iterations = it;
    }

    // Proximal Newton polish.
    int it = 0;
    for (; it < cfg.max_iter && kkt > cfg.tol; ++it) {
        Mat H;
        if (!prob.smooth(x, h, &g, &H)) throw InfeasibleCalibration("soft calibration iterate left the link range");
        const double mu = 1e-10 * std::max(H.diagonal().maxCoeff(), 1e-300);
        const Vec d = prox_newton_direction(x, g, H, prob.pen(), mu);
        const double pen_now = prob.penalty(x);
        const double decrease = g.dot(d) + prob.penalty(x + d) - pen_now;
        if (!(decrease < 0.0)) break;
        double step = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Vec cand = x + step * d;
            double hc = 0.0;
            Vec gc;
            if (prob.smooth(cand, hc, &gc, nullptr)) {
                const double pc = hc + prob.penalty(cand);
                const bool armijo = pc <= phi + 1e-4 * step * decrease;
                const bool roundoff = pc - phi <= 1e-14 * std::max(1.0, std::abs(phi)) && prob.kkt(cand, gc) < kkt;
                if (armijo || roundoff) {
                    x = cand;
                    phi = std::min(phi, pc);
                    h = hc;
                    g = gc;
                    kkt = prob.kkt(x, g);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) break;
        sol.objective_trace.push_back(phi);
        if (x.cwiseAbs().maxCoeff() > 1e12) throw InfeasibleCalibration("soft calibration dual diverges");
    }
    sol.iterations = it;
    sol.kkt_residual = kkt;
    sol.objective = phi;
    if (kkt > std::max(cfg.tol, 1e-7)) {
        throw NonConvergence("soft calibration did not converge (KKT residual " + std::to_string(kkt) + ")", kkt, it);
    }

    const Vec& s = prob.scale();
    sol.lam1 = s(0) > 0.0 ? x(0) / s(0) : 0.0;
    sol.lam2 = s(1) > 0.0 ? x(1) / s(1) : 0.0;
    sol.lam3 = s(2) > 0.0 ? x(2) / s(2) : 0.0;
    sol.lam4 = Vec::Zero(K - 3);
    for (long j = 3; j < K; ++j) sol.lam4(j - 3) = s(j) > 0.0 ? x(j) / s(j) : 0.0;

    const AugmentedDesign& des = sd.design;
    const long N = des.N();
    const Vec wr = prob.weights(x);
    res.weights.omega = Vec::Zero(N);
    for (std::size_t r = 0; r < prob.units().size(); ++r) res.weights.omega(prob.units()[r]) = wr(static_cast<long>(r));
    res.weights.initial = des.pi_hat.cwiseInverse();

    const double Nd = static_cast<double>(N);
    Vec a(N);
    for (long i = 0; i < N; ++i) a(i) = des.delta(i) * res.weights.omega(i);
    sol.exact_residual.resize(3);
    sol.exact_residual(0) = a.sum() / Nd - 1.0;
    const Vec deb = des.z.col(des.debias_col());
    sol.exact_residual(1) = (a - Vec::Ones(N)).dot(deb) / Nd;
    sol.exact_residual(2) = (a - Vec::Ones(N)).dot(sd.z_gamma) / Nd;
    sol.soft_residual = sd.u_tilde.transpose() * a / Nd;
    res.weights.residual = sol.exact_residual;
    res.weights.residual_scaled = sol.exact_residual;
    for (long j = 0; j < 3; ++j) if (s(j) > 0.0) res.weights.residual_scaled(j) /= s(j);
    return res;
}

SoftResult soft_solve(const ObservedData& data, const Mat& basis, const PropensityFit& fit_l1,
                      const EntropySpec& entropy, const QWeights& q, const RegressionFit& gamma_hd,
                      const SoftCalibConfig& config) {
    const SoftDesign sd = build_soft_design(data, basis, fit_l1, entropy, q, gamma_hd);
    return soft_solve(sd, entropy, config);
}

GecEstimate gec_hd_estimate(const ObservedData& data, const CalibrationWeights& weights, const Mat& z,
                            const RegressionFit& gamma_hd, double level) {
    return estimate_from_gamma(data, weights.omega, z, gamma_hd, level);
}

std::pair<double, double> default_taus(long n, long p, std::optional<long> s_guess, double c1, double c2) {
    if (n < 1 || p < 1) throw InvalidArgument("default_taus needs n, p >= 1");
    const long s = s_guess ? *s_guess : static_cast<long>(std::ceil(std::sqrt(static_cast<double>(p))));
    const double lp = std::log(static_cast<double>(p));
    const double nd = static_cast<double>(n);
    return {c1 * std::sqrt(lp / nd), c2 * std::sqrt(static_cast<double>(s) * lp / nd)};
}

HdResult run_gec_hd(const ObservedData& data, const Mat& basis, const PropensityFit& fit_l1,
                    const EntropySpec& entropy, const QWeights& q, const SoftCalibConfig& config, double level) {
    HdResult r;
    r.tau1 = config.tau1;
    r.tau2 = config.tau2;
    ConstraintSet c;
    c.debias = true;
    c.orthogonal = fit_l1.d() > 0;
    const AugmentedDesign des = build_design(data, basis, fit_l1, entropy, q, c);
    r.gamma = fit_lasso_weighted(des.z, data, hd_regression_weights(entropy, fit_l1.pi_hat, q.values), config.tau1);
    r.soft = build_soft_design(data, basis, fit_l1, entropy, q, r.gamma);
    r.solution = soft_solve(r.soft, entropy, config);
    r.estimate = gec_hd_estimate(data, r.solution.weights, r.soft.design.z, r.gamma, level);
    return r;
}

}  // namespace gec
