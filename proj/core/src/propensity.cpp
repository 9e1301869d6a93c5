#include "gec/propensity.hpp"

#include "gec/errors.hpp"
#include "gec/random.hpp"
#include "gec/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gec {

namespace {

constexpr double kSeparationEta = 30.0;

double log1pexp(double eta) {
    if (eta > 35.0) return eta;
    if (eta < -35.0) return std::exp(eta);
    return std::log1p(std::exp(eta));
}

double neg_loglik(const Vec& eta, const Vec& delta) {
    double s = 0.0;
    for (long i = 0; i < eta.size(); ++i) s += log1pexp(eta(i)) - delta(i) * eta(i);
    return s;
}

void finish(PropensityFit& fit, const Vec& eta) {
    fit.pi_hat = logistic_probabilities(fit.x_rp, fit.phi_hat);
    const double mx = eta.cwiseAbs().maxCoeff();
    if (mx > kSeparationEta) {
        fit.separation = true;
        fit.warnings.push_back("separation: |linear predictor| reached " + std::to_string(mx));
    }
}

}  // namespace

double expit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

Vec logistic_probabilities(const Mat& x_rp, const Vec& phi) {
    const Vec eta = x_rp * phi;
    Vec p(eta.size());
    for (long i = 0; i < eta.size(); ++i) p(i) = expit(eta(i));
    return p;
}

Mat rp_design(const Mat& x, const std::vector<long>& rp_columns) {
    Mat out(x.rows(), static_cast<long>(rp_columns.size()) + 1);
    out.col(0).setOnes();
    for (std::size_t k = 0; k < rp_columns.size(); ++k) {
        const long j = rp_columns[k];
        if (j < 0 || j >= x.cols()) throw InvalidArgument("response model column " + std::to_string(j + 1) + " out of range");
        out.col(static_cast<long>(k) + 1) = x.col(j);
    }
    return out;
}

PropensityFit PropensityFit::from_probabilities(const Vec& pi) {
    PropensityFit fit;
    fit.pi_hat = pi;
    fit.x_rp = Mat(pi.size(), 0);
    fit.phi_hat = Vec(0);
    return fit;
}

PropensityFit fit_logistic(const ObservedData& data, const std::vector<long>& rp_columns) {
    PropensityFit fit = fit_logistic(rp_design(data.x(), rp_columns), data.delta());
    fit.rp_columns = rp_columns;
    return fit;
}

PropensityFit fit_logistic(const Mat& x_rp, const Vec& delta) {
    const long N = x_rp.rows();
    const long d = x_rp.cols();
    const auto dep = dependent_columns(x_rp);
    if (!dep.empty()) throw RankDeficiencyError("response model design is rank deficient", dep);

    PropensityFit fit;
    fit.x_rp = x_rp;
    Vec phi = Vec::Zero(d);
    const double rate = std::clamp(delta.mean(), 1e-6, 1.0 - 1e-6);
    phi(0) = std::log(rate / (1.0 - rate));
    Vec eta = x_rp * phi;
    double obj = neg_loglik(eta, delta);
    const double invN = 1.0 / static_cast<double>(N);

    int it = 0;
    for (; it < 200; ++it) {
        Vec pi(N);
        Vec w(N);
        for (long i = 0; i < N; ++i) {
            pi(i) = expit(eta(i));
            w(i) = std::max(pi(i) * (1.0 - pi(i)), 1e-300);
        }
        const Vec grad = x_rp.transpose() * (delta - pi);
        if (grad.cwiseAbs().maxCoeff() * invN <= 1e-12) break;
        if (eta.cwiseAbs().maxCoeff() > kSeparationEta) break;
        const Mat H = x_rp.transpose() * w.asDiagonal() * x_rp;
        Vec step = H.ldlt().solve(grad);
        if (!step.allFinite()) step = grad;
        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
            const Vec cand = phi + t * step;
            const Vec ce = x_rp * cand;
            const double co = neg_loglik(ce, delta);
            if (co <= obj + 1e-12 * std::abs(obj)) {
                phi = cand;
                eta = ce;
                accepted = co < obj || t == 1.0;
                obj = co;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    fit.phi_hat = phi;
    fit.iterations = it;
    finish(fit, eta);
    const double responded = delta.sum();
    if (!fit.separation && (responded == 0.0 || responded == static_cast<double>(N))) {
        fit.separation = true;
        fit.warnings.push_back(responded == 0.0 ? "separation: no unit responded" : "separation: every unit responded");
    }
    return fit;
}

Vec pi_gradient(const PropensityFit& fit, long i) {
    if (i < 0 || i >= fit.pi_hat.size()) throw InvalidArgument("unit index out of range");
    const double p = fit.pi_hat(i);
    return (p * (1.0 - p)) * fit.x_rp.row(i).transpose();
}

Mat pi_gradient_matrix(const PropensityFit& fit) {
    const Vec s = fit.pi_hat.array() * (1.0 - fit.pi_hat.array());
    return s.asDiagonal() * fit.x_rp;
}

double logistic_l1_objective(const Mat& x_rp, const Vec& delta, double penalty, const Vec& phi) {
    const Vec eta = x_rp * phi;
    return neg_loglik(eta, delta) / static_cast<double>(x_rp.rows()) + penalty * phi.tail(phi.size() - 1).cwiseAbs().sum();
}

double logistic_l1_kkt(const Mat& x_rp, const Vec& delta, double penalty, const Vec& phi) {
    const Vec pi = logistic_probabilities(x_rp, phi);
    const Vec g = -x_rp.transpose() * (delta - pi) / static_cast<double>(x_rp.rows());
    double v = std::abs(g(0));
    for (long j = 1; j < phi.size(); ++j) {
        if (phi(j) != 0.0) v = std::max(v, std::abs(g(j) + penalty * (phi(j) > 0 ? 1.0 : -1.0)));
        else v = std::max(v, std::abs(g(j)) - penalty);
    }
    return v;
}

PropensityFit fit_logistic_l1(const ObservedData& data, double penalty, const std::vector<long>& rp_columns) {
    std::vector<long> cols = rp_columns;
    if (cols.empty()) {
        cols.resize(data.p0());
        std::iota(cols.begin(), cols.end(), 0L);
    }
    PropensityFit fit = fit_logistic_l1(rp_design(data.x(), cols), data.delta(), penalty);
    fit.rp_columns = cols;
    return fit;
}

PropensityFit fit_logistic_l1(const Mat& x_rp, const Vec& delta, double penalty, const Vec* start) {
    if (!(penalty >= 0.0)) throw InvalidArgument("penalty must be nonnegative");
    const long N = x_rp.rows();
    const long d = x_rp.cols();
    const double Nd = static_cast<double>(N);
    Vec phi = Vec::Zero(d);
    if (start) {
        phi = *start;
    } else {
        const double rate = std::clamp(delta.mean(), 1e-6, 1.0 - 1e-6);
        phi(0) = std::log(rate / (1.0 - rate));
    }
    Vec pf = Vec::Ones(d);
    pf(0) = 0.0;
    double obj = logistic_l1_objective(x_rp, delta, penalty, phi);
    double kkt = logistic_l1_kkt(x_rp, delta, penalty, phi);
    int it = 0;
    for (; it < 100 && kkt > 1e-9; ++it) {
        const Vec eta = x_rp * phi;
        Vec w(N);
        Vec zwork(N);
        for (long i = 0; i < N; ++i) {
            const double p = expit(eta(i));
            w(i) = std::max(p * (1.0 - p), 1e-10);
            zwork(i) = eta(i) + (delta(i) - p) / w(i);
        }
        // Quadratic model in the units of 0.5 sum w (z - x'phi)^2 / N.
        double ikkt = 0.0;
        int sweeps = 0;
        LassoControl ctl;
        ctl.tol = std::min(1e-6, std::max(1e-13, 0.01 * kkt));
        const Vec cand = coordinate_descent_lasso(x_rp, zwork, w / Nd, penalty, pf, phi, ctl, ikkt, sweeps);
        const Vec dir = cand - phi;
        const Vec g = -x_rp.transpose() * (delta - logistic_probabilities(x_rp, phi)) / Nd;
        const double pen_old = penalty * phi.tail(d - 1).cwiseAbs().sum();
        const double pen_new = penalty * cand.tail(d - 1).cwiseAbs().sum();
        const double decrease = g.dot(dir) + pen_new - pen_old;
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 50; ++h) {
            const Vec trial = phi + t * dir;
            const double to = logistic_l1_objective(x_rp, delta, penalty, trial);
            if (to <= obj + 1e-4 * t * std::min(decrease, 0.0) + 1e-15 * std::abs(obj)) {
                moved = to < obj || t == 1.0;
                phi = trial;
                obj = to;
                break;
            }
            t *= 0.5;
        }
        kkt = logistic_l1_kkt(x_rp, delta, penalty, phi);
        if (!moved) break;
    }
    if (kkt > 1e-6) throw NonConvergence("L1 logistic regression did not converge", kkt, it);
    PropensityFit fit;
    fit.x_rp = x_rp;
    fit.phi_hat = phi;
    fit.regularized = true;
    fit.penalty = penalty;
    fit.iterations = it;
    fit.kkt = kkt;
    finish(fit, x_rp * phi);
    return fit;
}

CvResult cv_logistic_l1(const Mat& x_rp, const Vec& delta, std::uint64_t seed, int folds) {
    const long N = x_rp.rows();
    const long d = x_rp.cols();
    if (folds < 2 || folds > N) throw InvalidArgument("invalid number of folds");
    const double rate = std::clamp(delta.mean(), 1e-6, 1.0 - 1e-6);
    const Vec g0 = x_rp.transpose() * (delta - Vec::Constant(N, rate)) / static_cast<double>(N);
    double lmax = 0.0;
    for (long j = 1; j < d; ++j) lmax = std::max(lmax, std::abs(g0(j)));
    CvResult out;
    if (lmax <= 0.0) {
        out.penalty = 0.0;
        return out;
    }
    const int K = 20;
    for (int k = 0; k < K; ++k) out.grid.push_back(lmax * std::pow(1e-3, static_cast<double>(k) / (K - 1)));

    std::vector<long> order(N);
    std::iota(order.begin(), order.end(), 0L);
    Rng rng(seed, 1);
    order = rng.sample_without_replacement(order, N);
    std::vector<int> fold(N);
    for (long k = 0; k < N; ++k) fold[order[k]] = static_cast<int>(k % folds);

    out.deviance.assign(K, 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<long> tr;
        std::vector<long> te;
        for (long i = 0; i < N; ++i) (fold[i] == f ? te : tr).push_back(i);
        Mat xtr(tr.size(), d);
        Vec dtr(tr.size());
        for (std::size_t k = 0; k < tr.size(); ++k) {
            xtr.row(k) = x_rp.row(tr[k]);
            dtr(k) = delta(tr[k]);
        }
        Vec warm;
        bool have_warm = false;
        for (int k = 0; k < K; ++k) {
            double dev = 0.0;
            try {
                const PropensityFit fit = fit_logistic_l1(xtr, dtr, out.grid[k], have_warm ? &warm : nullptr);
                warm = fit.phi_hat;
                have_warm = true;
                for (long i : te) {
                    const double eta = x_rp.row(i).dot(fit.phi_hat);
                    dev += 2.0 * (log1pexp(eta) - delta(i) * eta);
                }
            } catch (const NonConvergence&) {
                dev = std::numeric_limits<double>::infinity();
            }
            out.deviance[k] += dev;
        }
    }
    long best = 0;
    for (int k = 1; k < K; ++k) if (out.deviance[k] < out.deviance[best]) best = k;
    out.penalty = out.grid[best];
    return out;
}

}  // namespace gec
