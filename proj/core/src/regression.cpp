#include "gec/regression.hpp"

#include "gec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gec {

namespace {

double soft(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

double kkt_violation(double grad, double beta, double pen) {
    if (beta != 0.0) return std::abs(grad + pen * (beta > 0.0 ? 1.0 : -1.0));
    return std::max(std::abs(grad) - pen, 0.0);
}

Vec responder_residuals(const Mat& X, const ObservedData& data, const Vec& coef) {
    Vec r = data.delta_y() - X * coef;
    for (long i = 0; i < data.N(); ++i) if (!data.responded(i)) r(i) = 0.0;
    return r;
}

}  // namespace

RegressionFit fit_weighted(const Mat& X, const ObservedData& data, const Vec& w) {
    if (X.rows() != data.N() || w.size() != data.N()) throw InvalidArgument("regression dimensions do not match the data");
    Vec ww = data.delta().cwiseProduct(w);
    for (long i = 0; i < ww.size(); ++i) {
        if (data.responded(i) && !(w(i) > 0.0 && std::isfinite(w(i)))) {
            throw InvalidArgument("regression weights must be positive and finite");
        }
    }
    RegressionFit fit;
    fit.coef = weighted_least_squares(X, data.delta_y(), ww);
    fit.weights_used = ww;
    fit.residuals = responder_residuals(X, data, fit.coef);
    return fit;
}

RegressionFit fit_gls(const Mat& basis, const ObservedData& data, const Vec& v_tilde) {
    return fit_weighted(basis, data, v_tilde.cwiseInverse());
}

RegressionFit fit_q_weighted(const Mat& basis, const ObservedData& data, const Vec& q) {
    return fit_weighted(basis, data, q);
}

RegressionFit fit_gamma_hat(const Mat& z, const ObservedData& data, const EntropySpec& entropy,
                            const Vec& omega, const Vec& q) {
    Vec w = Vec::Zero(data.N());
    for (long i = 0; i < data.N(); ++i) {
        if (!data.responded(i)) continue;
        w(i) = q(i) / g_second(entropy, omega(i));
    }
    Vec ww = data.delta().cwiseProduct(w);
    RegressionFit fit;
    fit.coef = weighted_least_squares(z, data.delta_y(), ww, "augmented calibration design");
    fit.weights_used = ww;
    fit.residuals = responder_residuals(z, data, fit.coef);
    return fit;
}

Vec coordinate_descent_lasso(const Mat& X, const Vec& y, const Vec& w, double lambda, const Vec& pf,
                             const Vec& start, const LassoControl& ctl, double& kkt, int& sweeps) {
    const long p = X.cols();
    std::vector<long> rows;
    for (long i = 0; i < X.rows(); ++i) if (w(i) > 0.0) rows.push_back(i);
    const long n = static_cast<long>(rows.size());
    Mat Xa(n, p);
    Vec ya(n);
    Vec wa(n);
    for (long r = 0; r < n; ++r) {
        Xa.row(r) = X.row(rows[r]);
        ya(r) = y(rows[r]);
        wa(r) = w(rows[r]);
    }
    const double wsum = wa.sum();
    Vec scale = Vec::Zero(p);
    std::vector<long> unpen;
    std::vector<long> pencols;
    for (long j = 0; j < p; ++j) {
        const double m2 = wsum > 0.0 ? Xa.col(j).array().square().matrix().dot(wa) / wsum : 0.0;
        if (!(m2 > 0.0)) continue;
        scale(j) = std::sqrt(m2);
        Xa.col(j) /= scale(j);
        (pf(j) > 0.0 ? pencols : unpen).push_back(j);
    }
    const long m = static_cast<long>(pencols.size());
    const long u = static_cast<long>(unpen.size());

    // Unpenalised columns are profiled out exactly by weighted projection.
    const Vec sw = wa.cwiseSqrt();
    Mat XU(n, u);
    for (long k = 0; k < u; ++k) XU.col(k) = sw.cwiseProduct(Xa.col(unpen[k]));
    Eigen::ColPivHouseholderQR<Mat> qr;
    if (u > 0) {
        qr.compute(XU);
        qr.setThreshold(kRankTol);
        if (qr.rank() < u) {
            std::vector<long> dep;
            for (long k = qr.rank(); k < u; ++k) dep.push_back(unpen[qr.colsPermutation().indices()(k)]);
            std::sort(dep.begin(), dep.end());
            throw RankDeficiencyError("unpenalised lasso columns", dep);
        }
    }
    auto residualise = [&](const Vec& v) -> Vec {
        if (u == 0) return v;
        return v - XU * qr.solve(v);
    };
    const Vec yt = residualise(sw.cwiseProduct(ya));
    Mat Pt(n, m);
    for (long k = 0; k < m; ++k) Pt.col(k) = residualise(sw.cwiseProduct(Xa.col(pencols[k])));
    const Mat G = Pt.transpose() * Pt;
    const Vec c = Pt.transpose() * yt;
    const double yy = yt.squaredNorm();

    Vec b(m);
    Vec pen(m);
    for (long k = 0; k < m; ++k) {
        const long j = pencols[k];
        b(k) = start(j) * scale(j);
        pen(k) = lambda * pf(j) / scale(j);
    }
    Vec Gb = G * b;
    auto objective = [&]() { return 0.5 * (yy - 2.0 * c.dot(b) + b.dot(Gb)) + pen.cwiseProduct(b.cwiseAbs()).sum(); };
    auto gram_kkt = [&]() {
        double v = 0.0;
        for (long k = 0; k < m; ++k) {
            if (G(k, k) <= 0.0) continue;
            v = std::max(v, kkt_violation(Gb(k) - c(k), b(k), pen(k)));
        }
        return v;
    };

    sweeps = 0;
    // Tolerance is relative to the scale of the problem's gradient.
    const double gscale = std::max(1.0, std::sqrt(y.cwiseProduct(w).squaredNorm()));
    double gk = gram_kkt();
    while (gk > ctl.tol * gscale && sweeps < ctl.max_sweeps) {
        for (long k = 0; k < m; ++k) {
            const double a = G(k, k);
            if (a <= 1e-14 * static_cast<double>(n)) continue;
            const double old = b(k);
            const double nb = soft(c(k) - Gb(k) + a * old, pen(k)) / a;
            if (nb != old) {
                Gb.noalias() += (nb - old) * G.col(k);
                b(k) = nb;
            }
        }
        ++sweeps;
        if (sweeps % 50 == 0) Gb = G * b;
        if (ctl.objective_trace) ctl.objective_trace->push_back(objective());
        gk = gram_kkt();
    }

    Vec bs = Vec::Zero(p);
    for (long k = 0; k < m; ++k) bs(pencols[k]) = b(k);
    if (u > 0) {
        Vec rest = sw.cwiseProduct(ya);
        for (long k = 0; k < m; ++k) rest -= b(k) * sw.cwiseProduct(Xa.col(pencols[k]));
        const Vec bu = qr.solve(rest);
        for (long k = 0; k < u; ++k) bs(unpen[k]) = bu(k);
    }
    // Final optimality check on the raw residuals.
    const Vec wr = wa.cwiseProduct(ya - Xa * bs);
    kkt = 0.0;
    for (long j = 0; j < p; ++j) {
        if (scale(j) <= 0.0) continue;
        kkt = std::max(kkt, kkt_violation(-Xa.col(j).dot(wr), bs(j), lambda * pf(j) / scale(j)));
    }
    kkt /= gscale;
    Vec out(p);
    for (long j = 0; j < p; ++j) out(j) = scale(j) > 0.0 ? bs(j) / scale(j) : 0.0;
    return out;
}

double lasso_objective(const Mat& z, const ObservedData& data, const Vec& w, double tau1, const Vec& coef) {
    const Vec r = responder_residuals(z, data, coef);
    double s = 0.0;
    for (long i = 0; i < data.N(); ++i) s += data.delta()(i) * w(i) * r(i) * r(i);
    return s / static_cast<double>(data.N()) + tau1 * coef.tail(coef.size() - 1).cwiseAbs().sum();
}

double lasso_kkt(const Mat& z, const ObservedData& data, const Vec& w, double tau1, const Vec& coef) {
    const Vec r = responder_residuals(z, data, coef);
    const Vec wr = data.delta().cwiseProduct(w).cwiseProduct(r);
    const double N = static_cast<double>(data.N());
    double v = 0.0;
    for (long j = 0; j < z.cols(); ++j) {
        const double g = -2.0 * z.col(j).dot(wr) / N;
        v = std::max(v, kkt_violation(g, coef(j), j == 0 ? 0.0 : tau1));
    }
    return v;
}

RegressionFit fit_lasso_weighted(const Mat& z, const ObservedData& data, const Vec& w, double tau1) {
    if (tau1 < 0.0) throw InvalidArgument("tau1 must be nonnegative");
    const long p = z.cols();
    const double N = static_cast<double>(data.N());
    Vec ww = data.delta().cwiseProduct(w);
    Vec pf = Vec::Ones(p);
    pf(0) = 0.0;
    // N^{-1} sum w r^2 + tau1 |g|  <=>  0.5 sum w r^2 + (N tau1 / 2) |g|.
    double kkt = 0.0;
    int sweeps = 0;
    LassoControl ctl;
    ctl.tol = 1e-12;
    RegressionFit fit;
    fit.coef = coordinate_descent_lasso(z, data.delta_y(), ww, 0.5 * N * tau1, pf, Vec::Zero(p), ctl, kkt, sweeps);
    fit.weights_used = ww;
    fit.residuals = responder_residuals(z, data, fit.coef);
    fit.iterations = sweeps;
    fit.kkt = lasso_kkt(z, data, w, tau1, fit.coef);
    if (fit.kkt > 1e-6) throw NonConvergence("weighted lasso did not converge", fit.kkt, sweeps);
    return fit;
}

}  // namespace gec
