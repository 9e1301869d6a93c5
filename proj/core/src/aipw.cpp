#include "gec/aipw.hpp"

#include "gec/errors.hpp"

#include <cmath>
#include <limits>

namespace gec {

namespace {

void check_pi(const ObservedData& data, const PropensityFit& fit) {
    if (fit.pi_hat.size() != data.N()) throw InvalidArgument("propensity length does not match the data");
    for (long i = 0; i < data.N(); ++i) {
        if (data.responded(i) && !(fit.pi_hat(i) > 1e-12)) {
            throw InvalidArgument("estimated propensity " + std::to_string(fit.pi_hat(i)) + " at responding unit " +
                                  std::to_string(i) + " is not positive");
        }
    }
}

double weighted_mean_over_responders(const ObservedData& data, const Vec& pi) {
    double s = 0.0;
    for (long i = 0; i < data.N(); ++i) if (data.responded(i)) s += data.delta_y()(i) / pi(i);
    return s / static_cast<double>(data.N());
}

}  // namespace

BaselineEstimate ipw_estimate(const ObservedData& data, const PropensityFit& fit) {
    check_pi(data, fit);
    BaselineEstimate est;
    est.method = "IPW";
    est.theta_hat = weighted_mean_over_responders(data, fit.pi_hat);
    return est;
}

Vec delta_b(const ObservedData& data, const PropensityFit& fit, const Mat& basis) {
    const double N = static_cast<double>(data.N());
    Vec ht = Vec::Zero(basis.cols());
    for (long i = 0; i < data.N(); ++i) {
        if (data.responded(i)) ht += basis.row(i).transpose() / fit.pi_hat(i);
    }
    return ht / N - basis.colwise().sum().transpose() / N;
}

BaselineEstimate aipw_estimate(const ObservedData& data, const PropensityFit& fit, const Mat& basis,
                               const QWeights& q) {
    check_pi(data, fit);
    std::vector<long> keep;
    for (long j = 0; j < basis.cols(); ++j) {
        if (basis.col(j).cwiseAbs().maxCoeff() > 0.0) keep.push_back(j);
    }
    Mat b(basis.rows(), static_cast<long>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) b.col(static_cast<long>(k)) = basis.col(keep[k]);

    const RegressionFit rf = fit_q_weighted(b, data, q.values);
    BaselineEstimate est;
    est.method = q.family == QFamily::Unit ? "AIPW(unit)" : "AIPW(power)";
    if (q.family == QFamily::PropensityPower) est.kappa = q.kappa;
    est.delta_b = delta_b(data, fit, basis);
    est.beta = Vec::Zero(basis.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) est.beta(keep[k]) = rf.coef(static_cast<long>(k));
    const Vec db = delta_b(data, fit, b);
    est.theta_hat = weighted_mean_over_responders(data, fit.pi_hat) - db.dot(rf.coef);
    return est;
}

double empirical_loss(const ObservedData& data, const PropensityFit& fit, const Mat& basis, double kappa,
                      const Vec& v_tilde) {
    check_pi(data, fit);
    const long N = data.N();
    const long p = basis.cols();
    Vec q(N);
    for (long i = 0; i < N; ++i) q(i) = std::pow(fit.pi_hat(i), kappa - 1.0);
    Mat M = Mat::Zero(p, p);
    for (long i = 0; i < N; ++i) {
        if (data.responded(i)) M.noalias() += q(i) * basis.row(i).transpose() * basis.row(i);
    }
    M /= static_cast<double>(N);
    Eigen::ColPivHouseholderQR<Mat> qr(M);
    qr.setThreshold(kRankTol);
    if (qr.rank() < p) throw RankDeficiencyError("M_q(kappa) is singular", dependent_columns(M));
    const Vec a = qr.solve(delta_b(data, fit, basis));
    double s = 0.0;
    for (long i = 0; i < N; ++i) {
        if (!data.responded(i)) continue;
        const double t = 1.0 / fit.pi_hat(i) - q(i) * basis.row(i).dot(a);
        s += t * t * v_tilde(i);
    }
    return s / static_cast<double>(N);
}

Vec squared_residual_vtilde(const ObservedData& data, const PropensityFit& fit, const Mat& basis) {
    Mat zt(basis.rows(), basis.cols() + 1);
    zt << basis, fit.pi_hat.cwiseInverse();
    const RegressionFit rf = fit_weighted(zt, data, Vec::Ones(data.N()));
    return rf.residuals.cwiseAbs2();
}

KappaSelection minimise_on_grid(const std::function<double(double)>& loss, const KappaSearch& search) {
    KappaSelection sel;
    const long K = std::lround((search.hi - search.lo) / search.step);
    long best = -1;
    for (long k = 0; k <= K; ++k) {
        const double kap = search.lo + static_cast<double>(k) * search.step;
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
            v = loss(kap);
            if (!std::isfinite(v)) throw Error("non-finite loss");
        } catch (const Error& e) {
            sel.warnings.push_back("kappa " + std::to_string(kap) + " skipped: " + e.what());
            v = std::numeric_limits<double>::quiet_NaN();
        }
        sel.grid.push_back(kap);
        sel.grid_loss.push_back(v);
        if (std::isnan(v)) continue;
        if (best < 0) {
            best = k;
            continue;
        }
        const double bv = sel.grid_loss[best];
        const double tie = 1e-12 * std::max(1.0, std::abs(bv));
        if (v < bv - tie || (std::abs(v - bv) <= tie && std::abs(kap - 1.0) < std::abs(sel.grid[best] - 1.0))) {
            best = k;
        }
    }
    if (best < 0) throw InfeasibleCalibration("loss could not be evaluated at any kappa grid point");
    sel.kappa = sel.grid[best];
    sel.loss = sel.grid_loss[best];
    if (search.tol <= 0.0) return sel;

    double a = std::max(search.lo, sel.kappa - search.step);
    double b = std::min(search.hi, sel.kappa + search.step);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    auto safe = [&](double k) {
        try {
            const double v = loss(k);
            return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = safe(c);
    double fd = safe(d);
    while (b - a > search.tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = safe(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = safe(d);
        }
    }
    const double km = 0.5 * (a + b);
    const double fm = safe(km);
    if (fm < sel.loss) {
        sel.kappa = km;
        sel.loss = fm;
    }
    return sel;
}

KappaSelection select_kappa(const ObservedData& data, const PropensityFit& fit, const Mat& basis, VMode mode,
                            const KappaSearch& search) {
    const Vec v = mode == VMode::Unit ? Vec::Ones(data.N()) : squared_residual_vtilde(data, fit, basis);
    return minimise_on_grid([&](double k) { return empirical_loss(data, fit, basis, k, v); }, search);
}

}  // namespace gec
