#include "gec/calibration.hpp"

#include "gec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gec {

namespace {

double median(Vec v) {
    const long n = v.size();
    std::sort(v.data(), v.data() + n);
    return n % 2 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

// Dual restricted to responders, in coordinates where every active column
// of z has unit second moment.
class ScaledDual {
public:
    ScaledDual(const AugmentedDesign& design, const EntropySpec& entropy, const Vec& offset,
               const std::vector<long>& active, const Vec& scale)
        : entropy_(entropy), N_(static_cast<double>(design.N())) {
        const long k = static_cast<long>(active.size());
        std::vector<long> resp;
        for (long i = 0; i < design.N(); ++i) if (design.delta(i) != 0.0) resp.push_back(i);
        const long n = static_cast<long>(resp.size());
        zr_.resize(n, k);
        qr_.resize(n);
        or_ = Vec::Zero(n);
        units_ = resp;
        zsum_ = Vec::Zero(k);
        for (long c = 0; c < k; ++c) {
            const long j = active[c];
            zsum_(c) = design.z.col(j).sum() / scale(j);
            for (long r = 0; r < n; ++r) zr_(r, c) = design.z(resp[r], j) / scale(j);
        }
        for (long r = 0; r < n; ++r) {
            qr_(r) = design.q.values(resp[r]);
            if (offset.size()) or_(r) = offset(resp[r]);
        }
    }

    long k() const { return zr_.cols(); }

    // Returns false (and the offending unit) when some nu leaves the link range.
    bool eval(const Vec& lam, bool hessian, double& value, Vec& grad, Mat& hess, long* bad = nullptr) const {
        const long n = zr_.rows();
        const Vec lin = zr_ * lam;
        Vec fv(n);
        Vec fp(n);
        double sumF = 0.0;
        for (long r = 0; r < n; ++r) {
            const double nu = or_(r) + qr_(r) * lin(r);
            double F = 0.0;
            double f = 0.0;
            double d = 0.0;
            if (!dual_terms(entropy_, nu, F, f, d)) {
                if (bad) *bad = units_[r];
                return false;
            }
            sumF += F / qr_(r);
            fv(r) = f;
            fp(r) = d * qr_(r);
        }
        value = (sumF - lam.dot(zsum_)) / N_;
        grad = (zr_.transpose() * fv - zsum_) / N_;
        if (hessian) hess = zr_.transpose() * fp.asDiagonal() * zr_ / N_;
        return true;
    }

    // Whether sum_resp w z = sum_all z has a solution with w >= domain_lo,
    // tested by non-negative least squares on the shifted targets.
    bool cone_feasible() const {
        const double lo = std::isfinite(entropy_.domain_lo) ? entropy_.domain_lo : 0.0;
        const Vec b = zsum_ - lo * zr_.colwise().sum().transpose();
        const Mat A = zr_.transpose();
        const Vec u = nonnegative_least_squares(A, b);
        return (A * u - b).norm() <= 1e-7 * std::max(1.0, b.norm());
    }

private:
    const EntropySpec& entropy_;
    double N_;
    Mat zr_;
    Vec qr_;
    Vec or_;
    Vec zsum_;
    std::vector<long> units_;
};

std::string join_units(const std::vector<long>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

}  // namespace

ConstraintSet parse_constraints(const std::string& text) {
    ConstraintSet c;
    c.balance = true;
    c.debias = false;
    c.orthogonal = false;
    std::istringstream is(text);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char ch) { return std::isspace(ch); }), tok.end());
        if (tok.empty()) continue;
        if (tok == "balance") c.balance = true;
        else if (tok == "debias") c.debias = true;
        else if (tok == "orthogonal") c.orthogonal = true;
        else throw InvalidArgument("unknown constraint '" + tok + "'; valid: balance, debias, orthogonal");
    }
    return c;
}

std::string to_string(const ConstraintSet& c) {
    std::string s = "balance";
    if (c.debias) s += ",debias";
    if (c.orthogonal) s += ",orthogonal";
    return s;
}

Vec column_scales(const Mat& z) {
    Vec s(z.cols());
    for (long j = 0; j < z.cols(); ++j) s(j) = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(z.rows()));
    return s;
}

AugmentedDesign build_design(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                             const EntropySpec& entropy, const QWeights& q, const ConstraintSet& constraints,
                             const std::vector<std::string>& basis_labels) {
    const long N = data.N();
    if (basis.rows() != N || fit.pi_hat.size() != N || q.values.size() != N) {
        throw InvalidArgument("design inputs have inconsistent lengths");
    }
    AugmentedDesign des;
    des.constraints = constraints;
    des.constraints.balance = true;
    des.q = q;
    des.delta = data.delta();
    des.pi_hat = fit.pi_hat;
    des.p = basis.cols();
    des.d = constraints.orthogonal ? fit.d() : 0;
    if (constraints.orthogonal && des.d == 0) {
        throw InvalidArgument("the orthogonality constraint needs a parametric response model");
    }
    const long k = des.p + des.d + (constraints.debias ? 1 : 0);
    des.z.resize(N, k);
    des.z.leftCols(des.p) = basis;

    if (constraints.debias || constraints.orthogonal) {
        for (long i = 0; i < N; ++i) {
            const double pi = fit.pi_hat(i);
            const double w0 = 1.0 / pi;
            if (!(pi > 0.0 && pi <= 1.0) || !in_domain(entropy, w0)) {
                throw DomainError(to_string(entropy) + " (unit " + std::to_string(i) + ", 1/pi)", w0, entropy.domain_lo,
                                  entropy.domain_hi);
            }
            const double qi = q.values(i);
            if (constraints.orthogonal) {
                const double c = -g_second(entropy, w0) / (pi * pi) / qi;
                des.z.block(i, des.p, 1, des.d) = (c * pi * (1.0 - pi)) * fit.x_rp.row(i);
            }
            if (constraints.debias) des.z(i, k - 1) = debias_covariate(entropy, pi) / qi;
        }
    }

    for (long j = 0; j < des.p; ++j) {
        des.labels.push_back(j < static_cast<long>(basis_labels.size()) ? basis_labels[j] : "b" + std::to_string(j + 1));
    }
    for (long j = 0; j < des.d; ++j) des.labels.push_back("orthogonal:" + std::to_string(j + 1));
    if (constraints.debias) des.labels.push_back("debias");
    return des;
}

AugmentedDesign select_columns(const AugmentedDesign& design, const std::vector<long>& columns) {
    AugmentedDesign out = design;
    out.z.resize(design.N(), static_cast<long>(columns.size()));
    out.labels.clear();
    out.p = 0;
    out.d = 0;
    out.constraints.debias = false;
    out.constraints.orthogonal = false;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const long j = columns[c];
        if (j < 0 || j >= design.k()) throw InvalidArgument("column index out of range");
        out.z.col(static_cast<long>(c)) = design.z.col(j);
        out.labels.push_back(design.labels[j]);
        if (j < design.p) ++out.p;
        else if (j < design.p + design.d) { ++out.d; out.constraints.orthogonal = true; }
        else out.constraints.debias = true;
    }
    return out;
}

DualEval dual_objective(const AugmentedDesign& design, const EntropySpec& entropy, const Vec& lambda,
                        const Vec& offset) {
    const long k = design.k();
    if (lambda.size() != k) throw InvalidArgument("lambda has the wrong length");
    std::vector<long> all(k);
    for (long j = 0; j < k; ++j) all[j] = j;
    const ScaledDual dual(design, entropy, offset, all, Vec::Ones(k));
    DualEval out;
    long bad = -1;
    if (!dual.eval(lambda, true, out.value, out.gradient, out.hessian, &bad)) {
        const double nu = (offset.size() ? offset(bad) : 0.0) + design.q.values(bad) * design.z.row(bad).dot(lambda);
        throw LinkRangeError(to_string(entropy), nu, bad);
    }
    return out;
}

Vec initial_lambda(const AugmentedDesign& design, const EntropySpec& entropy, const Vec& offset) {
    const long k = design.k();
    Vec lam = Vec::Zero(k);
    if (offset.size()) return lam;
    if (design.debias_col() >= 0) {
        lam(design.debias_col()) = 1.0;
        return lam;
    }
    long icpt = -1;
    for (long j = 0; j < k && icpt < 0; ++j) {
        const double c = design.z(0, j);
        if (c != 0.0 && (design.z.col(j).array() == c).all()) icpt = j;
    }
    if (icpt < 0) throw InfeasibleCalibration("no intercept column to initialise the dual");
    double w0 = 0.0;
    if (design.pi_hat.size()) {
        w0 = median(design.pi_hat.cwiseInverse());
    } else {
        w0 = static_cast<double>(design.N()) / design.delta.sum();
    }
    if (!in_domain(entropy, w0)) w0 = entropy.domain_lo + 1.0;
    lam(icpt) = g_deriv(entropy, w0) / (median(design.q.values) * design.z(0, icpt));
    return lam;
}

Vec calibration_residual(const AugmentedDesign& design, const Vec& omega) {
    Vec a(design.N());
    for (long i = 0; i < design.N(); ++i) a(i) = design.delta(i) * omega(i) - 1.0;
    return design.z.transpose() * a / static_cast<double>(design.N());
}

DualSolution solve_dual(const AugmentedDesign& design, const EntropySpec& entropy, const std::optional<Vec>& init,
                        const Vec& offset, const DualOptions& options) {
    const long k = design.k();
    const Vec scale = column_scales(design.z);
    std::vector<long> active;
    for (long j = 0; j < k; ++j) if (scale(j) > 0.0) active.push_back(j);
    const long ka = static_cast<long>(active.size());

    DualSolution sol;
    const bool full = (design.delta.array() != 0.0).all();
    const double qmin = design.q.values.minCoeff();
    const double qmax = design.q.values.maxCoeff();
    if (!init && offset.size() == 0 && full && qmax - qmin <= 1e-15 * std::abs(qmax) && in_domain(entropy, 1.0)) {
        for (long j = 0; j < k; ++j) {
            const double c = design.z(0, j);
            if (c == 0.0 || !(design.z.col(j).array() == c).all()) continue;
            sol.lambda = Vec::Zero(k);
            sol.lambda(j) = g_deriv(entropy, 1.0) / (qmax * c);
            const DualEval ev = dual_objective(design, entropy, sol.lambda);
            sol.objective = ev.value;
            sol.grad_norm = ev.gradient.cwiseAbs().maxCoeff();
            Vec gs = ev.gradient;
            for (long jj = 0; jj < k; ++jj) if (scale(jj) > 0.0) gs(jj) /= scale(jj);
            sol.grad_norm_scaled = gs.cwiseAbs().maxCoeff();
            sol.short_circuit = true;
            if (sol.grad_norm <= options.tol && sol.grad_norm_scaled <= options.tol) return sol;
            break;
        }
    }

    const Vec lam0 = init ? *init : initial_lambda(design, entropy, offset);
    if (lam0.size() != k) throw InvalidArgument("initial lambda has the wrong length");
    const ScaledDual dual(design, entropy, offset, active, scale);
    Vec x(ka);
    for (long c = 0; c < ka; ++c) x(c) = lam0(active[c]) * scale(active[c]);

    double V = 0.0;
    Vec G;
    Mat H;
    long bad = -1;
    if (!dual.eval(x, true, V, G, H, &bad)) {
        throw InfeasibleCalibration("initial dual point is outside the link range at unit " + std::to_string(bad));
    }

    auto residuals = [&](const Vec& g, double& scaled, double& raw) {
        scaled = ka ? g.cwiseAbs().maxCoeff() : 0.0;
        raw = 0.0;
        for (long c = 0; c < ka; ++c) raw = std::max(raw, std::abs(g(c)) * scale(active[c]));
    };

    double rs = 0.0;
    double rr = 0.0;
    int it = 0;
    for (; it < options.max_iter; ++it) {
        residuals(G, rs, rr);
        if (rs <= options.target && rr <= options.target) break;

        Vec dir;
        bool newton = false;
        Eigen::LDLT<Mat> ldlt(H);
        if (ldlt.info() == Eigen::Success) {
            const Vec D = ldlt.vectorD();
            const double dmax = D.cwiseAbs().maxCoeff();
            if (D.minCoeff() > 1e-13 * dmax && dmax > 0.0) {
                dir = -ldlt.solve(G);
                newton = dir.allFinite() && G.dot(dir) < 0.0;
            }
        }
        if (!newton) {
            Eigen::CompleteOrthogonalDecomposition<Mat> cod(H);
            cod.setThreshold(1e-12);
            dir = -cod.solve(G);
            newton = dir.allFinite() && G.dot(dir) < 0.0;
        }
        if (!newton) {
            dir = -G;
            ++sol.gradient_steps;
        }

        bool accepted = false;
        for (int pass = 0; pass < 2 && !accepted; ++pass) {
            if (pass == 1) {
                if (!newton) break;
                dir = -G;
                ++sol.gradient_steps;
            }
            const double slope = G.dot(dir);
            double t = 1.0;
            for (int h = 0; h < 80; ++h) {
                const Vec cand = x + t * dir;
                double Vc = 0.0;
                Vec Gc;
                Mat Hc;
                if (dual.eval(cand, true, Vc, Gc, Hc)) {
                    const bool armijo = Vc <= V + 1e-4 * t * slope;
                    const bool roundoff = Vc - V <= 1e-13 * std::max(1.0, std::abs(V)) &&
                                          Gc.cwiseAbs().maxCoeff() < G.cwiseAbs().maxCoeff();
                    if (armijo || roundoff) {
                        x = cand;
                        V = Vc;
                        G = Gc;
                        H = Hc;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
                ++sol.line_search_backtracks;
            }
        }
        if (!accepted) break;
        if (x.cwiseAbs().maxCoeff() > 1e12) {
            throw InfeasibleCalibration("dual iterates diverge: calibration constraints cannot be met");
        }
    }
    residuals(G, rs, rr);

    sol.lambda = Vec::Zero(k);
    for (long c = 0; c < ka; ++c) sol.lambda(active[c]) = x(c) / scale(active[c]);
    sol.objective = V;
    sol.grad_norm = rr;
    sol.grad_norm_scaled = rs;
    sol.iterations = it;
    if (rs > options.tol || rr > options.tol) {
        if (x.cwiseAbs().maxCoeff() > 1e6) {
            throw InfeasibleCalibration("dual iterates diverge: calibration constraints cannot be met (residual " +
                                        std::to_string(rs) + ")");
        }
        const bool bounded_domain = std::isfinite(entropy.domain_lo) && !std::isfinite(entropy.domain_hi);
        if (bounded_domain && !dual.cone_feasible()) {
            throw InfeasibleCalibration("calibration constraints cannot be met by weights in the entropy domain (residual " +
                                        std::to_string(rs) + ")");
        }
        throw NonConvergence("dual solver stalled with residual " + std::to_string(rs), rs, it);
    }
    return sol;
}

CalibrationWeights recover_weights(const AugmentedDesign& design, const EntropySpec& entropy, const DualSolution& dual,
                                   const Vec& offset) {
    CalibrationWeights w;
    const long N = design.N();
    w.omega = Vec::Zero(N);
    const Vec lin = design.z * dual.lambda;
    std::vector<long> bad;
    for (long i = 0; i < N; ++i) {
        if (design.delta(i) == 0.0) continue;
        const double nu = (offset.size() ? offset(i) : 0.0) + design.q.values(i) * lin(i);
        if (!in_link_range(entropy, nu)) {
            bad.push_back(i);
            continue;
        }
        w.omega(i) = g_inverse(entropy, nu);
    }
    if (!bad.empty()) throw InfeasibleCalibration("dual point infeasible at units " + join_units(bad));
    if (design.pi_hat.size()) w.initial = design.pi_hat.cwiseInverse();
    w.residual = calibration_residual(design, w.omega);
    const Vec s = column_scales(design.z);
    w.residual_scaled = w.residual;
    for (long j = 0; j < s.size(); ++j) if (s(j) > 0.0) w.residual_scaled(j) /= s(j);
    return w;
}

std::pair<double, double> confidence_interval(double theta, double v_hat, long N, double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
    const double z = normal_quantile(1.0 - 0.5 * (1.0 - level));
    const double half = z * std::sqrt(v_hat / static_cast<double>(N));
    return {theta - half, theta + half};
}

GecEstimate estimate_from_gamma(const ObservedData& data, const Vec& omega, const Mat& z, const RegressionFit& gamma,
                                double level) {
    const long N = data.N();
    GecEstimate est;
    est.level = level;
    est.gamma = gamma;
    const Vec pred = z * gamma.coef;
    est.eta.resize(N);
    double s = 0.0;
    for (long i = 0; i < N; ++i) {
        const double dw = data.delta()(i) * omega(i);
        const double wy = dw * data.delta_y()(i);
        s += wy;
        est.eta(i) = wy + (1.0 - dw) * pred(i);
    }
    est.theta_hat = s / static_cast<double>(N);
    est.v_hat = sample_variance(est.eta);
    const auto ci = confidence_interval(est.theta_hat, est.v_hat, N, level);
    est.ci_lo = ci.first;
    est.ci_hi = ci.second;
    return est;
}

GecEstimate gec_estimate(const ObservedData& data, const CalibrationWeights& weights, const AugmentedDesign& design,
                         const EntropySpec& entropy, double level) {
    const RegressionFit gamma = fit_gamma_hat(design.z, data, entropy, weights.omega, design.q.values);
    return estimate_from_gamma(data, weights.omega, design.z, gamma, level);
}

KappaSelection select_kappa_gec(const ObservedData& data, const Mat& basis, const PropensityFit& fit,
                                const EntropySpec& entropy, const ConstraintSet& constraints, VMode mode,
                                const KappaSearch& search) {
    auto loss = [&](double kappa) {
        const QWeights q = QWeights::power(fit.pi_hat, kappa);
        const AugmentedDesign des = build_design(data, basis, fit, entropy, q, constraints);
        const DualSolution dual = solve_dual(des, entropy);
        const CalibrationWeights w = recover_weights(des, entropy, dual);
        // The regression also rejects kappa values where z is rank deficient,
        // which run_gec would refuse later.
        const RegressionFit gamma = fit_gamma_hat(des.z, data, entropy, w.omega, q.values);
        Vec v = Vec::Ones(data.N());
        if (mode == VMode::SquaredResidual) v = gamma.residuals.cwiseAbs2();
        double m = 0.0;
        for (long i = 0; i < data.N(); ++i) {
            if (data.responded(i)) m += w.omega(i) * w.omega(i) * v(i);
        }
        return m;
    };
    return minimise_on_grid(loss, search);
}

GecResult run_gec(const ObservedData& data, const Mat& basis, const PropensityFit& fit, const EntropySpec& entropy,
                  const QWeights& q, const ConstraintSet& constraints, double level,
                  const std::vector<std::string>& basis_labels) {
    GecResult r;
    r.design = build_design(data, basis, fit, entropy, q, constraints, basis_labels);
    r.dual = solve_dual(r.design, entropy);
    r.weights = recover_weights(r.design, entropy, r.dual);
    r.estimate = gec_estimate(data, r.weights, r.design, entropy, level);
    return r;
}

}  // namespace gec
