#include "gec/linalg.hpp"

#include "gec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gec {

std::vector<long> dependent_columns(const Mat& X, double tol) {
    std::vector<long> out;
    if (X.cols() == 0) return out;
    Eigen::ColPivHouseholderQR<Mat> qr(X);
    qr.setThreshold(tol);
    const long r = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    for (long k = r; k < X.cols(); ++k) out.push_back(perm(k));
    std::sort(out.begin(), out.end());
    return out;
}

Vec weighted_least_squares(const Mat& X, const Vec& y, const Vec& w, const char* what) {
    long m = 0;
    for (long i = 0; i < w.size(); ++i) if (w(i) > 0.0) ++m;
    Mat A(m, X.cols());
    Vec b(m);
    long r = 0;
    for (long i = 0; i < w.size(); ++i) {
        if (!(w(i) > 0.0)) continue;
        const double s = std::sqrt(w(i));
        A.row(r) = s * X.row(i);
        b(r) = s * y(i);
        ++r;
    }
    Eigen::ColPivHouseholderQR<Mat> qr(A);
    qr.setThreshold(kRankTol);
    if (qr.rank() < X.cols()) {
        std::vector<long> cols;
        const auto& perm = qr.colsPermutation().indices();
        for (long k = qr.rank(); k < X.cols(); ++k) cols.push_back(perm(k));
        std::sort(cols.begin(), cols.end());
        throw RankDeficiencyError(std::string(what) + " is rank deficient", cols);
    }
    return qr.solve(b);
}

Vec nonnegative_least_squares(const Mat& A, const Vec& b, int max_iter) {
    const long n = A.cols();
    if (b.size() != A.rows()) throw InvalidArgument("nonnegative least squares: dimension mismatch");
    if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 30);
    const double tol = 10.0 * std::numeric_limits<double>::epsilon() * A.cwiseAbs().colwise().sum().maxCoeff() *
                       static_cast<double>(std::max(A.rows(), n));
    Vec u = Vec::Zero(n);
    std::vector<char> passive(static_cast<std::size_t>(n), 0);
    auto solve_passive = [&]() {
        std::vector<long> idx;
        for (long j = 0; j < n; ++j) if (passive[j]) idx.push_back(j);
        Mat AP(A.rows(), static_cast<long>(idx.size()));
        for (std::size_t c = 0; c < idx.size(); ++c) AP.col(static_cast<long>(c)) = A.col(idx[c]);
        const Vec sP = AP.colPivHouseholderQr().solve(b);
        Vec s = Vec::Zero(n);
        for (std::size_t c = 0; c < idx.size(); ++c) s(idx[c]) = sP(static_cast<long>(c));
        return s;
    };
    Vec w = A.transpose() * (b - A * u);
    for (int it = 0; it < max_iter; ++it) {
        long jmax = -1;
        double wmax = tol;
        for (long j = 0; j < n; ++j) {
            if (!passive[j] && w(j) > wmax) {
                wmax = w(j);
                jmax = j;
            }
        }
        if (jmax < 0) break;
        passive[jmax] = 1;
        Vec s = solve_passive();
        for (int inner = 0; inner < max_iter; ++inner) {
            double alpha = 1.0;
            bool blocked = false;
            for (long j = 0; j < n; ++j) {
                if (passive[j] && s(j) <= 0.0) {
                    blocked = true;
                    alpha = std::min(alpha, u(j) / (u(j) - s(j)));
                }
            }
            if (!blocked) break;
            u += alpha * (s - u);
            for (long j = 0; j < n; ++j) {
                if (passive[j] && u(j) <= tol) {
                    passive[j] = 0;
                    u(j) = 0.0;
                }
            }
            s = solve_passive();
        }
        u = s;
        w = A.transpose() * (b - A * u);
    }
    return u;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                        45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                     133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double mean(const Vec& x) {
    double s = 0.0;
    for (long i = 0; i < x.size(); ++i) s += x(i);
    return s / static_cast<double>(x.size());
}

double sample_variance(const Vec& x) {
    const long n = x.size();
    if (n < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
        const double d = x(i) - m;
        s += d * d;
    }
    return s / static_cast<double>(n - 1);
}

}  // namespace gec
