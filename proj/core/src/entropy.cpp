#include "gec/entropy.hpp"

#include "gec/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace gec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double renyi_alpha_checked(double alpha) {
    if (!std::isfinite(alpha) || alpha == 0.0 || alpha == -1.0) {
        throw InvalidArgument("renyi entropy requires a finite alpha not in {0, -1}");
    }
    return alpha;
}

void check_domain(const EntropySpec& s, double w) {
    if (!in_domain(s, w)) throw DomainError(to_string(s), w, s.domain_lo, s.domain_hi);
}

void check_range(const EntropySpec& s, double nu) {
    if (!in_link_range(s, nu)) throw LinkRangeError(to_string(s), nu);
}

double g_value_raw(const EntropySpec& s, double w) {
    switch (s.kind) {
    case EntropyKind::EmpiricalLikelihood: return -std::log(w);
    case EntropyKind::ExponentialTilting: return w * std::log(w) - w;
    case EntropyKind::ContrastEntropy: return (w - 1.0) * std::log(w - 1.0) - w * std::log(w);
    case EntropyKind::HellingerDistance: return -4.0 * std::sqrt(w);
    case EntropyKind::LogLog: return -std::log(std::log(w));
    case EntropyKind::Inverse: return 0.5 / w;
    case EntropyKind::Renyi: return std::pow(w, s.alpha + 1.0) / (s.alpha * (s.alpha + 1.0));
    }
    return 0.0;
}

double g_deriv_raw(const EntropySpec& s, double w) {
    switch (s.kind) {
    case EntropyKind::EmpiricalLikelihood: return -1.0 / w;
    case EntropyKind::ExponentialTilting: return std::log(w);
    case EntropyKind::ContrastEntropy: return std::log1p(-1.0 / w);
    case EntropyKind::HellingerDistance: return -2.0 / std::sqrt(w);
    case EntropyKind::LogLog: return -1.0 / (w * std::log(w));
    case EntropyKind::Inverse: return -0.5 / (w * w);
    case EntropyKind::Renyi: return std::pow(w, s.alpha) / s.alpha;
    }
    return 0.0;
}

double g_second_raw(const EntropySpec& s, double w) {
    switch (s.kind) {
    case EntropyKind::EmpiricalLikelihood: return 1.0 / (w * w);
    case EntropyKind::ExponentialTilting: return 1.0 / w;
    case EntropyKind::ContrastEntropy: return 1.0 / (w * (w - 1.0));
    case EntropyKind::HellingerDistance: return 1.0 / (w * std::sqrt(w));
    case EntropyKind::LogLog: {
        const double l = std::log(w);
        const double wl = w * l;
        return (1.0 + l) / (wl * wl);
    }
    case EntropyKind::Inverse: return 1.0 / (w * w * w);
    case EntropyKind::Renyi: return std::pow(w, s.alpha - 1.0);
    }
    return 0.0;
}

// Solves g(w) = nu in the parametrisation w = lo + exp(t), which maps the
// domain onto the real line and keeps precision near the lower endpoint.
double solve_link(const EntropySpec& s, double nu) {
    const double lo = s.domain_lo;
    auto w_of = [lo](double t) { return lo + std::exp(t); };
    auto h = [&](double t) { return g_deriv_raw(s, w_of(t)) - nu; };

    double a = 0.0;
    double b = 0.0;
    double ha = h(a);
    if (ha == 0.0) return w_of(a);
    double step = 1.0;
    if (ha < 0.0) {
        b = a + step;
        double hb = h(b);
        while (hb < 0.0) {
            a = b;
            step *= 2.0;
            b = a + step;
            if (b > 700.0) throw LinkRangeError(to_string(s), nu);
            hb = h(b);
        }
    } else {
        b = a;
        a = b - step;
        double hl = h(a);
        while (hl > 0.0) {
            b = a;
            step *= 2.0;
            a = b - step;
            if (a < -745.0) throw LinkRangeError(to_string(s), nu);
            hl = h(a);
        }
    }

    double t = 0.5 * (a + b);
    for (int it = 0; it < 300; ++it) {
        const double w = w_of(t);
        const double val = g_deriv_raw(s, w) - nu;
        if (val == 0.0) return w;
        if (val < 0.0) a = t; else b = t;
        const double slope = g_second_raw(s, w) * (w - lo);
        double next = t - val / slope;
        if (!(next > a && next < b) || !std::isfinite(next)) next = 0.5 * (a + b);
        if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t)) || b - a <= 1e-15 * std::max(1.0, std::abs(t))) {
            return w_of(next);
        }
        t = next;
    }
    return w_of(t);
}

double inverse_raw(const EntropySpec& s, double nu) {
    switch (s.kind) {
    case EntropyKind::EmpiricalLikelihood: return -1.0 / nu;
    case EntropyKind::ExponentialTilting: return std::exp(nu);
    case EntropyKind::ContrastEntropy: return -1.0 / std::expm1(nu);
    case EntropyKind::HellingerDistance: return 4.0 / (nu * nu);
    case EntropyKind::LogLog: return solve_link(s, nu);
    case EntropyKind::Inverse: return 1.0 / std::sqrt(-2.0 * nu);
    case EntropyKind::Renyi: return std::pow(s.alpha * nu, 1.0 / s.alpha);
    }
    return 0.0;
}

double inverse_deriv_raw(const EntropySpec& s, double nu, double f) {
    switch (s.kind) {
    case EntropyKind::EmpiricalLikelihood: return 1.0 / (nu * nu);
    case EntropyKind::ExponentialTilting: return f;
    case EntropyKind::ContrastEntropy: {
        const double e = std::exp(nu);
        const double d = -std::expm1(nu);
        return e / (d * d);
    }
    case EntropyKind::HellingerDistance: return -8.0 / (nu * nu * nu);
    case EntropyKind::LogLog: return 1.0 / g_second_raw(s, f);
    case EntropyKind::Inverse: return f * f * f;
    case EntropyKind::Renyi: return f / (s.alpha * nu);
    }
    return 0.0;
}

double conjugate_raw(const EntropySpec& s, double nu, double f) {
    switch (s.kind) {
    case EntropyKind::EmpiricalLikelihood: return -std::log(-nu) - 1.0;
    case EntropyKind::ExponentialTilting: return f;
    case EntropyKind::ContrastEntropy: return nu - std::log1p(-std::exp(nu));
    case EntropyKind::HellingerDistance: return -4.0 / nu;
    case EntropyKind::LogLog: return std::log(std::log(f)) + f * nu;
    case EntropyKind::Inverse: return -std::sqrt(-2.0 * nu);
    case EntropyKind::Renyi: return f * nu * s.alpha / (s.alpha + 1.0);
    }
    return 0.0;
}

std::string lower(std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    return v;
}

}  // namespace

EntropySpec EntropySpec::make(EntropyKind kind, double alpha) {
    EntropySpec s;
    s.kind = kind;
    s.domain_lo = 0.0;
    s.domain_hi = kInf;
    switch (kind) {
    case EntropyKind::ContrastEntropy:
    case EntropyKind::LogLog:
        s.domain_lo = 1.0;
        break;
    case EntropyKind::Renyi:
        s.alpha = renyi_alpha_checked(alpha);
        break;
    default:
        break;
    }
    return s;
}

std::string entropy_names() {
    return "el, et, contrast, hd, loglog, inverse, renyi:<alpha>";
}

EntropySpec parse_entropy(const std::string& name) {
    const std::string n = lower(name);
    if (n == "el") return EntropySpec::el();
    if (n == "et") return EntropySpec::et();
    if (n == "contrast") return EntropySpec::contrast();
    if (n == "hd") return EntropySpec::hd();
    if (n == "loglog") return EntropySpec::loglog();
    if (n == "inverse") return EntropySpec::inverse();
    if (n.rfind("renyi:", 0) == 0) {
        const std::string rest = n.substr(6);
        double a = 0.0;
        auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), a);
        if (ec != std::errc() || ptr != rest.data() + rest.size() || rest.empty()) {
            throw InvalidArgument("cannot parse renyi alpha in '" + name + "'");
        }
        return EntropySpec::renyi(a);
    }
    throw InvalidArgument("unknown entropy '" + name + "'; valid kinds: " + entropy_names());
}

std::string to_string(const EntropySpec& spec) {
    switch (spec.kind) {
    case EntropyKind::EmpiricalLikelihood: return "el";
    case EntropyKind::ExponentialTilting: return "et";
    case EntropyKind::ContrastEntropy: return "contrast";
    case EntropyKind::HellingerDistance: return "hd";
    case EntropyKind::LogLog: return "loglog";
    case EntropyKind::Inverse: return "inverse";
    case EntropyKind::Renyi: {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, spec.alpha);
        (void)ec;
        return "renyi:" + std::string(buf, ptr);
    }
    }
    return "unknown";
}

bool in_domain(const EntropySpec& spec, double w) {
    if (!std::isfinite(w)) return false;
    if (!(w > spec.domain_lo + kBoundaryTol)) return false;
    if (std::isfinite(spec.domain_hi) && !(w < spec.domain_hi - kBoundaryTol)) return false;
    return true;
}

double g_value(const EntropySpec& spec, double w) {
    check_domain(spec, w);
    return g_value_raw(spec, w);
}

double g_deriv(const EntropySpec& spec, double w) {
    check_domain(spec, w);
    return g_deriv_raw(spec, w);
}

double g_second(const EntropySpec& spec, double w) {
    check_domain(spec, w);
    return g_second_raw(spec, w);
}

std::pair<double, double> link_range(const EntropySpec& spec) {
    switch (spec.kind) {
    case EntropyKind::ExponentialTilting: return {-kInf, kInf};
    case EntropyKind::Renyi:
        if (spec.alpha > 0.0) return {0.0, kInf};
        return {-kInf, 0.0};
    default: return {-kInf, 0.0};
    }
}

bool in_link_range(const EntropySpec& spec, double nu) {
    if (!std::isfinite(nu)) return false;
    const auto [lo, hi] = link_range(spec);
    if (std::isfinite(lo) && !(nu > lo + kBoundaryTol)) return false;
    if (std::isfinite(hi) && !(nu < hi - kBoundaryTol)) return false;
    return true;
}

double g_inverse(const EntropySpec& spec, double nu) {
    check_range(spec, nu);
    const double f = inverse_raw(spec, nu);
    if (!std::isfinite(f)) throw LinkRangeError(to_string(spec), nu);
    return f;
}

double g_inverse_deriv(const EntropySpec& spec, double nu) {
    const double f = g_inverse(spec, nu);
    return inverse_deriv_raw(spec, nu, f);
}

double numeric_inverse_link(const EntropySpec& spec, double nu) {
    check_range(spec, nu);
    return solve_link(spec, nu);
}

double conjugate(const EntropySpec& spec, double nu) {
    const double f = g_inverse(spec, nu);
    return conjugate_raw(spec, nu, f);
}

bool dual_terms(const EntropySpec& spec, double nu, double& F, double& f, double& fprime) {
    if (!in_link_range(spec, nu)) return false;
    try {
        f = inverse_raw(spec, nu);
    } catch (const LinkRangeError&) {
        return false;
    }
    F = conjugate_raw(spec, nu, f);
    fprime = inverse_deriv_raw(spec, nu, f);
    return std::isfinite(f) && std::isfinite(F) && std::isfinite(fprime) && fprime > 0.0;
}

double debias_covariate(const EntropySpec& spec, double pi) {
    if (!(pi > 0.0) || !(pi <= 1.0)) throw DomainError(to_string(spec), 1.0 / pi, spec.domain_lo, spec.domain_hi);
    check_domain(spec, 1.0 / pi);
    switch (spec.kind) {
    case EntropyKind::EmpiricalLikelihood: return -pi;
    case EntropyKind::ExponentialTilting: return -std::log(pi);
    case EntropyKind::ContrastEntropy: return std::log1p(-pi);
    case EntropyKind::HellingerDistance: return -2.0 * std::sqrt(pi);
    case EntropyKind::LogLog: return pi / std::log(pi);
    case EntropyKind::Inverse: return -0.5 * pi * pi;
    case EntropyKind::Renyi: return std::pow(pi, -spec.alpha) / spec.alpha;
    }
    return 0.0;
}

double bregman(const EntropySpec& spec, double w, double w0) {
    check_domain(spec, w);
    check_domain(spec, w0);
    if (w == w0) return 0.0;
    const double d = g_value_raw(spec, w) - g_value_raw(spec, w0) - g_deriv_raw(spec, w0) * (w - w0);
    return std::max(d, 0.0);
}

}  // namespace gec
