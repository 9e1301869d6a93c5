#pragma once

#include <limits>
#include <string>
#include <utility>

namespace gec {

enum class EntropyKind {
    EmpiricalLikelihood,
    ExponentialTilting,
    ContrastEntropy,
    HellingerDistance,
    LogLog,
    Inverse,
    Renyi,
};

/// Convex generator G together with its open domain (domain_lo, domain_hi).
/// `alpha` is only meaningful for Renyi.
struct EntropySpec {
    EntropyKind kind = EntropyKind::EmpiricalLikelihood;
    double alpha = 0.0;
    double domain_lo = 0.0;
    double domain_hi = std::numeric_limits<double>::infinity();

    static EntropySpec make(EntropyKind kind, double alpha = 0.0);
    static EntropySpec el() { return make(EntropyKind::EmpiricalLikelihood); }
    static EntropySpec et() { return make(EntropyKind::ExponentialTilting); }
    static EntropySpec contrast() { return make(EntropyKind::ContrastEntropy); }
    static EntropySpec hd() { return make(EntropyKind::HellingerDistance); }
    static EntropySpec loglog() { return make(EntropyKind::LogLog); }
    static EntropySpec inverse() { return make(EntropyKind::Inverse); }
    static EntropySpec renyi(double alpha) { return make(EntropyKind::Renyi, alpha); }
};

/// Endpoint tolerance: arguments closer than this to a boundary are rejected.
inline constexpr double kBoundaryTol = 1e-12;

/// Parses "el", "et", "contrast", "hd", "loglog", "inverse" or "renyi:<alpha>".
EntropySpec parse_entropy(const std::string& name);
std::string to_string(const EntropySpec& spec);
/// Human readable list of accepted entropy names.
std::string entropy_names();

bool in_domain(const EntropySpec& spec, double w);

double g_value(const EntropySpec& spec, double w);
double g_deriv(const EntropySpec& spec, double w);
double g_second(const EntropySpec& spec, double w);

/// Open interval g(V) of values the link can take.
std::pair<double, double> link_range(const EntropySpec& spec);
bool in_link_range(const EntropySpec& spec, double nu);

/// f = g^{-1}.
double g_inverse(const EntropySpec& spec, double nu);
/// f'(nu) = 1 / g'(f(nu)).
double g_inverse_deriv(const EntropySpec& spec, double nu);
/// Generic inverse of the link by bracketing and safeguarded Newton; works
/// for every kind and is used where no closed form exists.
double numeric_inverse_link(const EntropySpec& spec, double nu);

/// F(nu) = -G(f(nu)) + f(nu) nu.
double conjugate(const EntropySpec& spec, double nu);

/// Non-throwing evaluation of F, f and f' at nu for the dual solvers.
/// Returns false when nu is outside the link range or a value overflows.
bool dual_terms(const EntropySpec& spec, double nu, double& F, double& f, double& fprime);

/// g(1/pi).
double debias_covariate(const EntropySpec& spec, double pi);

/// D_G(w || w0) = G(w) - G(w0) - g(w0)(w - w0).
double bregman(const EntropySpec& spec, double w, double w0);

}  // namespace gec
