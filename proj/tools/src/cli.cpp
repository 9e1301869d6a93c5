#include "gec/cli.hpp"

#include "gec/aipw.hpp"
#include "gec/bregman.hpp"
#include "gec/calibration.hpp"
#include "gec/data.hpp"
#include "gec/entropy.hpp"
#include "gec/errors.hpp"
#include "gec/highdim.hpp"
#include "gec/propensity.hpp"
#include "gec/simulation.hpp"
#include "gec/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace gec::cli {

namespace {

using json = nlohmann::ordered_json;

/// A flag value that failed validation; the message names the flag.
class UsageError : public std::runtime_error {
public:
    UsageError(const std::string& flag, const std::string& what) : std::runtime_error(flag + ": " + what) {}
};

/// A solver failure after the report has been assembled.
struct SolverFailure {
    json report;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

std::optional<double> parse_real(const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

template <class F>
auto with_flag(const std::string& flag, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InvalidArgument& e) {
        throw UsageError(flag, e.what());
    } catch (const DataError& e) {
        throw UsageError(flag, e.what());
    }
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (long i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json error_json(const std::exception& e) {
    json j;
    j["message"] = e.what();
    if (const auto* d = dynamic_cast<const DomainError*>(&e)) {
        j["type"] = "DomainError";
        j["value"] = number_or_null(d->value());
    } else if (const auto* l = dynamic_cast<const LinkRangeError*>(&e)) {
        j["type"] = "LinkRangeError";
        j["value"] = number_or_null(l->value());
        j["unit"] = l->unit();
    } else if (const auto* r = dynamic_cast<const RankDeficiencyError*>(&e)) {
        j["type"] = "RankDeficiencyError";
        j["columns"] = r->columns();
    } else if (dynamic_cast<const InfeasibleCalibration*>(&e)) {
        j["type"] = "InfeasibleCalibration";
    } else if (const auto* n = dynamic_cast<const NonConvergence*>(&e)) {
        j["type"] = "NonConvergence";
        j["residual"] = number_or_null(n->residual());
        j["iterations"] = n->iterations();
    } else {
        j["type"] = "Error";
    }
    return j;
}

json header(const std::string& command, const json& config) {
    json j;
    j["tool"] = "gec";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    return j;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path == "-" || path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("--out", "cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw UsageError("--out", "failed writing '" + path + "'");
}

// ---------------------------------------------------------------- options

struct DataOptions {
    std::string data;
    std::string outcome = "y";
    std::string response;
    std::string entropy = "el";
    std::string basis;
    std::string rp_cols;
    std::string rp_penalty;
    std::string q;
    std::string q_family;
    std::string kappa;
    std::string v_mode = "unit";
    std::string constraints;
    std::uint64_t seed = 1;
    std::string out = "-";
};

struct EstimateOptions : DataOptions {
    std::string estimator = "gec";
    std::string mode = "gec";
    std::string tau1 = "rate";
    std::string tau2 = "rate";
    long sparsity_hint = 0;
    double c1 = 0.5;
    double c2 = 0.5;
    double level = 0.95;
    std::string weights_out;
};

struct DiagnoseOptions : DataOptions {
    bool bregman = false;
    std::string baseline = "balance,debias";
    long top = 10;
};

struct SimulateOptions {
    std::string scenario = "O1V1";
    long B = 1000;
    std::uint64_t seed = 42;
    std::string roster = "all";
    std::string target = "super";
    long N = 0;
    long p = 0;
    int threads = 1;
    std::string out = "-";
    std::string diagnostics;
    std::string hd_entropies = "el,et,hd";
    std::string rp_penalty;
    double c1 = 0.5;
    double c2 = 0.5;
    long sparsity_hint = 0;
    double response_rate = 0.319;
    double level = 0.95;
};

void add_data_options(CLI::App* sub, DataOptions& o) {
    sub->add_option("--data", o.data, "Input CSV with a header row")->required();
    sub->add_option("--outcome", o.outcome, "Outcome column; blank cells are missing")->capture_default_str();
    sub->add_option("--response", o.response, "Optional 0/1 response indicator column");
    sub->add_option("--entropy", o.entropy, "Entropy: " + entropy_names())->capture_default_str();
    sub->add_option("--basis", o.basis, "Outcome basis, e.g. \"1,x1,x2,x1*x2,x2^2-1\" (default: all covariates)");
    sub->add_option("--rp-cols", o.rp_cols, "Response model covariates: names or 1-based indices, e.g. \"2,3\"");
    sub->add_option("--rp-penalty", o.rp_penalty, "L1 penalty of the response model: <real> or cv");
    sub->add_option("--q", o.q, "Weight function: unit, power:auto or power:<kappa>");
    sub->add_option("--q-family", o.q_family, "Weight function family: unit or power");
    sub->add_option("--kappa", o.kappa, "Exponent of q = pi^(kappa-1): <real> or auto");
    sub->add_option("--v-mode", o.v_mode, "Variance proxy for kappa selection: unit or residual")->capture_default_str();
    sub->add_option("--constraints", o.constraints, "Constraint set: balance[,debias][,orthogonal]");
    sub->add_option("--seed", o.seed, "Seed for cross-validation folds")->capture_default_str();
    sub->add_option("--out", o.out, "Output path, - for stdout")->capture_default_str();
}

// ------------------------------------------------------- shared resolution

struct Resolved {
    ObservedData data;
    EntropySpec entropy;
    BasisSpec basis_spec;
    Mat basis;
    std::vector<std::string> basis_labels;
    std::vector<long> rp_columns;
    std::optional<std::string> rp_penalty;  ///< "cv" or a real
    QFamily q_family = QFamily::Unit;
    std::optional<double> kappa;             ///< empty with power family means auto
    VMode v_mode = VMode::Unit;
};

std::vector<long> parse_columns(const std::string& flag, const std::string& text, const ObservedData& data) {
    std::vector<long> cols;
    for (const std::string& tok : split(text)) {
        long j = data.column_index(tok);
        if (j < 0) {
            long k = 0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), k);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
                throw UsageError(flag, "unknown column '" + tok + "'");
            }
            if (k < 1 || k > data.p0()) {
                throw UsageError(flag, "column index " + tok + " outside 1.." + std::to_string(data.p0()));
            }
            j = k - 1;
        }
        if (std::find(cols.begin(), cols.end(), j) != cols.end()) throw UsageError(flag, "column '" + tok + "' repeated");
        cols.push_back(j);
    }
    return cols;
}

/// Flag checks that do not need the data.
void validate_static(const DataOptions& o, Resolved& r) {
    r.entropy = with_flag("--entropy", [&] { return parse_entropy(o.entropy); });
    if (!o.constraints.empty()) with_flag("--constraints", [&] { return parse_constraints(o.constraints); });
    const std::string vm = lower(trim(o.v_mode));
    if (vm == "unit") r.v_mode = VMode::Unit;
    else if (vm == "residual") r.v_mode = VMode::SquaredResidual;
    else throw UsageError("--v-mode", "expected unit or residual, got '" + o.v_mode + "'");
    if (!o.rp_penalty.empty()) {
        const std::string t = lower(trim(o.rp_penalty));
        if (t != "cv") {
            const auto v = parse_real(t);
            if (!v || *v < 0.0) throw UsageError("--rp-penalty", "expected a nonnegative number or cv");
        }
        r.rp_penalty = t;
    }
    if (!o.q.empty() && (!o.q_family.empty() || !o.kappa.empty())) {
        throw UsageError("--q", "cannot be combined with --q-family or --kappa");
    }
    std::string family = "unit";
    std::string kappa;
    if (!o.q.empty()) {
        const std::string t = lower(trim(o.q));
        if (t == "unit") {
            family = "unit";
        } else if (t.rfind("power:", 0) == 0) {
            family = "power";
            kappa = t.substr(6);
        } else {
            throw UsageError("--q", "expected unit, power:auto or power:<kappa>, got '" + o.q + "'");
        }
    } else {
        if (!o.q_family.empty()) family = lower(trim(o.q_family));
        if (!o.kappa.empty()) {
            kappa = lower(trim(o.kappa));
            if (o.q_family.empty()) family = "power";
        }
        if (family != "unit" && family != "power") throw UsageError("--q-family", "expected unit or power");
        if (family == "unit" && !o.kappa.empty()) throw UsageError("--kappa", "requires --q-family power");
    }
    if (family == "power") {
        r.q_family = QFamily::PropensityPower;
        if (kappa.empty() || kappa == "auto") {
            r.kappa.reset();
        } else {
            const auto v = parse_real(kappa);
            if (!v) throw UsageError(o.q.empty() ? "--kappa" : "--q", "invalid kappa '" + kappa + "'");
            r.kappa = *v;
        }
    }
}

void load_and_resolve(const DataOptions& o, Resolved& r, bool rp_cols_required) {
    r.data = with_flag("--data", [&] {
        return load_csv(o.data, o.outcome, o.response.empty() ? std::nullopt : std::optional<std::string>(o.response));
    });
    std::vector<long> all(r.data.p0());
    for (long j = 0; j < r.data.p0(); ++j) all[j] = j;
    if (o.rp_cols.empty()) {
        if (rp_cols_required) throw UsageError("--rp-cols", "the response model covariates must be given explicitly");
        r.rp_columns = all;
    } else {
        r.rp_columns = parse_columns("--rp-cols", o.rp_cols, r.data);
    }
    r.basis_spec = o.basis.empty() ? BasisSpec::linear(all)
                                   : with_flag("--basis", [&] { return parse_basis(o.basis, r.data.names()); });
    r.basis = with_flag("--basis", [&] { return build_basis(r.data, r.basis_spec); });
    r.basis_labels = r.basis_spec.labels(r.data.names());
}

PropensityFit fit_response_model(const DataOptions& o, const Resolved& r, json& config) {
    if (!r.rp_penalty) {
        config["rp_penalty"] = nullptr;
        return fit_logistic(r.data, r.rp_columns);
    }
    double penalty = 0.0;
    if (*r.rp_penalty == "cv") {
        const CvResult cv = cv_logistic_l1(rp_design(r.data.x(), r.rp_columns), r.data.delta(), o.seed);
        penalty = cv.penalty;
        config["rp_penalty_cv"] = true;
    } else {
        penalty = *parse_real(*r.rp_penalty);
    }
    config["rp_penalty"] = penalty;
    return fit_logistic_l1(r.data, penalty, r.rp_columns);
}

json propensity_json(const PropensityFit& fit) {
    json j;
    j["phi_hat"] = vec_json(fit.phi_hat);
    j["regularized"] = fit.regularized;
    j["separation"] = fit.separation;
    j["warnings"] = fit.warnings;
    j["iterations"] = fit.iterations;
    return j;
}

std::vector<std::string> column_names(const ObservedData& data, const std::vector<long>& cols) {
    std::vector<std::string> out;
    for (long j : cols) out.push_back(data.names()[j]);
    return out;
}

json base_config(const DataOptions& o, const Resolved& r) {
    json c;
    c["data"] = o.data;
    c["outcome"] = o.outcome;
    c["response"] = o.response.empty() ? json(nullptr) : json(o.response);
    c["entropy"] = to_string(r.entropy);
    c["basis"] = r.basis_labels;
    c["rp_cols"] = column_names(r.data, r.rp_columns);
    c["q_family"] = r.q_family == QFamily::Unit ? "unit" : "power";
    c["kappa"] = r.q_family == QFamily::Unit ? json(nullptr) : (r.kappa ? json(*r.kappa) : json("auto"));
    c["v_mode"] = r.v_mode == VMode::Unit ? "unit" : "residual";
    c["seed"] = o.seed;
    c["out"] = o.out;
    return c;
}

QWeights resolve_q(const Resolved& r, const PropensityFit& fit, const std::function<double()>& auto_kappa, json& config,
                   json& result) {
    if (r.q_family == QFamily::Unit) return QWeights::unit(r.data.N());
    const double kappa = r.kappa ? *r.kappa : auto_kappa();
    result["kappa"] = kappa;
    config["kappa_resolved"] = kappa;
    return QWeights::power(fit.pi_hat, kappa);
}

json residual_json(const std::vector<std::string>& labels, const Vec& residual) {
    json j;
    for (std::size_t k = 0; k < labels.size(); ++k) j[labels[k]] = residual(static_cast<long>(k));
    return j;
}

void write_weights(const std::string& path, const Vec& omega) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("--weights-out", "cannot open '" + path + "' for writing");
    f << "index,omega\n";
    char buf[64];
    for (long i = 0; i < omega.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%ld,%.17g\n", i, omega(i));
        f << buf;
    }
}

// --------------------------------------------------------------- estimate

json run_estimate(const EstimateOptions& o) {
    Resolved r;
    validate_static(o, r);
    const std::string estimator = lower(trim(o.estimator));
    const std::string mode = lower(trim(o.mode));
    if (estimator != "gec" && estimator != "ipw" && estimator != "aipw") {
        throw UsageError("--estimator", "expected gec, ipw or aipw, got '" + o.estimator + "'");
    }
    if (mode != "gec" && mode != "hd") throw UsageError("--mode", "expected gec or hd, got '" + o.mode + "'");
    if (mode == "hd") {
        if (!o.constraints.empty()) {
            throw UsageError("--constraints", "not allowed with --mode hd (the soft calibration fixes its constraints)");
        }
        if (estimator != "gec") throw UsageError("--estimator", "--mode hd only runs the gec estimator");
        if (r.q_family == QFamily::PropensityPower && !r.kappa) {
            throw UsageError("--kappa", "automatic kappa selection is not available with --mode hd");
        }
    }
    if (estimator != "gec" && !o.constraints.empty()) {
        throw UsageError("--constraints", "only applies to --estimator gec");
    }
    if (!(o.level > 0.0 && o.level < 1.0)) throw UsageError("--level", "must lie in (0, 1)");
    std::optional<double> tau1;
    std::optional<double> tau2;
    for (auto [flag, text, dst] : {std::tuple{"--tau1", &o.tau1, &tau1}, std::tuple{"--tau2", &o.tau2, &tau2}}) {
        const std::string t = lower(trim(*text));
        if (t == "rate") continue;
        const auto v = parse_real(t);
        if (!v || *v < 0.0) throw UsageError(flag, "expected a nonnegative number or rate");
        *dst = *v;
    }
    if (o.sparsity_hint < 0) throw UsageError("--sparsity-hint", "must be positive");

    load_and_resolve(o, r, mode != "hd");
    json config = base_config(o, r);
    config["estimator"] = estimator;
    config["mode"] = mode;
    config["level"] = o.level;
    const ConstraintSet constraints = o.constraints.empty() ? ConstraintSet{} : parse_constraints(o.constraints);
    if (estimator == "gec" && mode == "gec") config["constraints"] = to_string(constraints);
    json result;
    try {
        Resolved& rr = r;
        if (mode == "hd") {
            if (!rr.rp_penalty) rr.rp_penalty = "cv";
            const PropensityFit fit = fit_response_model(o, rr, config);
            const QWeights q = resolve_q(rr, fit, [] { return 1.0; }, config, result);
            const long pen_dim = rr.basis.cols() + fit.d();
            const auto taus = default_taus(rr.data.n(), pen_dim,
                                           o.sparsity_hint > 0 ? std::optional<long>(o.sparsity_hint) : std::nullopt,
                                           o.c1, o.c2);
            SoftCalibConfig cfg;
            cfg.tau1 = tau1 ? *tau1 : taus.first;
            cfg.tau2 = tau2 ? *tau2 : taus.second;
            config["tau1"] = cfg.tau1;
            config["tau2"] = cfg.tau2;
            config["c1"] = o.c1;
            config["c2"] = o.c2;
            config["sparsity_hint"] = o.sparsity_hint > 0 ? json(o.sparsity_hint) : json(nullptr);
            const HdResult hd = run_gec_hd(rr.data, rr.basis, fit, rr.entropy, q, cfg, o.level);
            const SoftDualSolution& s = hd.solution.dual;
            result["theta_hat"] = hd.estimate.theta_hat;
            result["v_hat"] = hd.estimate.v_hat;
            result["ci_lo"] = hd.estimate.ci_lo;
            result["ci_hi"] = hd.estimate.ci_hi;
            result["entropy"] = to_string(rr.entropy);
            result["kappa"] = rr.q_family == QFamily::Unit ? json(nullptr) : json(q.kappa);
            json cr;
            cr["normalisation"] = s.exact_residual(0);
            cr["debias"] = s.exact_residual(1);
            cr["projection"] = s.exact_residual(2);
            cr["soft_max"] = s.soft_residual.size() ? s.soft_residual.cwiseAbs().maxCoeff() : 0.0;
            result["constraint_residuals"] = cr;
            result["solver"] = {{"iterations", s.iterations},
                                {"fista_iterations", s.fista_iterations},
                                {"kkt_residual", s.kkt_residual},
                                {"objective", s.objective}};
            result["multipliers"] = {{"lam1", s.lam1}, {"lam2", s.lam2}, {"lam3", s.lam3}, {"lam4", vec_json(s.lam4)}};
            result["gamma_hd"] = vec_json(hd.gamma.coef);
            result["propensity"] = propensity_json(fit);
            if (!o.weights_out.empty()) write_weights(o.weights_out, hd.solution.weights.omega);
        } else {
            const PropensityFit fit = fit_response_model(o, rr, config);
            result["propensity"] = propensity_json(fit);
            if (estimator == "ipw") {
                const BaselineEstimate b = ipw_estimate(rr.data, fit);
                result["theta_hat"] = b.theta_hat;
            } else if (estimator == "aipw") {
                const QWeights q = resolve_q(
                    rr, fit, [&] { return select_kappa(rr.data, fit, rr.basis, rr.v_mode).kappa; }, config, result);
                const BaselineEstimate b = aipw_estimate(rr.data, fit, rr.basis, q);
                result["theta_hat"] = b.theta_hat;
                result["beta"] = vec_json(b.beta);
            } else {
                const QWeights q = resolve_q(
                    rr, fit,
                    [&] {
                        return select_kappa_gec(rr.data, rr.basis, fit, rr.entropy, constraints, rr.v_mode).kappa;
                    },
                    config, result);
                const GecResult g = run_gec(rr.data, rr.basis, fit, rr.entropy, q, constraints, o.level, rr.basis_labels);
                result["theta_hat"] = g.estimate.theta_hat;
                result["v_hat"] = g.estimate.v_hat;
                result["ci_lo"] = g.estimate.ci_lo;
                result["ci_hi"] = g.estimate.ci_hi;
                result["level"] = o.level;
                result["entropy"] = to_string(rr.entropy);
                if (!result.contains("kappa")) result["kappa"] = nullptr;
                result["constraint_residuals"] = residual_json(g.design.labels, g.weights.residual);
                result["solver"] = {{"iterations", g.dual.iterations},
                                    {"grad_norm", g.dual.grad_norm},
                                    {"grad_norm_scaled", g.dual.grad_norm_scaled},
                                    {"line_search_backtracks", g.dual.line_search_backtracks},
                                    {"gradient_steps", g.dual.gradient_steps}};
                result["lambda"] = vec_json(g.dual.lambda);
                result["gamma"] = vec_json(g.estimate.gamma.coef);
                result["eta"] = vec_json(g.estimate.eta);
                if (!o.weights_out.empty()) write_weights(o.weights_out, g.weights.omega);
            }
            result["estimator"] = estimator;
        }
    } catch (const InvalidArgument&) {
        throw;
    } catch (const DataError&) {
        throw;
    } catch (const Error& e) {
        json rep = header("estimate", config);
        rep["status"] = "failed";
        rep["error"] = error_json(e);
        throw SolverFailure{rep};
    }
    json rep = header("estimate", config);
    rep["status"] = "ok";
    rep["N"] = r.data.N();
    rep["n"] = r.data.n();
    for (auto it = result.begin(); it != result.end(); ++it) rep[it.key()] = it.value();
    return rep;
}

// --------------------------------------------------------------- diagnose

json run_diagnose(const DiagnoseOptions& o) {
    Resolved r;
    validate_static(o, r);
    if (!o.bregman) throw UsageError("--bregman", "select a diagnostic (currently only --bregman)");
    const ConstraintSet sub = with_flag("--baseline", [&] { return parse_constraints(o.baseline); });
    if (o.top < 0) throw UsageError("--top", "must be nonnegative");
    ConstraintSet full;
    full.orthogonal = true;
    if (!o.constraints.empty()) full = parse_constraints(o.constraints);
    if ((sub.debias && !full.debias) || (sub.orthogonal && !full.orthogonal)) {
        throw UsageError("--baseline", "must be a subset of --constraints");
    }
    load_and_resolve(o, r, true);
    json config = base_config(o, r);
    config["constraints"] = to_string(full);
    config["baseline"] = to_string(sub);
    config["top"] = o.top;
    json result;
    try {
        const PropensityFit fit = fit_response_model(o, r, config);
        const QWeights q = resolve_q(
            r, fit, [&] { return select_kappa_gec(r.data, r.basis, fit, r.entropy, sub, r.v_mode).kappa; }, config,
            result);
        const AugmentedDesign dfull = build_design(r.data, r.basis, fit, r.entropy, q, full, r.basis_labels);
        const AugmentedDesign dsub = build_design(r.data, r.basis, fit, r.entropy, q, sub, r.basis_labels);
        Vec omega0 = Vec::Zero(r.data.N());
        for (long i = 0; i < r.data.N(); ++i) if (r.data.responded(i)) omega0(i) = 1.0 / fit.pi_hat(i);
        const BregmanReport b = nested_decomposition(r.entropy, dfull, dsub, omega0);
        result["total"] = b.total;
        result["baseline"] = b.baseline;
        result["extras"] = b.extras;
        result["ratio"] = b.ratio;
        result["additivity_residual"] = b.additivity_residual;
        json top = json::array();
        for (long k = 0; k < std::min<long>(o.top, static_cast<long>(b.per_unit.size())); ++k) {
            top.push_back({{"index", b.per_unit[k].index}, {"contribution", b.per_unit[k].contribution}});
        }
        result["top_units"] = top;
    } catch (const InvalidArgument&) {
        throw;
    } catch (const DataError&) {
        throw;
    } catch (const Error& e) {
        json rep = header("diagnose", config);
        rep["status"] = "failed";
        rep["error"] = error_json(e);
        throw SolverFailure{rep};
    }
    json rep = header("diagnose", config);
    rep["status"] = "ok";
    for (auto it = result.begin(); it != result.end(); ++it) rep[it.key()] = it.value();
    return rep;
}

// --------------------------------------------------------------- simulate

std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string summary_csv(const SimSummary& s, const json& config) {
    std::string out = "# gec " + std::string(kVersion) + "\n# config " + config.dump() + "\n";
    out += "estimator,replications,failures,bias_x1e3,rmse_x1e3,mcse_bias_x1e3,mcse_rmse_x1e3,"
           "var_rel_bias,mcse_var_rel_bias,coverage,mcse_coverage\n";
    for (const auto& r : s.rows) {
        out += r.name + "," + std::to_string(r.replications) + "," + std::to_string(r.failures) + "," +
               fmt(1e3 * r.bias) + "," + fmt(1e3 * r.rmse) + "," + fmt(1e3 * r.mcse_bias) + "," +
               fmt(1e3 * r.mcse_rmse) + "," + fmt(r.var_rel_bias) + "," + fmt(r.mcse_var_rel_bias) + "," +
               fmt(r.coverage) + "," + fmt(r.mcse_coverage) + "\n";
    }
    return out;
}

json summary_json(const SimSummary& s, const json& config) {
    json j = header("simulate", config);
    j["study"] = s.study;
    j["target"] = to_string(s.target);
    j["mean_response_rate"] = s.mean_response_rate;
    json rows = json::array();
    for (const auto& r : s.rows) {
        rows.push_back({{"estimator", r.name},
                        {"replications", r.replications},
                        {"failures", r.failures},
                        {"bias", number_or_null(r.bias)},
                        {"rmse", number_or_null(r.rmse)},
                        {"variance", number_or_null(r.variance)},
                        {"coverage", number_or_null(r.coverage)},
                        {"max_constraint_residual", r.max_residual},
                        {"max_soft_excess", r.max_soft_excess},
                        {"max_slackness_violation", r.max_slackness},
                        {"mean_iterations", r.mean_iterations},
                        {"mean_kappa", r.mean_kappa ? json(*r.mean_kappa) : json(nullptr)},
                        {"failure_messages", r.failure_messages}});
    }
    j["estimators"] = rows;
    return j;
}

HdSettings hd_settings(const SimulateOptions& o) {
    HdSettings h;
    h.entropies.clear();
    for (const std::string& t : split(o.hd_entropies)) {
        h.entropies.push_back(with_flag("--hd-entropies", [&] { return parse_entropy(t); }));
    }
    if (h.entropies.empty()) throw UsageError("--hd-entropies", "at least one entropy is required");
    h.c1 = o.c1;
    h.c2 = o.c2;
    if (o.sparsity_hint > 0) h.sparsity_hint = o.sparsity_hint;
    if (!o.rp_penalty.empty()) {
        const std::string t = lower(trim(o.rp_penalty));
        if (t == "cv") {
            h.cv = true;
        } else {
            const auto v = parse_real(t);
            if (!v || *v < 0.0) throw UsageError("--rp-penalty", "expected a nonnegative number or cv");
            h.rp_penalty = *v;
        }
    }
    return h;
}

int run_simulate(const SimulateOptions& o, std::ostream& out) {
    if (o.B < 1) throw UsageError("--B", "must be positive");
    if (o.threads < 0) throw UsageError("--threads", "must be nonnegative");
    if (!(o.level > 0.0 && o.level < 1.0)) throw UsageError("--level", "must lie in (0, 1)");
    const std::string sc = lower(trim(o.scenario));
    SimOptions opts;
    opts.threads = o.threads;
    opts.level = o.level;
    json config;
    config["scenario"] = o.scenario;
    config["B"] = o.B;
    config["seed"] = o.seed;
    config["level"] = o.level;
    SimSummary summary;
    if (sc == "hd" || sc == "nhanes") {
        const HdSettings h = hd_settings(o);
        json ents = json::array();
        for (const auto& e : h.entropies) ents.push_back(to_string(e));
        config["hd_entropies"] = ents;
        config["c1"] = h.c1;
        config["c2"] = h.c2;
        config["sparsity_hint"] = h.sparsity_hint ? json(*h.sparsity_hint) : json(nullptr);
        config["rp_penalty"] = h.cv ? json("cv") : number_or_null(h.rp_penalty);
        config["target"] = "finite";
        if (sc == "hd") {
            HdStudy st;
            st.B = o.B;
            st.seed = o.seed;
            st.settings = h;
            if (o.N > 0) st.N = o.N;
            if (o.p > 0) st.p = o.p;
            config["N"] = st.N;
            config["p"] = st.p;
            summary = with_flag("--scenario", [&] { return run_hd_study(st, opts); });
        } else {
            NhanesLikeStudy st;
            st.B = o.B;
            st.seed = o.seed;
            st.settings = h;
            st.response_rate = o.response_rate;
            if (o.N > 0) st.N = o.N;
            if (o.p > 0) st.p = o.p;
            config["N"] = st.N;
            config["p"] = st.p;
            config["response_rate"] = st.response_rate;
            summary = with_flag("--scenario", [&] { return nhanes_like_study(st, opts); });
        }
    } else {
        const std::vector<std::string> roster = with_flag("--roster", [&] { return parse_roster(o.roster); });
        config["roster"] = roster;
        if (sc == "dr-outcome" || sc == "dr-propensity") {
            DrStudy st;
            st.design = sc == "dr-outcome" ? DrDesign::CorrectOutcome : DrDesign::CorrectPropensity;
            st.B = o.B;
            st.seed = o.seed;
            if (o.N > 0) st.N = o.N;
            config["N"] = st.N;
            config["target"] = "finite";
            summary = with_flag("--N", [&] { return run_dr_study(st, roster, opts); });
        } else {
            SimScenario s = with_flag("--scenario", [&] { return parse_scenario(o.scenario); });
            s.B = o.B;
            s.seed = o.seed;
            s.target = with_flag("--target", [&] { return parse_target(o.target); });
            if (o.N > 0) s.N = o.N;
            config["N"] = s.N;
            config["strata_sizes"] = s.strata_sizes;
            config["target"] = to_string(s.target);
            summary = with_flag("--N", [&] { return run_monte_carlo(s, roster, opts); });
        }
    }
    const std::string csv = summary_csv(summary, config);
    write_text(o.out, csv, out);
    std::string sidecar = o.diagnostics;
    if (sidecar.empty() && o.out != "-" && !o.out.empty()) sidecar = o.out + ".json";
    if (!sidecar.empty()) {
        std::ofstream f(sidecar, std::ios::binary);
        if (!f) throw UsageError("--diagnostics", "cannot open '" + sidecar + "' for writing");
        f << summary_json(summary, config).dump(2) << "\n";
    }
    return kExitOk;
}

// ------------------------------------------------------------------- app

struct App {
    CLI::App app{"Generalized entropy calibration for a population mean under missing at random", "gec"};
    CLI::App* estimate = nullptr;
    CLI::App* simulate = nullptr;
    CLI::App* diagnose = nullptr;
    EstimateOptions eo;
    SimulateOptions so;
    DiagnoseOptions dopt;

    App() {
        app.set_version_flag("--version", std::string("gec ") + kVersion);
        app.require_subcommand(1);

        estimate = app.add_subcommand("estimate", "Estimate the population mean from one dataset");
        add_data_options(estimate, eo);
        estimate->add_option("--estimator", eo.estimator, "gec, ipw or aipw")->capture_default_str();
        estimate->add_option("--mode", eo.mode, "gec (exact calibration) or hd (soft calibration)")
            ->capture_default_str();
        estimate->add_option("--tau1", eo.tau1, "Lasso penalty for --mode hd: <real> or rate")->capture_default_str();
        estimate->add_option("--tau2", eo.tau2, "Soft balance tolerance for --mode hd: <real> or rate")
            ->capture_default_str();
        estimate->add_option("--sparsity-hint", eo.sparsity_hint, "Sparsity s in the tau2 rate (default ceil(sqrt p))");
        estimate->add_option("--c1", eo.c1, "Constant of the tau1 rate")->capture_default_str();
        estimate->add_option("--c2", eo.c2, "Constant of the tau2 rate")->capture_default_str();
        estimate->add_option("--level", eo.level, "Confidence level")->capture_default_str();
        estimate->add_option("--weights-out", eo.weights_out, "Optional CSV of the calibration weights");

        simulate = app.add_subcommand("simulate", "Monte Carlo study");
        simulate->add_option("--scenario", so.scenario, "O1V1, O1V2, O2V1, O2V2, dr-outcome, dr-propensity, hd or nhanes")
            ->capture_default_str();
        simulate->add_option("--B", so.B, "Number of replications")->capture_default_str();
        simulate->add_option("--seed", so.seed, "Master seed")->capture_default_str();
        simulate->add_option("--roster", so.roster, "all or a list such as IPW,AIPW1,EL3")->capture_default_str();
        simulate->add_option("--target", so.target, "super (E(Y)) or finite (population mean)")->capture_default_str();
        simulate->add_option("--N", so.N, "Population size override");
        simulate->add_option("--p", so.p, "Covariate dimension override (hd, nhanes)");
        simulate->add_option("--threads", so.threads, "Worker threads, 0 for all cores")
            ->envname("GEC_THREADS")
            ->capture_default_str();
        simulate->add_option("--out", so.out, "CSV table path, - for stdout")->capture_default_str();
        simulate->add_option("--diagnostics", so.diagnostics, "JSON sidecar path (default <out>.json)");
        simulate->add_option("--hd-entropies", so.hd_entropies, "Entropies of the GEC-HD estimators")
            ->capture_default_str();
        simulate->add_option("--rp-penalty", so.rp_penalty, "L1 penalty of the response model: <real> or cv");
        simulate->add_option("--c1", so.c1, "Constant of the tau1 rate")->capture_default_str();
        simulate->add_option("--c2", so.c2, "Constant of the tau2 rate")->capture_default_str();
        simulate->add_option("--sparsity-hint", so.sparsity_hint, "Sparsity s in the tau2 rate");
        simulate->add_option("--response-rate", so.response_rate, "Target response rate (nhanes)")
            ->capture_default_str();
        simulate->add_option("--level", so.level, "Confidence level")->capture_default_str();

        diagnose = app.add_subcommand("diagnose", "Divergence diagnostics of the calibration weights");
        add_data_options(diagnose, dopt);
        diagnose->add_flag("--bregman", dopt.bregman, "Nested Bregman decomposition of D(w_hat || 1/pi)");
        diagnose->add_option("--baseline", dopt.baseline, "Reduced constraint set")->capture_default_str();
        diagnose->add_option("--top", dopt.top, "Number of largest unit contributions to report")
            ->capture_default_str();

        std::string footer = "\nSubcommand flags:\n";
        for (CLI::App* sub : {estimate, simulate, diagnose}) footer += "\n" + sub->help();
        footer += "\nExit codes: 0 success, 1 invalid input, 2 solver failure (report still written).\n";
        app.footer(footer);
    }
};

}  // namespace

std::string help_text() {
    App a;
    return a.app.help();
}

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    App a;
    try {
        a.app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << a.app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << a.app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << "gec " << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    std::string out_path = "-";
    try {
        if (a.estimate->parsed()) {
            out_path = a.eo.out;
            write_text(out_path, run_estimate(a.eo).dump(2) + "\n", out);
        } else if (a.diagnose->parsed()) {
            out_path = a.dopt.out;
            write_text(out_path, run_diagnose(a.dopt).dump(2) + "\n", out);
        } else {
            return run_simulate(a.so, out);
        }
        return kExitOk;
    } catch (const SolverFailure& f) {
        try {
            write_text(out_path, f.report.dump(2) + "\n", out);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
        }
        err << "solver failure: " << f.report["error"]["message"].get<std::string>() << "\n";
        return kExitSolver;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        err << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    }
}

}  // namespace gec::cli
