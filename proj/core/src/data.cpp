#include "gec/data.hpp"

#include "gec/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gec {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r' || s[a] == '"')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '"')) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e;
}

std::string var_name(long j, const std::vector<std::string>& names) {
    if (j >= 0 && j < static_cast<long>(names.size())) return names[j];
    return "x" + std::to_string(j + 1);
}

long resolve_variable(const std::string& token, const std::vector<std::string>& names) {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == token) return static_cast<long>(j);
    }
    if (token.size() > 1 && token[0] == 'x') {
        long k = 0;
        auto [ptr, ec] = std::from_chars(token.data() + 1, token.data() + token.size(), k);
        if (ec == std::errc() && ptr == token.data() + token.size() && k >= 1 &&
            (names.empty() || k <= static_cast<long>(names.size()))) {
            return k - 1;
        }
    }
    throw InvalidArgument("unknown basis variable '" + token + "'");
}

}  // namespace

ObservedData::ObservedData(Mat x, const Vec& y, const std::vector<bool>& responded, std::vector<std::string> names)
    : x_(std::move(x)), names_(std::move(names)) {
    const long N = x_.rows();
    if (y.size() != N || static_cast<long>(responded.size()) != N) {
        throw DataError("outcome and indicator lengths must equal the number of rows");
    }
    if (names_.empty()) {
        for (long j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
    }
    if (static_cast<long>(names_.size()) != x_.cols()) throw DataError("covariate name count mismatch");
    if (!x_.allFinite()) throw DataError("covariates must be finite");
    delta_ = Vec::Zero(N);
    dy_ = Vec::Zero(N);
    n_ = 0;
    for (long i = 0; i < N; ++i) {
        if (!responded[i]) continue;
        if (!std::isfinite(y(i))) throw DataError("non-finite outcome at responding unit " + std::to_string(i));
        delta_(i) = 1.0;
        dy_(i) = y(i);
        ++n_;
    }
    if (n_ == 0) throw DataError("no responding units");
}

long ObservedData::column_index(const std::string& name) const {
    for (std::size_t j = 0; j < names_.size(); ++j) {
        if (names_[j] == name) return static_cast<long>(j);
    }
    return -1;
}

double ObservedData::outcome(long i) const {
    if (i < 0 || i >= N()) throw DataError("unit index out of range");
    if (!responded(i)) throw DataError("outcome of non-responding unit " + std::to_string(i) + " is not observed");
    return dy_(i);
}

std::vector<long> ObservedData::responder_indices() const {
    std::vector<long> out;
    out.reserve(n_);
    for (long i = 0; i < N(); ++i) if (responded(i)) out.push_back(i);
    return out;
}

BasisSpec::BasisSpec(std::vector<BasisTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty() || terms_.front().type != TermType::Intercept) {
        throw InvalidArgument("the first basis term must be the intercept");
    }
}

BasisSpec BasisSpec::linear(const std::vector<long>& columns) {
    std::vector<BasisTerm> t{BasisTerm::intercept()};
    for (long j : columns) t.push_back(BasisTerm::column(j));
    return BasisSpec(std::move(t));
}

std::vector<std::string> BasisSpec::labels(const std::vector<std::string>& names) const {
    std::vector<std::string> out;
    for (const auto& t : terms_) {
        switch (t.type) {
        case TermType::Intercept: out.push_back("1"); break;
        case TermType::Column: out.push_back(var_name(t.j, names)); break;
        case TermType::Interaction: out.push_back(var_name(t.j, names) + "*" + var_name(t.k, names)); break;
        case TermType::CenteredSquare: {
            std::ostringstream os;
            os << var_name(t.j, names) << "^2";
            if (t.offset != 0.0) os << (t.offset > 0 ? "-" : "+") << std::abs(t.offset);
            out.push_back(os.str());
            break;
        }
        }
    }
    return out;
}

BasisSpec parse_basis(const std::string& text, const std::vector<std::string>& names) {
    std::vector<BasisTerm> terms;
    std::istringstream is(text);
    std::string raw;
    while (std::getline(is, raw, ',')) {
        std::string tok;
        for (char c : raw) if (c != ' ' && c != '\t') tok.push_back(c);
        if (tok.empty()) throw InvalidArgument("empty basis term in '" + text + "'");
        if (tok == "1") {
            if (!terms.empty()) throw InvalidArgument("intercept must be the first basis term");
            terms.push_back(BasisTerm::intercept());
            continue;
        }
        if (terms.empty()) terms.push_back(BasisTerm::intercept());
        const auto star = tok.find('*');
        const auto caret = tok.find("^2");
        if (star != std::string::npos) {
            terms.push_back(BasisTerm::interaction(resolve_variable(tok.substr(0, star), names),
                                                   resolve_variable(tok.substr(star + 1), names)));
        } else if (caret != std::string::npos) {
            const long j = resolve_variable(tok.substr(0, caret), names);
            const std::string rest = tok.substr(caret + 2);
            double off = 0.0;
            if (!rest.empty()) {
                if (!parse_double(rest, off)) throw InvalidArgument("cannot parse basis term '" + tok + "'");
                off = -off;
            }
            terms.push_back(BasisTerm::centered_square(j, off));
        } else {
            terms.push_back(BasisTerm::column(resolve_variable(tok, names)));
        }
    }
    if (terms.empty()) terms.push_back(BasisTerm::intercept());
    return BasisSpec(std::move(terms));
}

Mat build_basis(const Mat& x, const BasisSpec& spec) {
    const long N = x.rows();
    const long p0 = x.cols();
    Mat B(N, spec.p());
    for (long c = 0; c < spec.p(); ++c) {
        const auto& t = spec.terms()[c];
        auto check = [&](long j) {
            if (j < 0 || j >= p0) throw InvalidArgument("basis references column " + std::to_string(j + 1) + " of " + std::to_string(p0));
        };
        switch (t.type) {
        case TermType::Intercept: B.col(c).setOnes(); break;
        case TermType::Column: check(t.j); B.col(c) = x.col(t.j); break;
        case TermType::Interaction:
            check(t.j);
            check(t.k);
            B.col(c) = x.col(t.j).cwiseProduct(x.col(t.k));
            break;
        case TermType::CenteredSquare:
            check(t.j);
            B.col(c) = x.col(t.j).array().square() - t.offset;
            break;
        }
    }
    return B;
}

Mat build_basis(const ObservedData& data, const BasisSpec& spec) {
    return build_basis(data.x(), spec);
}

QWeights QWeights::unit(long N) {
    QWeights q;
    q.values = Vec::Ones(N);
    return q;
}

QWeights QWeights::power(const Vec& pi_hat, double kappa) {
    QWeights q;
    q.family = QFamily::PropensityPower;
    q.kappa = kappa;
    q.values = pi_hat.array().pow(kappa - 1.0);
    if (!q.values.allFinite() || (q.values.array() <= 0.0).any()) {
        throw InvalidArgument("q weights must be positive and finite");
    }
    return q;
}

ObservedData load_csv(const std::string& path, const std::string& outcome_col,
                      const std::optional<std::string>& indicator_col) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
    const auto header = split(line);
    long ycol = -1;
    long icol = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == outcome_col) ycol = static_cast<long>(j);
        if (indicator_col && header[j] == *indicator_col) icol = static_cast<long>(j);
    }
    if (ycol < 0) throw DataError("outcome column '" + outcome_col + "' not found");
    if (indicator_col && icol < 0) throw DataError("indicator column '" + *indicator_col + "' not found");

    std::vector<std::string> names;
    std::vector<long> xcols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<long>(j) == ycol || static_cast<long>(j) == icol) continue;
        names.push_back(header[j]);
        xcols.push_back(static_cast<long>(j));
    }

    std::vector<std::vector<double>> rows;
    std::vector<double> ys;
    std::vector<bool> resp;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw DataError("ragged row at line " + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
        }
        std::vector<double> r(xcols.size());
        for (std::size_t k = 0; k < xcols.size(); ++k) {
            if (!parse_double(cells[xcols[k]], r[k])) {
                throw DataError("non-numeric covariate '" + names[k] + "' at line " + std::to_string(lineno));
            }
        }
        bool responded;
        double yv = 0.0;
        if (icol >= 0) {
            double ind = 0.0;
            if (!parse_double(cells[icol], ind) || (ind != 0.0 && ind != 1.0)) {
                throw DataError("indicator must be 0 or 1 at line " + std::to_string(lineno));
            }
            responded = ind == 1.0;
            if (responded && !parse_double(cells[ycol], yv)) {
                throw DataError("responding unit lacks a numeric outcome at line " + std::to_string(lineno));
            }
        } else if (cells[ycol].empty()) {
            responded = false;
        } else {
            if (!parse_double(cells[ycol], yv)) throw DataError("non-numeric outcome at line " + std::to_string(lineno));
            responded = true;
        }
        rows.push_back(std::move(r));
        ys.push_back(yv);
        resp.push_back(responded);
    }
    const long N = static_cast<long>(rows.size());
    Mat x(N, static_cast<long>(xcols.size()));
    Vec y(N);
    for (long i = 0; i < N; ++i) {
        for (long j = 0; j < x.cols(); ++j) x(i, j) = rows[i][j];
        y(i) = ys[i];
    }
    bool any = false;
    for (bool b : resp) any = any || b;
    if (!any) throw DataError("outcome is missing for every unit");
    return ObservedData(std::move(x), y, resp, std::move(names));
}

void write_csv(const std::string& path, const ObservedData& data, const std::string& outcome_col) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    for (const auto& nm : data.names()) out << nm << ',';
    out << outcome_col << '\n';
    char buf[64];
    for (long i = 0; i < data.N(); ++i) {
        for (long j = 0; j < data.p0(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.x()(i, j));
            out << buf << ',';
        }
        if (data.responded(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", data.outcome(i));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace gec
