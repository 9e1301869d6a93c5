#include "gec/errors.hpp"

#include <sstream>

namespace gec {

namespace {

std::string domain_message(const std::string& entropy, double w, double lo, double hi) {
    std::ostringstream os;
    os.precision(17);
    os << entropy << ": argument " << w << " outside open domain (" << lo << ", " << hi << ")";
    return os.str();
}

std::string range_message(const std::string& entropy, double nu, long unit) {
    std::ostringstream os;
    os.precision(17);
    os << entropy << ": dual argument " << nu << " outside the link range";
    if (unit >= 0) os << " at unit " << unit;
    return os.str();
}

std::string rank_message(const std::string& what, const std::vector<long>& cols) {
    std::ostringstream os;
    os << what << " (dependent columns:";
    for (long c : cols) os << ' ' << c;
    os << ')';
    return os.str();
}

}  // namespace

DomainError::DomainError(const std::string& entropy, double w, double lo, double hi)
    : Error(domain_message(entropy, w, lo, hi)), value_(w), lo_(lo), hi_(hi) {}

LinkRangeError::LinkRangeError(const std::string& entropy, double nu, long unit)
    : Error(range_message(entropy, nu, unit)), value_(nu), unit_(unit) {}

RankDeficiencyError::RankDeficiencyError(const std::string& what, std::vector<long> columns)
    : Error(rank_message(what, columns)), columns_(std::move(columns)) {}

}  // namespace gec
