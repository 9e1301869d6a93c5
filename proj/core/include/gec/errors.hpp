#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A weight was evaluated outside (or within 1e-12 of the boundary of) the
/// open domain of the entropy generator.
class DomainError : public Error {
public:
    DomainError(const std::string& entropy, double w, double lo, double hi);

    double value() const { return value_; }
    double lower() const { return lo_; }
    double upper() const { return hi_; }

private:
    double value_;
    double lo_;
    double hi_;
};

/// A dual argument fell outside the image g(V) of the link; the dual point is
/// infeasible. `unit` is -1 when the failure is not tied to a specific unit.
class LinkRangeError : public Error {
public:
    LinkRangeError(const std::string& entropy, double nu, long unit = -1);

    double value() const { return value_; }
    long unit() const { return unit_; }

private:
    double value_;
    long unit_;
};

class RankDeficiencyError : public Error {
public:
    RankDeficiencyError(const std::string& what, std::vector<long> columns);

    const std::vector<long>& columns() const { return columns_; }

private:
    std::vector<long> columns_;
};

/// The calibration constraints cannot be met (dual unbounded or the line
/// search collapsed at the boundary of the feasible region).
class InfeasibleCalibration : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

private:
    double residual_;
    int iterations_;
};

class DataError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace gec
