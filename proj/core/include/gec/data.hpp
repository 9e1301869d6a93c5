#pragma once

#include "gec/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gec {

/// Covariates for all N units plus the outcome for responders only. The
/// response indicators are authoritative: outcome values of non-responders
/// are never stored, so no placeholder can leak into an estimator.
class ObservedData {
public:
    ObservedData() = default;
    /// `y` entries at non-responding units are discarded.
    ObservedData(Mat x, const Vec& y, const std::vector<bool>& responded,
                 std::vector<std::string> names = {});

    long N() const { return x_.rows(); }
    long n() const { return n_; }
    long p0() const { return x_.cols(); }

    const Mat& x() const { return x_; }
    const std::vector<std::string>& names() const { return names_; }
    /// 0-based column index for a covariate name; -1 when absent.
    long column_index(const std::string& name) const;

    bool responded(long i) const { return delta_(i) != 0.0; }
    /// delta_i as 0/1 doubles.
    const Vec& delta() const { return delta_; }
    /// delta_i * y_i, zero for non-responders.
    const Vec& delta_y() const { return dy_; }
    /// y_i of a responding unit; throws DataError otherwise.
    double outcome(long i) const;

    /// Indices of responding units in increasing order.
    std::vector<long> responder_indices() const;

private:
    Mat x_;
    Vec delta_;
    Vec dy_;
    std::vector<std::string> names_;
    long n_ = 0;
};

enum class TermType { Intercept, Column, Interaction, CenteredSquare };

struct BasisTerm {
    TermType type = TermType::Intercept;
    long j = -1;
    long k = -1;
    double offset = 1.0;  ///< CenteredSquare: x_j^2 - offset.

    static BasisTerm intercept() { return {}; }
    static BasisTerm column(long j) { return {TermType::Column, j, -1, 0.0}; }
    static BasisTerm interaction(long j, long k) { return {TermType::Interaction, j, k, 0.0}; }
    static BasisTerm centered_square(long j, double offset = 1.0) { return {TermType::CenteredSquare, j, -1, offset}; }
};

/// Ordered basis b(x); the first term is always the intercept.
class BasisSpec {
public:
    BasisSpec() : terms_{BasisTerm::intercept()} {}
    explicit BasisSpec(std::vector<BasisTerm> terms);

    /// Intercept followed by the given raw columns.
    static BasisSpec linear(const std::vector<long>& columns);

    const std::vector<BasisTerm>& terms() const { return terms_; }
    long p() const { return static_cast<long>(terms_.size()); }
    std::vector<std::string> labels(const std::vector<std::string>& names = {}) const;

private:
    std::vector<BasisTerm> terms_;
};

/// Parses a comma separated term list such as "1,x1,x2,x1*x2,x2^2-1".
/// Variables are covariate names or "x<k>" with k 1-based. The intercept is
/// prepended if missing.
BasisSpec parse_basis(const std::string& text, const std::vector<std::string>& names);

/// N x p matrix whose row i is b(x_i).
Mat build_basis(const ObservedData& data, const BasisSpec& spec);
Mat build_basis(const Mat& x, const BasisSpec& spec);

enum class QFamily { Unit, PropensityPower };

/// q_i = 1 or q_i = pi_i^(kappa - 1).
struct QWeights {
    QFamily family = QFamily::Unit;
    double kappa = 1.0;
    Vec values;

    static QWeights unit(long N);
    static QWeights power(const Vec& pi_hat, double kappa);
};

/// Reads a header-prefixed CSV. The outcome column and the optional
/// indicator column are removed from the covariates. Without an indicator a
/// blank outcome cell marks a non-responder.
ObservedData load_csv(const std::string& path, const std::string& outcome_col,
                      const std::optional<std::string>& indicator_col = std::nullopt);

/// Writes covariates followed by the outcome column (blank when missing),
/// with 17 significant digits so that load_csv round-trips exactly.
void write_csv(const std::string& path, const ObservedData& data, const std::string& outcome_col = "y");

}  // namespace gec
