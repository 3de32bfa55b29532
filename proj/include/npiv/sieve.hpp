#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <vector>

#include "npiv/basis.hpp"

namespace npiv {

/// A nested family of regressor sieves indexed by dimension J.
///
/// `design` produces the n x p regressor matrix Psi_J for the sample and `target`
/// produces the rows s(x)' whose inner product with the coefficients is the
/// quantity being estimated (the function, one of its derivatives, or one
/// component of a structured model). For plain tensor splines p == J.
class SieveSpace {
 public:
  virtual ~SieveSpace() = default;

  virtual int order() const = 0;
  /// Columns of X consumed by `design`.
  virtual int input_dim() const = 0;
  /// Columns of the evaluation points passed to `target`.
  virtual int target_dim() const = 0;
  virtual std::vector<int> dimension_grid(long long cap) const = 0;
  virtual int level_of(int J) const = 0;
  virtual Eigen::MatrixXd design(int J, const Eigen::MatrixXd& x) const = 0;
  virtual Eigen::MatrixXd target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const = 0;
};

/// Plain tensor-product B-spline sieve on [0,1]^d.
class TensorSplineSpace final : public SieveSpace {
 public:
  explicit TensorSplineSpace(SplineFamily family) : family_(std::move(family)) {}

  const SplineFamily& family() const { return family_; }

  int order() const override { return family_.order; }
  int input_dim() const override { return family_.dim; }
  int target_dim() const override { return family_.dim; }
  std::vector<int> dimension_grid(long long cap) const override { return family_.grid(cap); }
  int level_of(int J) const override { return level_for_dimension(family_.order, family_.dim, J); }
  Eigen::MatrixXd design(int J, const Eigen::MatrixXd& x) const override {
    return design_matrix(family_.for_dimension(J), x);
  }
  Eigen::MatrixXd target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const override {
    return design_matrix(family_.for_dimension(J), points, a);
  }

 private:
  SplineFamily family_;
};

/// Regressor sieve plus, for NPIV, the instrument sieve. Without instruments the
/// model is a series regression (b^K = psi^J).
struct SieveModel {
  std::shared_ptr<const SieveSpace> space;
  std::optional<InstrumentSpec> instruments;
  Eigen::MatrixXd exogenous;  // n x m columns appended to the instrument design

  bool is_regression() const { return !instruments.has_value(); }
  /// K(J) plus the exogenous columns.
  int instrument_dim(int J) const;
  Eigen::MatrixXd instrument_design(int J, const Eigen::MatrixXd& w) const;
};

SieveModel npiv_model(const SplineFamily& x_family, const InstrumentSpec& instruments);
SieveModel regression_model(const SplineFamily& x_family);

/// Product grid with `per_axis` equally spaced points on [lo, hi] per axis, last axis fastest.
Eigen::MatrixXd make_grid(int dim, int per_axis, double lo = 0.0, double hi = 1.0);

}  // namespace npiv
