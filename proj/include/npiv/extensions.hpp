#pragma once

#include <memory>
#include <string>
#include <vector>

#include "npiv/estimator.hpp"

namespace npiv {

/// Additive sieve h(x) = c0 + sum_k h_k(x_k) with centered univariate splines
/// psi~_j(x_k) = psi_j(x_k) - int_0^1 psi_j. J indexes the per-component dimension.
///
/// Each centered block sums to zero, so the stacked design loses one rank per
/// component; fits go through the generalized inverse and the component
/// functions stay identified.
class AdditiveSplineSpace final : public SieveSpace {
 public:
  /// One family per coordinate; each must be univariate.
  AdditiveSplineSpace(std::vector<SplineFamily> components, bool intercept = true);

  int components() const { return static_cast<int>(families_.size()); }
  bool has_intercept() const { return intercept_; }
  /// Column offset of component k in the stacked design.
  int offset(int J, int k) const { return (intercept_ ? 1 : 0) + k * J; }

  int order() const override { return families_.front().order; }
  int input_dim() const override { return components(); }
  int target_dim() const override { return components(); }
  std::vector<int> dimension_grid(long long cap) const override { return families_.front().grid(cap); }
  int level_of(int J) const override { return level_for_dimension(order(), 1, J); }
  Eigen::MatrixXd design(int J, const Eigen::MatrixXd& x) const override;
  /// Full additive function (or a derivative) at d-dimensional points.
  Eigen::MatrixXd target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const override;

  /// Centered block for component k at the values `xk` (one column).
  Eigen::MatrixXd centered_block(int J, int k, const Eigen::VectorXd& xk, int deriv = 0) const;

  /// View whose target rows are (0, 0', ..., psi~_k', ..., 0')' at univariate points.
  std::shared_ptr<const SieveSpace> for_component(int k) const;

 private:
  std::vector<SplineFamily> families_;
  bool intercept_;
};

/// Component estimates of an additive fit on univariate grids.
struct AdditiveFit {
  NpivFit fit;
  std::shared_ptr<const AdditiveSplineSpace> space;
  double intercept = 0.0;

  Eigen::VectorXd component(int k, const Eigen::VectorXd& xk, int deriv = 0) const;
};

AdditiveFit fit_additive(const Sample& sample, std::shared_ptr<const AdditiveSplineSpace> space,
                         const std::optional<InstrumentSpec>& instruments, int J);

/// psi^J(x) = (psi_1^J(x1)', x2')' where x2 is a fixed n x m block bound to one
/// sample. Target rows are (psi_1^J', 0')'. A null nonparametric space leaves the
/// linear block alone (J = 0).
class PartiallyLinearSpace final : public SieveSpace {
 public:
  PartiallyLinearSpace(std::shared_ptr<const SieveSpace> nonparametric, Eigen::MatrixXd linear);

  const Eigen::MatrixXd& linear() const { return linear_; }
  int np_columns(int J) const;

  int order() const override { return np_ ? np_->order() : 1; }
  int input_dim() const override { return np_ ? np_->input_dim() : 0; }
  int target_dim() const override { return np_ ? np_->target_dim() : 0; }
  std::vector<int> dimension_grid(long long cap) const override;
  int level_of(int J) const override { return np_ ? np_->level_of(J) : 0; }
  Eigen::MatrixXd design(int J, const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const override;

 private:
  std::shared_ptr<const SieveSpace> np_;
  Eigen::MatrixXd linear_;
};

struct PartiallyLinearFit {
  NpivFit fit;
  Eigen::VectorXd beta;
  int np_columns = 0;
};

Eigen::MatrixXd demean_columns(const Eigen::MatrixXd& m);

/// Model for select()/fit(): the linear block is appended to the regressors and,
/// being exogenous, to the instruments.
SieveModel partially_linear_model(const SieveModel& np_model, const Eigen::MatrixXd& linear, bool demean = true);

PartiallyLinearFit fit_partially_linear(const Sample& sample, const SieveModel& np_model, const Eigen::MatrixXd& linear,
                                        int J, bool demean = true);

/// TSLS of y on [psi1, linear] with instruments `b` (empty: series regression).
PartiallyLinearFit fit_partially_linear_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& psi1,
                                               const Eigen::MatrixXd& linear, const Eigen::MatrixXd& b);

/// Categorical id columns whose effects are removed from Y before estimation.
struct FixedEffectsPlan {
  std::vector<std::vector<int>> factors;
  std::vector<std::string> names;
};

struct FixedEffectsResult {
  Eigen::VectorXd adjusted_y;
  std::vector<std::map<int, double>> effects;  // reference (first sorted) level maps to 0
  std::vector<std::string> warnings;
};

/// Regresses y on b (instrument functions) and one dummy per non-reference level of
/// each factor, then returns y minus the estimated dummy contributions.
FixedEffectsResult partial_out_fixed_effects(const Eigen::VectorXd& y, const FixedEffectsPlan& plan,
                                             const Eigen::MatrixXd& b);

/// Same, with b = b^{K(J_max)}(W) from the instrument sieve.
FixedEffectsResult partial_out_fixed_effects(const Sample& sample, const FixedEffectsPlan& plan,
                                             const SieveModel& model, int J_max);

}  // namespace npiv
