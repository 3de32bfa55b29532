#include "npiv/extensions.hpp"

#include <algorithm>
#include <map>

#include "npiv/linalg.hpp"

namespace npiv {

namespace {

class AdditiveComponentView final : public SieveSpace {
 public:
  AdditiveComponentView(std::shared_ptr<const AdditiveSplineSpace> parent, int k) : parent_(std::move(parent)), k_(k) {}

  int order() const override { return parent_->order(); }
  int input_dim() const override { return parent_->input_dim(); }
  int target_dim() const override { return 1; }
  std::vector<int> dimension_grid(long long cap) const override { return parent_->dimension_grid(cap); }
  int level_of(int J) const override { return parent_->level_of(J); }
  Eigen::MatrixXd design(int J, const Eigen::MatrixXd& x) const override { return parent_->design(J, x); }
  Eigen::MatrixXd target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const override {
    if (points.cols() != 1) fail(ErrorKind::precondition, "component targets take univariate points");
    if (a.size() > 1) fail(ErrorKind::config, "component derivative index must have one entry");
    const int p = parent_->offset(J, parent_->components());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), p);
    out.middleCols(parent_->offset(J, k_), J) = parent_->centered_block(J, k_, points.col(0), a.empty() ? 0 : a[0]);
    return out;
  }

 private:
  std::shared_ptr<const AdditiveSplineSpace> parent_;
  int k_;
};

}  // namespace

AdditiveSplineSpace::AdditiveSplineSpace(std::vector<SplineFamily> components, bool intercept)
    : families_(std::move(components)), intercept_(intercept) {
  if (families_.empty()) fail(ErrorKind::config, "additive sieve needs at least one component");
  for (const auto& f : families_) {
    if (f.dim != 1) fail(ErrorKind::config, "additive components must be univariate");
    if (f.order != families_.front().order) fail(ErrorKind::config, "additive components must share one order");
  }
}

Eigen::MatrixXd AdditiveSplineSpace::centered_block(int J, int k, const Eigen::VectorXd& xk, int deriv) const {
  const auto spec = families_.at(k).for_dimension(J);
  Eigen::MatrixXd block = design_matrix(spec, xk, deriv > 0 ? MultiIndex{deriv} : MultiIndex{});
  if (deriv == 0) block.rowwise() -= basis_integrals(spec).transpose();
  return block;
}

Eigen::MatrixXd AdditiveSplineSpace::design(int J, const Eigen::MatrixXd& x) const {
  return target(J, x, {});
}

Eigen::MatrixXd AdditiveSplineSpace::target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const {
  const int d = components();
  if (points.cols() != d) fail(ErrorKind::precondition, "additive sieve expects one column per component");
  if (!a.empty() && static_cast<int>(a.size()) != d)
    fail(ErrorKind::config, "derivative multi-index must have one entry per component");
  int axis = -1, active = 0;
  for (int k = 0; k < static_cast<int>(a.size()); ++k)
    if (a[k] > 0) {
      axis = k;
      ++active;
    }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), offset(J, d));
  if (active > 1) return out;  // mixed partials of an additive function vanish
  if (active == 0) {
    if (intercept_) out.col(0).setOnes();
    for (int k = 0; k < d; ++k) out.middleCols(offset(J, k), J) = centered_block(J, k, points.col(k));
  } else {
    out.middleCols(offset(J, axis), J) = centered_block(J, axis, points.col(axis), a[axis]);
  }
  return out;
}

std::shared_ptr<const SieveSpace> AdditiveSplineSpace::for_component(int k) const {
  if (k < 0 || k >= components()) fail(ErrorKind::config, "component index out of range");
  return std::make_shared<AdditiveComponentView>(std::make_shared<AdditiveSplineSpace>(*this), k);
}

Eigen::VectorXd AdditiveFit::component(int k, const Eigen::VectorXd& xk, int deriv) const {
  return space->centered_block(fit.J, k, xk, deriv) * fit.c_hat.segment(space->offset(fit.J, k), fit.J);
}

AdditiveFit fit_additive(const Sample& sample, std::shared_ptr<const AdditiveSplineSpace> space,
                         const std::optional<InstrumentSpec>& instruments, int J) {
  AdditiveFit out;
  out.space = space;
  out.fit = fit(sample, SieveModel{space, instruments, {}}, J);
  out.intercept = space->has_intercept() ? out.fit.c_hat(0) : 0.0;
  return out;
}

PartiallyLinearSpace::PartiallyLinearSpace(std::shared_ptr<const SieveSpace> nonparametric, Eigen::MatrixXd linear)
    : np_(std::move(nonparametric)), linear_(std::move(linear)) {
  if (!linear_.allFinite()) fail(ErrorKind::data, "linear block contains NaN or Inf");
}

int PartiallyLinearSpace::np_columns(int J) const {
  if (!np_) return 0;
  return static_cast<int>(np_->target(J, Eigen::MatrixXd::Constant(1, np_->target_dim(), 0.5), {}).cols());
}

std::vector<int> PartiallyLinearSpace::dimension_grid(long long cap) const {
  if (!np_) return {0};
  return np_->dimension_grid(cap);
}

Eigen::MatrixXd PartiallyLinearSpace::design(int J, const Eigen::MatrixXd& x) const {
  if (x.rows() != linear_.rows())
    fail(ErrorKind::precondition, "partially linear design is bound to the sample it was built with");
  const Eigen::MatrixXd psi1 = np_ ? np_->design(J, x) : Eigen::MatrixXd(x.rows(), 0);
  Eigen::MatrixXd out(x.rows(), psi1.cols() + linear_.cols());
  out << psi1, linear_;
  return out;
}

Eigen::MatrixXd PartiallyLinearSpace::target(int J, const Eigen::MatrixXd& points, const MultiIndex& a) const {
  if (!np_) fail(ErrorKind::precondition, "partially linear model has no nonparametric block to evaluate");
  const Eigen::MatrixXd s1 = np_->target(J, points, a);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), s1.cols() + linear_.cols());
  out.leftCols(s1.cols()) = s1;
  return out;
}

Eigen::MatrixXd demean_columns(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return m;
  return m.rowwise() - m.colwise().mean();
}

SieveModel partially_linear_model(const SieveModel& np_model, const Eigen::MatrixXd& linear, bool demean) {
  const Eigen::MatrixXd block = demean ? demean_columns(linear) : linear;
  SieveModel out;
  out.space = std::make_shared<PartiallyLinearSpace>(np_model.space, block);
  out.instruments = np_model.instruments;
  if (np_model.instruments) {
    out.exogenous.resize(block.rows(), np_model.exogenous.cols() + block.cols());
    out.exogenous << np_model.exogenous, block;
  }
  return out;
}

PartiallyLinearFit fit_partially_linear(const Sample& sample, const SieveModel& np_model, const Eigen::MatrixXd& linear,
                                        int J, bool demean) {
  if (linear.rows() != sample.n()) fail(ErrorKind::data, "linear block and sample have different row counts");
  const SieveModel model = partially_linear_model(np_model, linear, demean);
  PartiallyLinearFit out;
  out.fit = fit(sample, model, J);
  out.np_columns = static_cast<int>(out.fit.c_hat.size() - linear.cols());
  out.beta = out.fit.c_hat.tail(linear.cols());
  return out;
}

PartiallyLinearFit fit_partially_linear_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& psi1,
                                               const Eigen::MatrixXd& linear, const Eigen::MatrixXd& b) {
  if (psi1.rows() != y.size() || linear.rows() != y.size())
    fail(ErrorKind::data, "partially linear blocks and outcome have different row counts");
  Eigen::MatrixXd psi(y.size(), psi1.cols() + linear.cols());
  psi << psi1, linear;
  PartiallyLinearFit out;
  out.fit = fit_design(y, psi, b, static_cast<int>(psi1.cols()));
  out.np_columns = static_cast<int>(psi1.cols());
  out.beta = out.fit.c_hat.tail(linear.cols());
  return out;
}

FixedEffectsResult partial_out_fixed_effects(const Eigen::VectorXd& y, const FixedEffectsPlan& plan,
                                             const Eigen::MatrixXd& b) {
  const Eigen::Index n = y.size();
  if (b.rows() != n) fail(ErrorKind::data, "instrument block and outcome have different row counts");
  FixedEffectsResult out;
  std::vector<std::vector<int>> kept(plan.factors.size());
  Eigen::Index columns = 0;
  for (std::size_t f = 0; f < plan.factors.size(); ++f) {
    const auto& ids = plan.factors[f];
    const std::string name = f < plan.names.size() ? plan.names[f] : "factor " + std::to_string(f);
    if (static_cast<Eigen::Index>(ids.size()) != n) fail(ErrorKind::data, name + " has the wrong number of rows");
    std::map<int, int> counts;
    for (int id : ids) ++counts[id];
    if (counts.size() < 2) {
      out.warnings.push_back(name + " has a single level; nothing to partial out");
      continue;
    }
    for (const auto& [level, count] : counts) {
      if (count == 1)
        out.warnings.push_back(name + " level " + std::to_string(level) + " has one observation; its effect absorbs it");
      if (level != counts.begin()->first) kept[f].push_back(level);
    }
    columns += static_cast<Eigen::Index>(kept[f].size());
  }

  Eigen::MatrixXd dummies = Eigen::MatrixXd::Zero(n, columns);
  Eigen::Index col = 0;
  for (std::size_t f = 0; f < plan.factors.size(); ++f) {
    for (int level : kept[f]) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (plan.factors[f][i] == level) dummies(i, col) = 1.0;
      ++col;
    }
  }

  out.effects.resize(plan.factors.size());
  if (columns == 0) {
    out.adjusted_y = y;
    return out;
  }
  Eigen::MatrixXd design(n, b.cols() + columns);
  design << b, dummies;
  const auto gram = psd_pseudo_inverse(Eigen::MatrixXd(design.transpose() * design));
  if (!gram.full_rank) out.warnings.push_back("fixed-effects design is rank deficient; using a generalized inverse");
  const Eigen::VectorXd coef = gram.matrix * (design.transpose() * y);
  const Eigen::VectorXd theta = coef.tail(columns);
  out.adjusted_y = y - dummies * theta;

  col = 0;
  for (std::size_t f = 0; f < plan.factors.size(); ++f) {
    if (kept[f].empty()) continue;
    out.effects[f][*std::min_element(plan.factors[f].begin(), plan.factors[f].end())] = 0.0;
    for (int level : kept[f]) out.effects[f][level] = theta(col++);
  }
  return out;
}

FixedEffectsResult partial_out_fixed_effects(const Sample& sample, const FixedEffectsPlan& plan,
                                             const SieveModel& model, int J_max) {
  const Eigen::MatrixXd b = model.is_regression() ? model.space->design(J_max, sample.x)
                                                  : model.instrument_design(J_max, sample.w);
  return partial_out_fixed_effects(sample.y, plan, b);
}

}  // namespace npiv
