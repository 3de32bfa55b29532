#include "npiv/sieve.hpp"

namespace npiv {

int SieveModel::instrument_dim(int J) const {
  if (!instruments) fail(ErrorKind::precondition, "series regression has no instrument basis");
  return instruments->dimension_for_level(space->level_of(J)) + static_cast<int>(exogenous.cols());
}

Eigen::MatrixXd SieveModel::instrument_design(int J, const Eigen::MatrixXd& w) const {
  if (!instruments) fail(ErrorKind::precondition, "series regression has no instrument basis");
  Eigen::MatrixXd b = design_matrix(instruments->basis_for_level(space->level_of(J)), w);
  if (exogenous.cols() == 0) return b;
  if (exogenous.rows() != b.rows()) fail(ErrorKind::precondition, "exogenous block rows do not match W");
  Eigen::MatrixXd out(b.rows(), b.cols() + exogenous.cols());
  out << b, exogenous;
  return out;
}

SieveModel npiv_model(const SplineFamily& x_family, const InstrumentSpec& instruments) {
  return SieveModel{std::make_shared<TensorSplineSpace>(x_family), instruments, {}};
}

SieveModel regression_model(const SplineFamily& x_family) {
  return SieveModel{std::make_shared<TensorSplineSpace>(x_family), std::nullopt, {}};
}

Eigen::MatrixXd make_grid(int dim, int per_axis, double lo, double hi) {
  if (dim < 1 || per_axis < 1) fail(ErrorKind::config, "grid needs dim >= 1 and at least one point per axis");
  if (!(lo <= hi) || lo < 0.0 || hi > 1.0) fail(ErrorKind::config, "grid interval must satisfy 0 <= lo <= hi <= 1");
  Eigen::VectorXd axis = Eigen::VectorXd::LinSpaced(per_axis, lo, hi);
  if (per_axis == 1) axis(0) = 0.5 * (lo + hi);
  const auto total = ipow(per_axis, dim);
  Eigen::MatrixXd grid(total, dim);
  for (long long row = 0; row < total; ++row) {
    long long rest = row;
    for (int k = dim - 1; k >= 0; --k) {
      grid(row, k) = axis(rest % per_axis);
      rest /= per_axis;
    }
  }
  return grid;
}

}  // namespace npiv
