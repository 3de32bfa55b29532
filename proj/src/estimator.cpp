#include "npiv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "npiv/linalg.hpp"

namespace npiv {

namespace {

void check_unit_cube(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) fail(ErrorKind::data, std::string(what) + " contains NaN or Inf");
  if (m.size() > 0 && (m.minCoeff() < 0.0 || m.maxCoeff() > 1.0))
    fail(ErrorKind::domain, std::string(what) + " must lie in the unit cube");
}

// Smallest singular value of the whitened cross matrix Wb' B'Psi Wp, where
// `c` = Wb' B'Psi is already formed.
double shat_from_cross(const Eigen::MatrixXd& c, const Eigen::MatrixXd& psi, bool& reduced) {
  const auto wp = psd_whitener(Eigen::MatrixXd(psi.transpose() * psi));
  reduced = reduced || !wp.full_rank;
  const Eigen::MatrixXd s = c * wp.matrix;
  if (s.size() == 0 || s.rows() < s.cols()) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
  return std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
}

// G x n rows s_J(x)' M_J.
Eigen::MatrixXd influence_rows(const NpivFit& f, const Eigen::MatrixXd& s) {
  if (s.cols() != f.m.rows()) fail(ErrorKind::precondition, "selector width does not match the fit");
  return s * f.m;
}

Eigen::VectorXd cross_from_rows(const Eigen::MatrixXd& t1, const Eigen::VectorXd& u1, const Eigen::MatrixXd& t2,
                                const Eigen::VectorXd& u2) {
  const Eigen::VectorXd uu = u1.cwiseProduct(u2);
  return t1.cwiseProduct(t2) * uu;
}

}  // namespace

void validate(const Sample& sample, const SieveModel& model) {
  const Eigen::Index n = sample.n();
  if (n == 0) fail(ErrorKind::data, "empty sample");
  if (!sample.y.allFinite()) fail(ErrorKind::data, "Y contains NaN or Inf");
  if (sample.x.rows() != n) fail(ErrorKind::data, "X and Y have different row counts");
  if (sample.x.cols() != model.space->input_dim())
    fail(ErrorKind::config, "X has " + std::to_string(sample.x.cols()) + " columns, the sieve expects " +
                                std::to_string(model.space->input_dim()));
  check_unit_cube(sample.x, "X");
  if (model.instruments) {
    if (sample.w.rows() != n) fail(ErrorKind::data, "W and Y have different row counts");
    if (sample.w.cols() != model.instruments->w_family.dim)
      fail(ErrorKind::config, "W has " + std::to_string(sample.w.cols()) + " columns, the instrument sieve expects " +
                                  std::to_string(model.instruments->w_family.dim));
    check_unit_cube(sample.w, "W");
  }
}

NpivFit fit_design(const Eigen::VectorXd& y, Eigen::MatrixXd psi, Eigen::MatrixXd b, int J,
                   std::shared_ptr<const SieveSpace> space) {
  const Eigen::Index n = y.size();
  if (psi.rows() != n) fail(ErrorKind::precondition, "design rows do not match the sample");
  NpivFit out;
  out.J = J;
  out.space = std::move(space);
  out.regression = b.cols() == 0;

  if (out.regression) {
    if (psi.cols() > n) fail(ErrorKind::insufficient_sample, "J = " + std::to_string(J) + " exceeds n");
    const auto gram = psd_pseudo_inverse(Eigen::MatrixXd(psi.transpose() * psi));
    out.m = gram.matrix * psi.transpose();
    out.reduced_rank = !gram.full_rank;
    out.s_hat = 1.0;
    out.K = static_cast<int>(psi.cols());
  } else {
    if (b.rows() != n) fail(ErrorKind::precondition, "instrument rows do not match the sample");
    if (b.cols() > n)
      fail(ErrorKind::insufficient_sample,
           "K(J) = " + std::to_string(b.cols()) + " exceeds n = " + std::to_string(n) + " at J = " + std::to_string(J));
    out.K = static_cast<int>(b.cols());
    const auto wb = psd_whitener(Eigen::MatrixXd(b.transpose() * b));
    const Eigen::MatrixXd bt = b * wb.matrix;  // orthonormal basis of span(B)
    const Eigen::MatrixXd c = bt.transpose() * psi;
    const auto a_inv = psd_pseudo_inverse(Eigen::MatrixXd(c.transpose() * c));
    out.m = a_inv.matrix * c.transpose() * bt.transpose();
    out.reduced_rank = !wb.full_rank || !a_inv.full_rank;
    out.s_hat = shat_from_cross(c, psi, out.reduced_rank);
  }
  out.c_hat = out.m * y;
  out.u_hat = y - psi * out.c_hat;
  out.psi = std::move(psi);
  out.b = out.regression ? out.psi : std::move(b);
  return out;
}

NpivFit fit(const Sample& sample, const SieveModel& model, int J) {
  validate(sample, model);
  Eigen::MatrixXd psi = model.space->design(J, sample.x);
  if (model.is_regression()) return fit_design(sample.y, std::move(psi), Eigen::MatrixXd(), J, model.space);
  const int K = model.instrument_dim(J);
  if (K < psi.cols())
    fail(ErrorKind::invalid_dimension, "K(J) = " + std::to_string(K) + " < " + std::to_string(psi.cols()) +
                                           " regressors at J = " + std::to_string(J) +
                                           "; increase the resolution offset q");
  if (K > sample.n())
    fail(ErrorKind::insufficient_sample,
         "K(J) = " + std::to_string(K) + " exceeds n = " + std::to_string(sample.n()) + " at J = " + std::to_string(J));
  return fit_design(sample.y, std::move(psi), model.instrument_design(J, sample.w), J, model.space);
}

std::pair<double, bool> compute_shat(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& b) {
  const auto wb = psd_whitener(Eigen::MatrixXd(b.transpose() * b));
  const Eigen::MatrixXd c = wb.matrix.transpose() * (b.transpose() * psi);
  bool reduced = !wb.full_rank;
  const double s = shat_from_cross(c, psi, reduced);
  return {s, reduced};
}

Eigen::VectorXd evaluate(const NpivFit& fit, const Eigen::MatrixXd& points, const MultiIndex& a) {
  if (!fit.space) fail(ErrorKind::precondition, "fit has no sieve space attached");
  return fit.space->target(fit.J, points, a) * fit.c_hat;
}

Eigen::VectorXd cross_variance(const NpivFit& f1, const Eigen::MatrixXd& s1, const NpivFit& f2,
                               const Eigen::MatrixXd& s2) {
  if (s1.rows() != s2.rows()) fail(ErrorKind::precondition, "selector grids differ");
  return cross_from_rows(influence_rows(f1, s1), f1.u_hat, influence_rows(f2, s2), f2.u_hat);
}

std::vector<std::pair<int, int>> ordered_pairs(const std::vector<int>& dims) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < dims.size(); ++i)
    for (std::size_t j = i + 1; j < dims.size(); ++j) {
      if (dims[j] <= dims[i]) fail(ErrorKind::precondition, "dimension list must be strictly increasing");
      out.emplace_back(dims[i], dims[j]);
    }
  return out;
}

VarianceField variance_field(const FitMap& fits, const Eigen::MatrixXd& grid, const MultiIndex& a,
                             const std::vector<std::pair<int, int>>& contrasts, const SieveSpace* target_space) {
  if (fits.empty()) fail(ErrorKind::precondition, "variance field needs at least one fit");
  if (grid.rows() == 0) fail(ErrorKind::precondition, "evaluation grid is empty");
  VarianceField field;
  field.grid = grid;
  field.derivative = a;

  std::map<int, Eigen::MatrixXd> rows;
  for (const auto& [J, f] : fits) {
    const SieveSpace* space = target_space ? target_space : f.space.get();
    if (!space) fail(ErrorKind::precondition, "fit has no sieve space attached");
    if (f.n() != fits.begin()->second.n()) fail(ErrorKind::precondition, "fits do not share one sample");
    if (f.u_hat.norm() <= 1e-10 * (f.psi * f.c_hat + f.u_hat).norm())
      fail(ErrorKind::degenerate_variance, "residuals are numerically zero at J = " + std::to_string(J) +
                                               "; bands are undefined for an exact fit");
    Eigen::MatrixXd s = space->target(J, grid, a);
    rows[J] = influence_rows(f, s);
    field.dims.push_back(J);
    field.estimate[J] = s * f.c_hat;
    Eigen::VectorXd s2 = cross_from_rows(rows[J], f.u_hat, rows[J], f.u_hat);
    const double top = s2.maxCoeff();
    if (!(top > 0.0) || !std::isfinite(top))
      fail(ErrorKind::degenerate_variance, "sigma_J(x) vanishes on the whole grid at J = " + std::to_string(J));
    const double floor = 1e-12 * std::sqrt(top);
    for (Eigen::Index g = 0; g < s2.size(); ++g)
      if (!(std::sqrt(std::max(s2(g), 0.0)) >= floor))
        fail(ErrorKind::degenerate_variance, "sigma_J(x) is numerically zero at grid point " + std::to_string(g) +
                                                 ", J = " + std::to_string(J));
    field.cross[{J, J}] = s2;
    field.sigma2[J] = std::move(s2);
    field.selectors[J] = std::move(s);
  }

  for (const auto& [J, J2] : contrasts) {
    if (!(J2 > J)) fail(ErrorKind::precondition, "contrast pairs need J2 > J");
    if (!fits.count(J) || !fits.count(J2)) fail(ErrorKind::precondition, "contrast refers to a missing fit");
    Eigen::VectorXd c = cross_from_rows(rows[J], fits.at(J).u_hat, rows[J2], fits.at(J2).u_hat);
    field.contrast_sd[{J, J2}] = (field.sigma2[J] + field.sigma2[J2] - 2.0 * c).cwiseMax(0.0).cwiseSqrt();
    field.cross[{J, J2}] = std::move(c);
  }
  return field;
}

}  // namespace npiv
