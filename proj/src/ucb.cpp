#include "npiv/ucb.hpp"

#include <algorithm>
#include <cmath>

namespace npiv {

const char* to_string(BandKind kind) {
  switch (kind) {
    case BandKind::h_band: return "h_band";
    case BandKind::deriv_band: return "deriv_band";
    case BandKind::undersmoothed: return "undersmoothed";
    case BandKind::robustness: return "robustness";
  }
  return "unknown";
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::config, "alpha must lie in (0,1)");
}

BandResult base_band(const SelectionRun& run, const TargetBootstrap& tb, double alpha) {
  check_alpha(alpha);
  const int Jt = run.selection.J_tilde;
  BandResult band;
  band.kind = total_order(tb.derivative) > 0 ? BandKind::deriv_band : BandKind::h_band;
  band.grid = tb.field.grid;
  band.derivative = tb.derivative;
  band.J = Jt;
  band.level = 1.0 - alpha;
  band.center = tb.field.estimate.at(Jt);
  band.sigma = tb.field.sigma(Jt);
  band.z_star = quantile(sup_t_single(tb.table, run.selection.J_minus_set), 1.0 - alpha);
  band.theta_star = run.selection.theta_star;
  return band;
}

}  // namespace

TargetBootstrap target_bootstrap(const SelectionRun& run, const MultiIndex& a, const SieveSpace* target_space) {
  TargetBootstrap tb;
  tb.derivative = a;
  tb.target_dim = (target_space ? target_space : run.model.space.get())->target_dim();
  if (total_order(a) == 0 && !target_space) {
    tb.field = run.field;
    tb.table = run.table;
    return tb;
  }
  FitMap fits;
  for (int J : run.selection.J_minus_set) fits.emplace(J, run.fits.at(J));
  fits.emplace(run.selection.J_tilde, run.fits.at(run.selection.J_tilde));
  tb.field = variance_field(fits, run.field.grid, a, {}, target_space);
  tb.table = bootstrap_table(fits, tb.field, run.plan);
  return tb;
}

BandResult band_target(const SelectionRun& run, const TargetBootstrap& tb, double alpha, std::optional<double> A) {
  BandResult band = base_band(run, tb, alpha);
  band.A = A.value_or(run.selection.A_hat);
  if (band.A < 0.0) fail(ErrorKind::config, "band constant A must be >= 0");
  band.halfwidth = (band.z_star + band.A * band.theta_star) * band.sigma;
  return band;
}

BandResult band_h(const SelectionRun& run, double alpha, std::optional<double> A) {
  return band_target(run, target_bootstrap(run), alpha, A);
}

BandResult band_deriv(const SelectionRun& run, double alpha, const MultiIndex& a, std::optional<double> A) {
  return band_target(run, target_bootstrap(run, a), alpha, A);
}

double default_p_lower(int dim, const MultiIndex& a) {
  return std::max(0.5 * dim + 0.1, total_order(a) + 0.1);
}

BandResult band_robustness(const SelectionRun& run, const TargetBootstrap& tb, double alpha,
                           std::optional<double> p_lower) {
  const int order = total_order(tb.derivative);
  const double p = p_lower.value_or(default_p_lower(tb.target_dim, tb.derivative));
  if (!(p > order))
    fail(ErrorKind::invalid_smoothness, "p_lower = " + std::to_string(p) + " must exceed the derivative order " +
                                            std::to_string(order));
  BandResult band = base_band(run, tb, alpha);
  band.kind = BandKind::robustness;
  band.A = run.selection.A_hat;
  band.p_lower = p;
  const double bias = std::pow(static_cast<double>(band.J), (order - p) / tb.target_dim);
  band.halfwidth.resize(band.sigma.size());
  for (Eigen::Index g = 0; g < band.sigma.size(); ++g) {
    const double infl = std::max(band.theta_star, bias / band.sigma(g));
    band.halfwidth(g) = (band.z_star + band.A * infl) * band.sigma(g);
  }
  return band;
}

BandResult band_robustness(const SelectionRun& run, double alpha, const MultiIndex& a,
                           std::optional<double> p_lower) {
  return band_robustness(run, target_bootstrap(run, a), alpha, p_lower);
}

std::vector<BandResult> undersmoothed_bands(const NpivFit& fit, const Eigen::MatrixXd& grid,
                                            const MultiplierPlan& plan, const std::vector<double>& alphas,
                                            const MultiIndex& a, const SieveSpace* target_space) {
  FitMap fits;
  fits.emplace(fit.J, fit);
  const auto field = variance_field(fits, grid, a, {}, target_space);
  const auto table = bootstrap_table(fits, field, plan);
  const Eigen::VectorXd sups = sup_t_single(table, {fit.J});
  std::vector<BandResult> out;
  for (double alpha : alphas) {
    check_alpha(alpha);
    BandResult band;
    band.kind = BandKind::undersmoothed;
    band.grid = grid;
    band.derivative = a;
    band.J = fit.J;
    band.level = 1.0 - alpha;
    band.center = field.estimate.at(fit.J);
    band.sigma = field.sigma(fit.J);
    band.z_star = quantile(sups, 1.0 - alpha);
    band.halfwidth = band.z_star * band.sigma;
    out.push_back(std::move(band));
  }
  return out;
}

BandResult band_undersmoothed(const NpivFit& fit, const Eigen::MatrixXd& grid, const MultiplierPlan& plan,
                              double alpha, const MultiIndex& a, const SieveSpace* target_space) {
  return undersmoothed_bands(fit, grid, plan, {alpha}, a, target_space).front();
}

bool excludes_constant(const BandResult& band) { return band.lower().maxCoeff() > band.upper().minCoeff(); }

bool covers(const BandResult& band, const Eigen::VectorXd& truth) {
  if (truth.size() != band.center.size()) fail(ErrorKind::precondition, "truth and band grids differ");
  const Eigen::VectorXd lo = band.lower(), hi = band.upper();
  for (Eigen::Index g = 0; g < truth.size(); ++g)
    if (!(truth(g) >= lo(g) && truth(g) <= hi(g))) return false;
  return true;
}

}  // namespace npiv
