#pragma once

#include <optional>
#include <vector>

#include "npiv/adaptive.hpp"

namespace npiv {

enum class BandKind { h_band, deriv_band, undersmoothed, robustness };

const char* to_string(BandKind kind);

struct BandResult {
  BandKind kind = BandKind::h_band;
  Eigen::MatrixXd grid;
  MultiIndex derivative;
  int J = 0;
  double level = 0.95;
  Eigen::VectorXd center;
  Eigen::VectorXd halfwidth;
  Eigen::VectorXd sigma;
  double z_star = 0.0;
  double theta_star = 0.0;
  double A = 0.0;
  std::optional<double> p_lower;

  Eigen::VectorXd lower() const { return center - halfwidth; }
  Eigen::VectorXd upper() const { return center + halfwidth; }
};

/// Variance field and bootstrap table of d^a h_J over the J_minus set, on the
/// selection grid and the selection's multiplier draws.
struct TargetBootstrap {
  MultiIndex derivative;
  int target_dim = 1;
  VarianceField field;
  BootstrapTable table;
};

TargetBootstrap target_bootstrap(const SelectionRun& run, const MultiIndex& a = {},
                                 const SieveSpace* target_space = nullptr);

/// (z* + A theta*) sigma_Jtilde(x), with A = A_hat unless given.
BandResult band_target(const SelectionRun& run, const TargetBootstrap& tb, double alpha,
                       std::optional<double> A = std::nullopt);

BandResult band_h(const SelectionRun& run, double alpha, std::optional<double> A = std::nullopt);
BandResult band_deriv(const SelectionRun& run, double alpha, const MultiIndex& a,
                      std::optional<double> A = std::nullopt);

double default_p_lower(int dim, const MultiIndex& a);

/// Inflation max{theta*, J^{(|a| - p)/d} / sigma(x)} in place of theta*.
BandResult band_robustness(const SelectionRun& run, const TargetBootstrap& tb, double alpha,
                           std::optional<double> p_lower = std::nullopt);
BandResult band_robustness(const SelectionRun& run, double alpha, const MultiIndex& a,
                           std::optional<double> p_lower = std::nullopt);

/// Fixed-J bands with critical value from the single-J sup-t statistic.
std::vector<BandResult> undersmoothed_bands(const NpivFit& fit, const Eigen::MatrixXd& grid,
                                            const MultiplierPlan& plan, const std::vector<double>& alphas,
                                            const MultiIndex& a = {}, const SieveSpace* target_space = nullptr);
BandResult band_undersmoothed(const NpivFit& fit, const Eigen::MatrixXd& grid, const MultiplierPlan& plan,
                              double alpha, const MultiIndex& a = {}, const SieveSpace* target_space = nullptr);

/// True when no constant function fits inside the band: max lower > min upper.
bool excludes_constant(const BandResult& band);

/// Truth inside the band at every grid point.
bool covers(const BandResult& band, const Eigen::VectorXd& truth);

}  // namespace npiv
