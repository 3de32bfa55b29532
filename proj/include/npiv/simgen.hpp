#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "npiv/adaptive.hpp"
#include "npiv/extensions.hpp"

namespace npiv {

enum class DesignKind { npiv_sine_log, reg_wiggly, trade_lognormal, trade_pareto };

const char* to_string(DesignKind kind);
/// Throws config on an unknown name.
DesignKind parse_design(const std::string& name);

/// Trade designs: shares pi come from log eps(pi) = 0.875 z - 7 + e_eps inverted through the
/// lognormal extensive margin; Y = log rho(pi) + FE + e_rho.
struct TradeParams {
  double mu = -2.0;
  double sigma = 1.2;
  double sigma_tilde = 2.9;
  double kappa = 0.36;
  double z_slope = 0.875;
  double z_shift = -7.0;
  double pareto_slope = -0.23;
  Eigen::Matrix2d error_cov = Eigen::Vector2d(0.1, 2.0).asDiagonal();  // (e_eps, e_rho)
  std::vector<double> z_support;  // resampled with replacement; empty: default_z_support()
  int countries = 40;
  bool fixed_effects = true;      // partial out exporter/importer effects before selection
};

namespace trade {

/// z_k = 5 + 5 (k - 1/2) / m, k = 1..m.
std::vector<double> default_z_support(int m = 1522);

double log_eps(double pi, const TradeParams& p);
/// Inverse of log_eps in closed form: pi = erfc((log eps - mu) / (sigma sqrt 2)) / 2.
double share_from_log_eps(double log_eps, const TradeParams& p);
double log_rho(double pi, const TradeParams& p);
double elasticity(double pi, const TradeParams& p);

/// Regressor transform used by the trade designs, x = max{0, log(pi)/10 + 1}.
double share_to_x(double pi);
double x_to_share(double x);

}  // namespace trade

struct DesignOptions {
  DesignKind kind = DesignKind::npiv_sine_log;
  TradeParams trade;
  double noise_scale = 1.0;  // multiplies the structural error
};

/// Truth on the transformed regressor scale. `report_scale` maps d/dx onto the
/// reported derivative (0.1 for trade, where the elasticity is h'(x)/10).
struct Truth {
  std::function<double(double)> h;
  std::function<double(double)> dh;
  double report_scale = 1.0;
};

Truth truth(const DesignOptions& design);

struct Generated {
  Sample sample;
  FixedEffectsPlan fixed_effects;  // exporter/importer ids for trade designs
};

Generated generate(const DesignOptions& design, int n, std::uint64_t seed);

/// Sieve model each design is estimated with; trade designs place X knots at sample quantiles.
SieveModel design_model(const DesignOptions& design, const Sample& sample);

/// Reporting grid: [0.01, 0.99] (npiv), [0, 1] (regression), pi in [0.001, 0.5] (trade).
Eigen::MatrixXd report_grid(const DesignOptions& design, int points = 100);

/// Fixed-effect partial-out (when enabled) followed by selection. The truncation point is
/// computed before Y is adjusted and then reused.
SelectionRun estimate(const DesignOptions& design, Generated& data, const MultiplierPlan& plan,
                      const Eigen::MatrixXd& grid);

struct McOptions {
  DesignOptions design;
  std::vector<int> n_list{1250};
  int reps = 200;
  int draws = 500;
  std::uint64_t seed = 1;
  int threads = 1;
  int grid_points = 100;
  std::vector<int> fixed_J;
  std::vector<double> A_values;
  bool derivative = false;
};

/// One (n, target, method) cell. Width ratios compare mean 95% band widths with the
/// data-driven band from the same replication.
struct McRow {
  int n = 0;
  std::string target;  // "h" or "deriv"
  std::string method;  // "data_driven" or "J=<J>"
  int reps = 0;
  std::uint64_t seed = 0;
  double loss_mean = 0.0;
  double loss_median = 0.0;
  double loss_se = 0.0;
  double coverage90 = 0.0;
  double coverage95 = 0.0;
  double coverage95_se = 0.0;
  double width_mean = 0.0;
  double width_ratio_mean = 1.0;
  double width_ratio_median = 1.0;
  double reject = 0.0;  // 95% band excludes every constant
};

struct SweepRow {
  int n = 0;
  double A = 0.0;
  double coverage = 0.0;
  double se = 0.0;
};

struct McReport {
  std::string design;
  int reps = 0;
  int draws = 0;
  std::uint64_t seed = 0;
  std::vector<McRow> rows;
  std::vector<SweepRow> sweep;
  std::map<int, std::map<int, int>> J_tilde_counts;  // n -> J -> replications
  std::map<int, double> mean_J_tilde;

  const McRow& row(int n, const std::string& target, const std::string& method) const;
};

/// Seeds for replication r at sample size n: (data, multipliers).
std::pair<std::uint64_t, std::uint64_t> replication_seeds(std::uint64_t seed, int n, int r);

McReport run_mc(const McOptions& options);

/// Coverage of the 95% band with constant A in place of A_hat.
std::vector<SweepRow> a_sweep(const DesignOptions& design, int n, int reps, const std::vector<double>& A_values,
                              int draws = 500, std::uint64_t seed = 1);

}  // namespace npiv
