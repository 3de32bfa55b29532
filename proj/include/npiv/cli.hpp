#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "npiv/simgen.hpp"
#include "npiv/ucb.hpp"

namespace npiv::cli {

/// 0 ok, 1 unexpected failure, 2 config error, 3 data error, 4 numerical degeneracy.
enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_data = 3, exit_numerical = 4 };

int exit_code_for(ErrorKind kind);

/// Header plus raw cells; numeric conversion happens once column roles are known.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // source line of each row

  int column(const std::string& name) const;
};

Table parse_csv(std::istream& in);
Table read_csv(const std::string& path);

struct RunConfig {
  std::string command = "fit";  // fit | bands
  std::string input;
  std::string output_dir = ".";
  std::string mode = "auto";  // auto | npiv | regression | additive | partially_linear
  std::string y_col = "y";
  std::vector<std::string> x_cols;   // empty: x or x1, x2, ...
  std::vector<std::string> w_cols;   // empty: w or w1, w2, ...
  std::vector<std::string> fe_cols;  // empty: every fe_* column
  bool fixed_effects = true;
  int order = 4;
  int q = 2;
  std::string knot_rule = "dyadic";    // dyadic | quantile
  std::string x_transform = "minmax";  // unit | minmax | log_share
  std::string w_transform = "ecdf";    // unit | minmax | ecdf
  int np_dim = 1;                      // partially linear: leading x columns that enter nonparametrically
  int grid_points = 100;
  double grid_lo = 0.0;
  double grid_hi = 1.0;
  std::vector<double> alphas{0.05, 0.10};
  int draws = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  MultiIndex derivative;
  bool robustness = false;
  std::optional<double> p_lower;
  std::string selection_path;  // replay a stored selection
  bool record_time = false;
};

struct SimConfig {
  std::string design = "npiv_sine_log";
  std::vector<int> n_list{1250};
  int reps = 200;
  int draws = 500;
  std::uint64_t seed = 0;
  int threads = 1;
  int grid_points = 100;
  std::vector<int> fixed_J;
  std::vector<double> A_values;
  bool derivative = false;
  double noise_scale = 1.0;
  std::string z_support_path;
  bool fixed_effects = true;
  std::vector<double> error_cov;  // var_eps, cov, var_rho
  std::string output_dir = ".";
  bool record_time = false;
};

/// Everything `fit` writes, kept in memory for callers and tests.
struct FitResult {
  SelectionRun run;
  std::vector<BandResult> bands;        // one per alpha
  std::vector<BandResult> deriv_bands;  // empty without a derivative
  Eigen::MatrixXd raw_grid;             // grid on the input scale
  std::optional<Eigen::VectorXd> linear_coefficients;
  std::vector<std::string> warnings;
};

FitResult run_fit(const RunConfig& config);
McReport run_simulate(const SimConfig& config);

nlohmann::json selection_to_json(const AdaptiveSelection& selection);
AdaptiveSelection selection_from_json(const nlohmann::json& j);

/// "%.17g", which reads back to the same double.
std::string format_double(double v);

/// Column label for a (1 - alpha) level: 0.05 -> "95", 0.025 -> "97.5".
std::string level_label(double alpha);

/// Full command line entry point; errors are reported on `err` and mapped to exit codes.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace npiv::cli
