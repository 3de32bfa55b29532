#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "npiv/bootstrap.hpp"
#include "npiv/estimator.hpp"

namespace npiv {

enum class SelectionMode { npiv, regression };

struct JMaxResult {
  int j_max = 0;
  std::map<int, double> s_hat;  // every J whose fit was attempted and succeeded
  bool first_violates = false;  // smallest J already fails the left inequality
  bool no_bracket = false;      // grid ran out before the right inequality held
  std::vector<std::string> warnings;
};

/// Smallest J with J sqrt(log J) g(J) <= 10 sqrt(n) < J+ sqrt(log J+) g(J+), where
/// g(J) = 1/s_J (NPIV) or upsilon_n (regression). `inverse_s` returns nullopt when
/// J cannot be fitted, which counts as g = +inf.
JMaxResult j_hat_max_rule(const std::vector<int>& grid, double n,
                          const std::function<std::optional<double>(int)>& inverse_s);

/// NPIV truncation point. Fits made along the way are stored in `cache` when given.
JMaxResult j_hat_max_npiv(const Sample& sample, const SieveModel& model, FitMap* cache = nullptr);

double upsilon(double n);
JMaxResult j_hat_max_regression(double n, const std::vector<int>& grid);
JMaxResult j_hat_max_regression(double n, const SieveSpace& space);

struct AdaptiveSelection {
  SelectionMode mode = SelectionMode::npiv;
  int J_hat_max = 0;
  std::vector<int> index_set;
  double alpha_hat = 0.5;
  double theta_star = 0.0;
  bool theta_fallback = false;  // singleton index set: theta* = Phi^{-1}(1 - alpha_hat)
  int J_hat = 0;
  int J_hat_n = 0;
  int J_tilde = 0;
  std::vector<int> J_minus_set;
  double A_hat = 0.0;
  double lepski_factor = 1.1;
  std::map<int, double> s_hat;
  std::map<int, double> lepski_stat;  // sup over (x, J2 > J) of the standardized contrast
  std::vector<std::string> warnings;
};

struct SelectionOptions {
  Eigen::MatrixXd grid;  // empty: 100 points per axis on [0,1]
  double lepski_factor = 1.1;
  std::optional<int> j_max;  // skip the truncation search
};

/// Everything band construction needs after selection: fits over the index set, the
/// variance field with all contrasts, and the bootstrap table on the same draws.
struct SelectionRun {
  AdaptiveSelection selection;
  SieveModel model;
  FitMap fits;
  VarianceField field;
  BootstrapTable table;
  MultiplierPlan plan;

  const NpivFit& tilde_fit() const { return fits.at(selection.J_tilde); }
};

Eigen::MatrixXd default_grid(int dim);

SelectionRun select(const Sample& sample, const SieveModel& model, const MultiplierPlan& plan,
                    const SelectionOptions& options = {});

/// Rebuilds a run from a stored selection without re-running the selector.
SelectionRun replay(const Sample& sample, const SieveModel& model, const MultiplierPlan& plan,
                    const AdaptiveSelection& selection, const SelectionOptions& options = {});

}  // namespace npiv
