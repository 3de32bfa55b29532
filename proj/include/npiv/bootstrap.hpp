#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "npiv/estimator.hpp"

namespace npiv {

/// Draw b uses its own generator seeded from (base_seed, b), so the multipliers do
/// not depend on scheduling or on the number of threads.
struct MultiplierPlan {
  int n_draws = 1000;
  std::uint64_t base_seed = 0;
  int threads = 1;
};

/// n i.i.d. N(0,1) multipliers for draw b.
Eigen::VectorXd draw_multipliers(const MultiplierPlan& plan, int b, Eigen::Index n);

/// Per-draw sup-t statistics for one variance field.
///   single(b, j):  sup_x |D*_J(x)| / sigma_J(x) for J = dims[j]
///   contrast(b):   sup over (x, J, J2) of |D*_J(x) - D*_J2(x)| / sigma_{J,J2}(x)
struct BootstrapTable {
  std::vector<int> dims;
  Eigen::MatrixXd single;
  std::vector<std::pair<int, int>> pairs;
  Eigen::VectorXd contrast;

  int n_draws() const { return static_cast<int>(single.rows()); }
};

/// Contrast points whose sd is at most this fraction of sqrt(sigma_J^2 + sigma_J2^2)
/// are treated as degenerate and left out of the sup.
inline constexpr double kContrastDegenerate = 1e-8;

/// Runs the multiplier bootstrap for every fit in the field; contrasts follow the
/// pairs stored in `field.contrast_sd`.
BootstrapTable bootstrap_table(const FitMap& fits, const VarianceField& field, const MultiplierPlan& plan);

/// Per-draw max of the single sups over `J_set`.
Eigen::VectorXd sup_t_single(const BootstrapTable& table, const std::vector<int>& J_set);
Eigen::VectorXd sup_t_contrast(const BootstrapTable& table);

Eigen::VectorXd sup_t_single(const FitMap& fits, const VarianceField& field, const MultiplierPlan& plan,
                             const std::vector<int>& J_set);
Eigen::VectorXd sup_t_contrast(const FitMap& fits, const VarianceField& field, const MultiplierPlan& plan,
                               const std::vector<std::pair<int, int>>& pairs);

/// Order statistic ceil(level * B) of the draws.
double quantile(const Eigen::VectorXd& draws, double level);

struct BootstrapQuantiles {
  double theta_star = 0.0;
  double z_star = 0.0;
  double z_star_deriv = 0.0;
  Eigen::VectorXd draw_sups;
};

}  // namespace npiv
