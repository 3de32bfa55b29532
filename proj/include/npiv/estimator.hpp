#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "npiv/sieve.hpp"

namespace npiv {

/// Observations (Y_i, X_i, W_i) with X and W already mapped into the unit cube.
/// W may have zero columns for series regression.
struct Sample {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Eigen::MatrixXd w;

  Eigen::Index n() const { return y.size(); }
};

void validate(const Sample& sample, const SieveModel& model);

/// TSLS sieve fit at one sieve dimension.
struct NpivFit {
  int J = 0;
  int K = 0;
  Eigen::MatrixXd psi;  // n x p
  Eigen::MatrixXd b;    // n x K (equal to psi in regression mode)
  Eigen::MatrixXd m;    // p x n influence matrix M_J
  Eigen::VectorXd c_hat;
  Eigen::VectorXd u_hat;
  double s_hat = 1.0;
  bool reduced_rank = false;
  bool regression = false;
  std::shared_ptr<const SieveSpace> space;

  Eigen::Index n() const { return u_hat.size(); }
};

using FitMap = std::map<int, NpivFit>;

/// Fit from precomputed design matrices; `b` empty means series regression.
NpivFit fit_design(const Eigen::VectorXd& y, Eigen::MatrixXd psi, Eigen::MatrixXd b, int J,
                   std::shared_ptr<const SieveSpace> space = nullptr);

NpivFit fit(const Sample& sample, const SieveModel& model, int J);

/// Smallest singular value of (B'B)^{-1/2} B'Psi (Psi'Psi)^{-1/2}, clamped to [0,1].
/// The second member is true when a Gram matrix had to be inverted on a reduced rank space.
std::pair<double, bool> compute_shat(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& b);

/// Rows of d^a h_J at `points`.
Eigen::VectorXd evaluate(const NpivFit& fit, const Eigen::MatrixXd& points, const MultiIndex& a = {});

/// sigma-tilde_{J,J2}(x) = s_J(x)' M_J diag(u_J u_J2) M_J2' s_J2(x) for each row of the selectors.
Eigen::VectorXd cross_variance(const NpivFit& f1, const Eigen::MatrixXd& s1, const NpivFit& f2,
                               const Eigen::MatrixXd& s2);

/// Point estimates, variances and contrast standard deviations on a grid.
struct VarianceField {
  Eigen::MatrixXd grid;
  MultiIndex derivative;
  std::vector<int> dims;
  std::map<int, Eigen::MatrixXd> selectors;  // G x p rows s_J(x)'
  std::map<int, Eigen::VectorXd> estimate;
  std::map<int, Eigen::VectorXd> sigma2;
  std::map<std::pair<int, int>, Eigen::VectorXd> cross;
  std::map<std::pair<int, int>, Eigen::VectorXd> contrast_sd;

  Eigen::VectorXd sigma(int J) const { return sigma2.at(J).cwiseSqrt(); }
};

/// Ordered pairs (J, J2) with J2 > J drawn from `dims`.
std::vector<std::pair<int, int>> ordered_pairs(const std::vector<int>& dims);

/// Builds the field for every fit in `fits`. Selector rows come from `target_space`
/// when given, else from each fit's own space. Throws degenerate_variance when some
/// sigma_J vanishes on the grid.
VarianceField variance_field(const FitMap& fits, const Eigen::MatrixXd& grid, const MultiIndex& a = {},
                             const std::vector<std::pair<int, int>>& contrasts = {},
                             const SieveSpace* target_space = nullptr);

}  // namespace npiv
