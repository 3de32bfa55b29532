#include "npiv/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "npiv/parallel.hpp"

namespace npiv {

namespace {

constexpr int kChunk = 32;

struct FieldTerm {
  Eigen::MatrixXd mu;        // M_J diag(u_J), p x n
  const Eigen::MatrixXd* s;  // selector rows, G x p
  Eigen::VectorXd inv_sigma;
};

struct PairTerm {
  int first;
  int second;
  std::vector<Eigen::Index> points;
  Eigen::VectorXd inv_sd;
};

VarianceField restrict_field(const VarianceField& field, const std::vector<int>& dims,
                             const std::vector<std::pair<int, int>>& pairs) {
  VarianceField out;
  out.grid = field.grid;
  out.derivative = field.derivative;
  for (int J : dims) {
    if (!field.sigma2.count(J)) fail(ErrorKind::precondition, "J = " + std::to_string(J) + " is not in the field");
    out.dims.push_back(J);
    out.selectors[J] = field.selectors.at(J);
    out.sigma2[J] = field.sigma2.at(J);
    out.estimate[J] = field.estimate.at(J);
  }
  for (const auto& key : pairs) {
    if (!(key.second > key.first)) fail(ErrorKind::precondition, "contrast pairs need J2 > J");
    const auto it = field.contrast_sd.find(key);
    if (it == field.contrast_sd.end()) fail(ErrorKind::precondition, "contrast pair is not in the field");
    out.contrast_sd[key] = it->second;
  }
  return out;
}

}  // namespace

Eigen::VectorXd draw_multipliers(const MultiplierPlan& plan, int b, Eigen::Index n) {
  std::seed_seq seq{static_cast<std::uint32_t>(plan.base_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(plan.base_seed >> 32), static_cast<std::uint32_t>(b)};
  std::mt19937_64 engine(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = normal(engine);
  return out;
}

BootstrapTable bootstrap_table(const FitMap& fits, const VarianceField& field, const MultiplierPlan& plan) {
  if (plan.n_draws < 1) fail(ErrorKind::config, "bootstrap needs at least one draw");
  if (field.dims.empty()) fail(ErrorKind::precondition, "bootstrap needs a nonempty dimension set");
  const Eigen::Index n = fits.at(field.dims.front()).n();

  BootstrapTable table;
  table.dims = field.dims;
  std::map<int, int> column;
  std::vector<FieldTerm> terms;
  for (int J : field.dims) {
    const NpivFit& f = fits.at(J);
    column[J] = static_cast<int>(terms.size());
    terms.push_back({f.m * f.u_hat.asDiagonal(), &field.selectors.at(J), field.sigma2.at(J).cwiseSqrt().cwiseInverse()});
  }

  std::vector<PairTerm> pair_terms;
  for (const auto& [key, sd] : field.contrast_sd) {
    if (!column.count(key.first) || !column.count(key.second))
      fail(ErrorKind::precondition, "contrast refers to a dimension outside the field");
    PairTerm pt{column[key.first], column[key.second], {}, {}};
    const Eigen::VectorXd scale = (field.sigma2.at(key.first) + field.sigma2.at(key.second)).cwiseMax(0.0).cwiseSqrt();
    std::vector<double> inv;
    for (Eigen::Index g = 0; g < sd.size(); ++g) {
      if (sd(g) > kContrastDegenerate * scale(g)) {
        pt.points.push_back(g);
        inv.push_back(1.0 / sd(g));
      }
    }
    pt.inv_sd = Eigen::Map<Eigen::VectorXd>(inv.data(), static_cast<Eigen::Index>(inv.size()));
    table.pairs.push_back(key);
    pair_terms.push_back(std::move(pt));
  }

  const int B = plan.n_draws;
  table.single.resize(B, static_cast<Eigen::Index>(terms.size()));
  if (!pair_terms.empty()) table.contrast = Eigen::VectorXd::Zero(B);

  const int chunks = (B + kChunk - 1) / kChunk;
  parallel_for(chunks, plan.threads, [&](int chunk) {
    const int b0 = chunk * kChunk;
    const int width = std::min(kChunk, B - b0);
    Eigen::MatrixXd omega(n, width);
    for (int k = 0; k < width; ++k) omega.col(k) = draw_multipliers(plan, b0 + k, n);

    std::vector<Eigen::MatrixXd> d(terms.size());
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const Eigen::MatrixXd v = terms[j].mu * omega;
      d[j].noalias() = (*terms[j].s) * v;
      const Eigen::MatrixXd t = terms[j].inv_sigma.asDiagonal() * d[j];
      table.single.block(b0, static_cast<Eigen::Index>(j), width, 1) = t.cwiseAbs().colwise().maxCoeff().transpose();
    }
    for (const auto& pt : pair_terms) {
      for (int k = 0; k < width; ++k) {
        double sup = table.contrast(b0 + k);
        for (std::size_t q = 0; q < pt.points.size(); ++q) {
          const Eigen::Index g = pt.points[q];
          sup = std::max(sup, std::abs(d[pt.first](g, k) - d[pt.second](g, k)) * pt.inv_sd(q));
        }
        table.contrast(b0 + k) = sup;
      }
    }
  });
  return table;
}

Eigen::VectorXd sup_t_single(const BootstrapTable& table, const std::vector<int>& J_set) {
  if (J_set.empty()) fail(ErrorKind::precondition, "sup over an empty dimension set");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(table.n_draws());
  for (int J : J_set) {
    const auto it = std::find(table.dims.begin(), table.dims.end(), J);
    if (it == table.dims.end()) fail(ErrorKind::precondition, "J = " + std::to_string(J) + " was not bootstrapped");
    out = out.cwiseMax(table.single.col(it - table.dims.begin()));
  }
  return out;
}

Eigen::VectorXd sup_t_contrast(const BootstrapTable& table) {
  if (table.pairs.empty()) fail(ErrorKind::precondition, "no contrast pairs were bootstrapped");
  return table.contrast;
}

Eigen::VectorXd sup_t_single(const FitMap& fits, const VarianceField& field, const MultiplierPlan& plan,
                             const std::vector<int>& J_set) {
  std::vector<int> dims = J_set;
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return sup_t_single(bootstrap_table(fits, restrict_field(field, dims, {}), plan), dims);
}

Eigen::VectorXd sup_t_contrast(const FitMap& fits, const VarianceField& field, const MultiplierPlan& plan,
                               const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) fail(ErrorKind::precondition, "contrast sup over an empty pair set");
  std::vector<int> dims;
  for (const auto& [J, J2] : pairs) {
    if (!(J2 > J)) fail(ErrorKind::precondition, "contrast pairs need J2 > J");
    dims.push_back(J);
    dims.push_back(J2);
  }
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return sup_t_contrast(bootstrap_table(fits, restrict_field(field, dims, pairs), plan));
}

double quantile(const Eigen::VectorXd& draws, double level) {
  if (draws.size() == 0) fail(ErrorKind::precondition, "quantile of an empty draw set");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::config, "quantile level must lie in (0,1)");
  std::vector<double> sorted(draws.data(), draws.data() + draws.size());
  const auto B = static_cast<long long>(sorted.size());
  long long k = static_cast<long long>(std::ceil(level * static_cast<double>(B) - 1e-9));
  k = std::clamp(k, 1LL, B);
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return sorted[k - 1];
}

}  // namespace npiv
