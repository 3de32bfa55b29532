#include "npiv/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

namespace npiv {

namespace {

long long search_cap(Eigen::Index n) { return 8LL * n + 64; }

double contrast_statistic(const VarianceField& field, int J, int J2) {
  const Eigen::VectorXd& sd = field.contrast_sd.at({J, J2});
  const Eigen::VectorXd diff = field.estimate.at(J) - field.estimate.at(J2);
  const Eigen::VectorXd& v1 = field.sigma2.at(J);
  const Eigen::VectorXd& v2 = field.sigma2.at(J2);
  double sup = 0.0;
  for (Eigen::Index g = 0; g < sd.size(); ++g) {
    if (sd(g) > kContrastDegenerate * std::sqrt(std::max(v1(g) + v2(g), 0.0)))
      sup = std::max(sup, std::abs(diff(g)) / sd(g));
  }
  return sup;
}

FitMap fit_index_set(const Sample& sample, const SieveModel& model, const std::vector<int>& index_set,
                     FitMap* cache) {
  FitMap fits;
  for (int J : index_set) {
    if (cache) {
      auto it = cache->find(J);
      if (it != cache->end()) {
        fits.emplace(J, std::move(it->second));
        continue;
      }
    }
    fits.emplace(J, fit(sample, model, J));
  }
  return fits;
}

void build_field(SelectionRun& run, const Sample& sample, FitMap* cache, const SelectionOptions& options) {
  const auto& idx = run.selection.index_set;
  run.fits = fit_index_set(sample, run.model, idx, cache);
  const Eigen::MatrixXd grid = options.grid.size() > 0 ? options.grid : default_grid(run.model.space->target_dim());
  run.field = variance_field(run.fits, grid, {}, ordered_pairs(idx));
  run.table = bootstrap_table(run.fits, run.field, run.plan);
}

}  // namespace

JMaxResult j_hat_max_rule(const std::vector<int>& grid, double n,
                          const std::function<std::optional<double>(int)>& inverse_s) {
  if (grid.empty()) fail(ErrorKind::config, "empty sieve dimension grid");
  const double bound = 10.0 * std::sqrt(n);
  const double inf = std::numeric_limits<double>::infinity();
  auto lhs = [&](int J) {
    const auto g = inverse_s(J);
    if (!g) return inf;
    const double rate = J * std::sqrt(std::log(static_cast<double>(J)));
    return rate == 0.0 ? 0.0 : rate * *g;
  };

  JMaxResult out;
  if (!(lhs(grid[0]) <= bound)) {
    out.j_max = grid[0];
    out.first_violates = true;
    out.warnings.push_back("smallest sieve dimension J = " + std::to_string(grid[0]) +
                           " already violates the truncation bound; using it as J_max");
    return out;
  }
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (!(lhs(grid[i + 1]) <= bound)) {
      out.j_max = grid[i];
      return out;
    }
  }
  out.j_max = grid.back();
  out.no_bracket = true;
  out.warnings.push_back("truncation bound never crossed on the dimension grid; using J_max = " +
                         std::to_string(grid.back()));
  return out;
}

JMaxResult j_hat_max_npiv(const Sample& sample, const SieveModel& model, FitMap* cache) {
  if (model.is_regression()) fail(ErrorKind::precondition, "NPIV truncation needs an instrument sieve");
  validate(sample, model);
  std::map<int, double> s_hat;
  auto inverse_s = [&](int J) -> std::optional<double> {
    if (model.instrument_dim(J) > sample.n()) return std::nullopt;
    NpivFit f = fit(sample, model, J);
    s_hat[J] = f.s_hat;
    const double inv = f.s_hat > 0.0 ? 1.0 / f.s_hat : std::numeric_limits<double>::infinity();
    if (cache) cache->insert_or_assign(J, std::move(f));
    return inv;
  };
  const auto grid = model.space->dimension_grid(search_cap(sample.n()));
  JMaxResult out = j_hat_max_rule(grid, static_cast<double>(sample.n()), inverse_s);
  out.s_hat = std::move(s_hat);
  return out;
}

double upsilon(double n) { return std::max(1.0, std::pow(0.1 * std::log(n), 4)); }

JMaxResult j_hat_max_regression(double n, const std::vector<int>& grid) {
  if (!(n >= 2)) fail(ErrorKind::insufficient_sample, "regression truncation needs n >= 2");
  const double u = upsilon(n);
  return j_hat_max_rule(grid, n, [&](int J) -> std::optional<double> {
    if (J > n) return std::nullopt;
    return u;
  });
}

JMaxResult j_hat_max_regression(double n, const SieveSpace& space) {
  return j_hat_max_regression(n, space.dimension_grid(static_cast<long long>(8 * n) + 64));
}

Eigen::MatrixXd default_grid(int dim) { return make_grid(dim, 100); }

SelectionRun select(const Sample& sample, const SieveModel& model, const MultiplierPlan& plan,
                    const SelectionOptions& options) {
  validate(sample, model);
  SelectionRun run;
  run.model = model;
  run.plan = plan;
  AdaptiveSelection& sel = run.selection;
  sel.mode = model.is_regression() ? SelectionMode::regression : SelectionMode::npiv;
  sel.lepski_factor = options.lepski_factor;
  const double n = static_cast<double>(sample.n());

  FitMap cache;
  if (options.j_max) {
    model.space->level_of(*options.j_max);
    sel.J_hat_max = *options.j_max;
  } else {
    const JMaxResult jm = sel.mode == SelectionMode::npiv ? j_hat_max_npiv(sample, model, &cache)
                                                          : j_hat_max_regression(n, *model.space);
    sel.J_hat_max = jm.j_max;
    sel.warnings = jm.warnings;
  }
  if (sel.J_hat_max <= 1)
    fail(ErrorKind::config, "J_max = 1 leaves alpha_hat = 0; use a sieve with more than one function");

  const double floor = 0.1 * std::pow(std::log(static_cast<double>(sel.J_hat_max)), 2);
  for (int J : model.space->dimension_grid(sel.J_hat_max))
    if (J >= floor) sel.index_set.push_back(J);
  sel.alpha_hat = std::min(0.5, std::sqrt(std::log(static_cast<double>(sel.J_hat_max)) / sel.J_hat_max));

  build_field(run, sample, &cache, options);
  for (const auto& [J, f] : run.fits) sel.s_hat[J] = f.s_hat;

  if (sel.index_set.size() == 1) {
    sel.theta_star = boost::math::quantile(boost::math::normal(), 1.0 - sel.alpha_hat);
    sel.theta_fallback = true;
    sel.warnings.push_back("index set has a single dimension; theta* set to the normal quantile");
  } else {
    sel.theta_star = quantile(sup_t_contrast(run.table), 1.0 - sel.alpha_hat);
  }

  const auto& idx = sel.index_set;
  sel.J_hat = idx.back();
  bool found = false;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    double stat = 0.0;
    for (std::size_t j = i + 1; j < idx.size(); ++j) stat = std::max(stat, contrast_statistic(run.field, idx[i], idx[j]));
    sel.lepski_stat[idx[i]] = stat;
    if (!found && stat <= sel.lepski_factor * sel.theta_star) {
      sel.J_hat = idx[i];
      found = true;
    }
  }

  sel.J_hat_n = sel.J_hat_max;
  bool below = false;
  for (int J : idx)
    if (J < sel.J_hat_max) {
      sel.J_hat_n = J;
      below = true;
    }
  if (!below) sel.warnings.push_back("no index-set dimension below J_max; J_n set to J_max");

  sel.J_tilde = sel.mode == SelectionMode::npiv ? std::min(sel.J_hat, sel.J_hat_n) : sel.J_hat;
  if (sel.J_hat < sel.J_hat_n) {
    for (int J : idx)
      if (J < sel.J_hat_n) sel.J_minus_set.push_back(J);
  } else {
    sel.J_minus_set = idx;
  }
  sel.A_hat = sel.J_tilde > 1 ? std::max(0.0, std::log(std::log(static_cast<double>(sel.J_tilde)))) : 0.0;
  return run;
}

SelectionRun replay(const Sample& sample, const SieveModel& model, const MultiplierPlan& plan,
                    const AdaptiveSelection& selection, const SelectionOptions& options) {
  validate(sample, model);
  if (selection.index_set.empty()) fail(ErrorKind::config, "stored selection has an empty index set");
  if (std::find(selection.index_set.begin(), selection.index_set.end(), selection.J_tilde) ==
      selection.index_set.end())
    fail(ErrorKind::config, "stored J_tilde is not in the stored index set");
  SelectionRun run;
  run.model = model;
  run.plan = plan;
  run.selection = selection;
  build_field(run, sample, nullptr, options);
  return run;
}

}  // namespace npiv
