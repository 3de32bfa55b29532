#include "npiv/simgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/special_functions/erf.hpp>

#include "npiv/parallel.hpp"
#include "npiv/ucb.hpp"

namespace npiv {

const char* to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::npiv_sine_log: return "npiv_sine_log";
    case DesignKind::reg_wiggly: return "reg_wiggly";
    case DesignKind::trade_lognormal: return "trade_lognormal";
    case DesignKind::trade_pareto: return "trade_pareto";
  }
  return "unknown";
}

DesignKind parse_design(const std::string& name) {
  for (auto kind : {DesignKind::npiv_sine_log, DesignKind::reg_wiggly, DesignKind::trade_lognormal,
                    DesignKind::trade_pareto})
    if (name == to_string(kind)) return kind;
  fail(ErrorKind::config, "unknown design '" + name + "'");
}

namespace trade {

std::vector<double> default_z_support(int m) {
  std::vector<double> z(m);
  for (int k = 0; k < m; ++k) z[k] = 5.0 + 5.0 * (k + 0.5) / m;
  return z;
}

double log_eps(double pi, const TradeParams& p) {
  return p.mu + p.sigma * std::sqrt(2.0) * boost::math::erfc_inv(2.0 * pi);
}

double share_from_log_eps(double log_eps, const TradeParams& p) {
  return 0.5 * std::erfc((log_eps - p.mu) / (p.sigma * std::sqrt(2.0)));
}

double log_rho(double pi, const TradeParams& p) {
  const double a = p.sigma * p.sigma / std::sqrt(2.0);
  const double e = boost::math::erfc_inv(2.0 * pi);
  return p.mu + 0.5 * p.sigma * p.sigma - std::log(2.0 * pi) + std::log1p(std::erf(a - e));
}

double elasticity(double pi, const TradeParams& p) {
  const double a = p.sigma * p.sigma / std::sqrt(2.0);
  const double e = boost::math::erfc_inv(2.0 * pi);
  return -1.0 + 2.0 * pi * std::exp(-a * (a - 2.0 * e)) / (1.0 + std::erf(a - e));
}

double share_to_x(double pi) { return std::clamp(std::log(pi) / 10.0 + 1.0, 0.0, 1.0); }
double x_to_share(double x) { return std::exp(10.0 * (x - 1.0)); }

}  // namespace trade

namespace {

bool is_trade(DesignKind kind) { return kind == DesignKind::trade_lognormal || kind == DesignKind::trade_pareto; }

double normal_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

SplineFamily cubic() { return SplineFamily{4, 1, KnotRule::uniform_dyadic, {}}; }

Generated generate_npiv(const DesignOptions& d, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const Truth t = truth(d);
  Generated g;
  Sample& s = g.sample;
  s.y.resize(n);
  s.x.resize(n, 1);
  s.w.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double e1 = z(rng), e2 = z(rng), zi = z(rng);
    const bool D = coin(rng);
    const double u = e1, v = 0.75 * e1 + std::sqrt(1.0 - 0.75 * 0.75) * e2;
    s.w(i, 0) = normal_cdf(zi);
    s.x(i, 0) = normal_cdf(D ? zi + v : v);
    s.y(i) = t.h(s.x(i, 0)) + d.noise_scale * u;
  }
  return g;
}

Generated generate_wiggly(const DesignOptions& d, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  const Truth t = truth(d);
  Generated g;
  Sample& s = g.sample;
  s.y.resize(n);
  s.x.resize(n, 1);
  s.w.resize(n, 0);
  for (int i = 0; i < n; ++i) {
    s.x(i, 0) = unif(rng);
    s.y(i) = t.h(s.x(i, 0)) + d.noise_scale * z(rng);
  }
  return g;
}

Generated generate_trade(const DesignOptions& d, int n, std::mt19937_64& rng) {
  const TradeParams& p = d.trade;
  const std::vector<double> support = p.z_support.empty() ? trade::default_z_support() : p.z_support;
  if (p.countries < 2) fail(ErrorKind::config, "trade designs need at least two countries");
  const Eigen::LLT<Eigen::Matrix2d> chol(p.error_cov);
  if (chol.info() != Eigen::Success) fail(ErrorKind::config, "trade error covariance must be positive definite");
  const Eigen::Matrix2d L = chol.matrixL();

  std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
  std::uniform_int_distribution<int> country(0, p.countries - 1);
  std::normal_distribution<double> z(0.0, 1.0);
  Generated g;
  Sample& s = g.sample;
  s.y.resize(n);
  s.x.resize(n, 1);
  Eigen::VectorXd zs(n);
  g.fixed_effects.names = {"exporter", "importer"};
  g.fixed_effects.factors.assign(2, std::vector<int>(n));
  for (int i = 0; i < n; ++i) {
    zs(i) = support[pick(rng)];
    g.fixed_effects.factors[0][i] = country(rng);
    g.fixed_effects.factors[1][i] = country(rng);
    const Eigen::Vector2d e = L * Eigen::Vector2d(z(rng), z(rng));
    const double pi = trade::share_from_log_eps(p.z_slope * zs(i) + p.z_shift + e(0), p);
    const double log_rho = d.kind == DesignKind::trade_pareto ? p.pareto_slope * std::log(pi) : trade::log_rho(pi, p);
    // delta_i = zeta_j = 0, so y = log xbar + sigma_tilde kappa z collapses to log rho + e_rho.
    const double log_xbar = log_rho - p.sigma_tilde * p.kappa * zs(i) + d.noise_scale * e(1);
    s.y(i) = log_xbar + p.sigma_tilde * p.kappa * zs(i);
    s.x(i, 0) = trade::share_to_x(pi);
  }
  s.w = apply_transform(SupportTransform::empirical_cdf(), zs);
  return g;
}

}  // namespace

Truth truth(const DesignOptions& design) {
  Truth t;
  switch (design.kind) {
    case DesignKind::npiv_sine_log:
      t.h = [](double x) { return std::sin(4.0 * x) * std::log(x); };
      t.dh = [](double x) { return 4.0 * std::cos(4.0 * x) * std::log(x) + std::sin(4.0 * x) / x; };
      break;
    case DesignKind::reg_wiggly: {
      const double w = 15.0 * std::numbers::pi;
      t.h = [w](double x) { return std::sin(w * x) * std::cos(x); };
      t.dh = [w](double x) { return w * std::cos(w * x) * std::cos(x) - std::sin(w * x) * std::sin(x); };
      break;
    }
    case DesignKind::trade_lognormal: {
      const TradeParams p = design.trade;
      t.h = [p](double x) { return trade::log_rho(trade::x_to_share(x), p); };
      t.dh = [p](double x) { return 10.0 * trade::elasticity(trade::x_to_share(x), p); };
      t.report_scale = 0.1;
      break;
    }
    case DesignKind::trade_pareto: {
      const double slope = design.trade.pareto_slope;
      t.h = [slope](double x) { return slope * std::log(trade::x_to_share(x)); };
      t.dh = [slope](double) { return 10.0 * slope; };
      t.report_scale = 0.1;
      break;
    }
  }
  return t;
}

Generated generate(const DesignOptions& design, int n, std::uint64_t seed) {
  if (n < 10) fail(ErrorKind::insufficient_sample, "simulation designs need n >= 10");
  std::mt19937_64 rng(seed);
  switch (design.kind) {
    case DesignKind::npiv_sine_log: return generate_npiv(design, n, rng);
    case DesignKind::reg_wiggly: return generate_wiggly(design, n, rng);
    default: return generate_trade(design, n, rng);
  }
}

SieveModel design_model(const DesignOptions& design, const Sample& sample) {
  switch (design.kind) {
    case DesignKind::npiv_sine_log: return npiv_model(cubic(), make_instrument_spec(4, 1, 1));
    case DesignKind::reg_wiggly: return regression_model(cubic());
    default: {
      SplineFamily x_family{4, 1, KnotRule::empirical_quantile, sample.x};
      return npiv_model(x_family, make_instrument_spec(4, 1, 1));
    }
  }
}

Eigen::MatrixXd report_grid(const DesignOptions& design, int points) {
  switch (design.kind) {
    case DesignKind::npiv_sine_log: return make_grid(1, points, 0.01, 0.99);
    case DesignKind::reg_wiggly: return make_grid(1, points, 0.0, 1.0);
    default: return make_grid(1, points, trade::share_to_x(0.001), trade::share_to_x(0.5));
  }
}

SelectionRun estimate(const DesignOptions& design, Generated& data, const MultiplierPlan& plan,
                      const Eigen::MatrixXd& grid) {
  const SieveModel model = design_model(design, data.sample);
  SelectionOptions options;
  options.grid = grid;
  if (is_trade(design.kind) && design.trade.fixed_effects) {
    const JMaxResult jm = j_hat_max_npiv(data.sample, model);
    data.sample.y = partial_out_fixed_effects(data.sample, data.fixed_effects, model, jm.j_max).adjusted_y;
    options.j_max = jm.j_max;
  }
  return select(data.sample, model, plan, options);
}

std::pair<std::uint64_t, std::uint64_t> replication_seeds(std::uint64_t seed, int n, int r) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(r)};
  std::array<std::uint32_t, 4> words{};
  seq.generate(words.begin(), words.end());
  return {(std::uint64_t(words[0]) << 32) | words[1], (std::uint64_t(words[2]) << 32) | words[3]};
}

const McRow& McReport::row(int n, const std::string& target, const std::string& method) const {
  for (const auto& r : rows)
    if (r.n == n && r.target == target && r.method == method) return r;
  fail(ErrorKind::precondition, "no report row for n = " + std::to_string(n) + ", " + target + ", " + method);
}

namespace {

struct Cell {
  double loss = 0.0;
  bool cover90 = false;
  bool cover95 = false;
  double width = 0.0;
  bool reject = false;
};

struct Outcome {
  int J_tilde = 0;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  std::vector<bool> sweep;
};

Cell score(const BandResult& b95, const BandResult& b90, const Eigen::VectorXd& truth_on_grid, double scale) {
  Cell c;
  c.loss = scale * (b95.center - truth_on_grid).cwiseAbs().maxCoeff();
  c.cover95 = covers(b95, truth_on_grid);
  c.cover90 = covers(b90, truth_on_grid);
  c.width = scale * 2.0 * b95.halfwidth.mean();
  c.reject = excludes_constant(b95);
  return c;
}

Outcome replicate(const McOptions& o, int n, int r) {
  const auto [data_seed, boot_seed] = replication_seeds(o.seed, n, r);
  Generated data = generate(o.design, n, data_seed);
  const MultiplierPlan plan{o.draws, boot_seed, 1};
  const Eigen::MatrixXd grid = report_grid(o.design, o.grid_points);
  const SelectionRun run = estimate(o.design, data, plan, grid);
  const Truth t = truth(o.design);

  Eigen::VectorXd h0(grid.rows()), d0(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    h0(g) = t.h(grid(g, 0));
    d0(g) = t.dh(grid(g, 0));
  }

  Outcome out;
  out.J_tilde = run.selection.J_tilde;
  const TargetBootstrap tb_h = target_bootstrap(run);
  out.cells[{"h", "data_driven"}] = score(band_target(run, tb_h, 0.05), band_target(run, tb_h, 0.10), h0, 1.0);
  for (double A : o.A_values) out.sweep.push_back(covers(band_target(run, tb_h, 0.05, A), h0));
  if (o.derivative) {
    const TargetBootstrap tb_d = target_bootstrap(run, {1});
    out.cells[{"deriv", "data_driven"}] =
        score(band_target(run, tb_d, 0.05), band_target(run, tb_d, 0.10), d0, t.report_scale);
  }

  for (int J : o.fixed_J) {
    const auto it = run.fits.find(J);
    const NpivFit f = it != run.fits.end() ? it->second : fit(data.sample, run.model, J);
    const std::string method = "J=" + std::to_string(J);
    auto hb = undersmoothed_bands(f, grid, plan, {0.05, 0.10});
    out.cells[{"h", method}] = score(hb[0], hb[1], h0, 1.0);
    if (o.derivative) {
      auto db = undersmoothed_bands(f, grid, plan, {0.05, 0.10}, {1});
      out.cells[{"deriv", method}] = score(db[0], db[1], d0, t.report_scale);
    }
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

McReport run_mc(const McOptions& o) {
  if (o.reps < 1) fail(ErrorKind::config, "Monte Carlo needs reps >= 1");
  if (o.n_list.empty()) fail(ErrorKind::config, "Monte Carlo needs at least one sample size");
  for (double A : o.A_values)
    if (!(A >= 0.0)) fail(ErrorKind::config, "A values must be >= 0");

  McReport report;
  report.design = to_string(o.design.kind);
  report.reps = o.reps;
  report.draws = o.draws;
  report.seed = o.seed;

  for (int n : o.n_list) {
    std::vector<Outcome> outcomes(o.reps);
    parallel_for(o.reps, o.threads, [&](int r) {
      try {
        outcomes[r] = replicate(o, n, r);
      } catch (const Error& e) {
        throw Error(e.kind(), "replication " + std::to_string(r) + " (n = " + std::to_string(n) + "): " + e.what());
      }
    });

    double J_sum = 0.0;
    for (const auto& oc : outcomes) {
      ++report.J_tilde_counts[n][oc.J_tilde];
      J_sum += oc.J_tilde;
    }
    report.mean_J_tilde[n] = J_sum / o.reps;

    const double R = o.reps;
    for (const auto& [key, first] : outcomes.front().cells) {
      McRow row;
      row.n = n;
      row.target = key.first;
      row.method = key.second;
      row.reps = o.reps;
      row.seed = o.seed;
      std::vector<double> loss, ratio;
      double c90 = 0, c95 = 0, width = 0, reject = 0;
      for (const auto& oc : outcomes) {
        const Cell& c = oc.cells.at(key);
        const Cell& dd = oc.cells.at({key.first, "data_driven"});
        loss.push_back(c.loss);
        ratio.push_back(c.width / dd.width);
        c90 += c.cover90;
        c95 += c.cover95;
        width += c.width;
        reject += c.reject;
      }
      row.loss_mean = std::accumulate(loss.begin(), loss.end(), 0.0) / R;
      row.loss_median = median(loss);
      double ss = 0.0;
      for (double l : loss) ss += (l - row.loss_mean) * (l - row.loss_mean);
      row.loss_se = o.reps > 1 ? std::sqrt(ss / (R - 1) / R) : 0.0;
      row.coverage90 = c90 / R;
      row.coverage95 = c95 / R;
      row.coverage95_se = std::sqrt(row.coverage95 * (1.0 - row.coverage95) / R);
      row.width_mean = width / R;
      row.width_ratio_mean = std::accumulate(ratio.begin(), ratio.end(), 0.0) / R;
      row.width_ratio_median = median(ratio);
      row.reject = reject / R;
      report.rows.push_back(row);
    }

    for (std::size_t a = 0; a < o.A_values.size(); ++a) {
      SweepRow s;
      s.n = n;
      s.A = o.A_values[a];
      for (const auto& oc : outcomes) s.coverage += oc.sweep[a];
      s.coverage /= R;
      s.se = std::sqrt(s.coverage * (1.0 - s.coverage) / R);
      report.sweep.push_back(s);
    }
  }
  // data_driven rows first within each (n, target)
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const McRow& a, const McRow& b) {
    if (a.n != b.n) return a.n < b.n;
    if (a.target != b.target) return a.target == "h";
    if ((a.method == "data_driven") != (b.method == "data_driven")) return a.method == "data_driven";
    return std::stoi(a.method.substr(2)) < std::stoi(b.method.substr(2));
  });
  return report;
}

std::vector<SweepRow> a_sweep(const DesignOptions& design, int n, int reps, const std::vector<double>& A_values,
                              int draws, std::uint64_t seed) {
  McOptions o;
  o.design = design;
  o.n_list = {n};
  o.reps = reps;
  o.draws = draws;
  o.seed = seed;
  o.A_values = A_values;
  return run_mc(o).sweep;
}

}  // namespace npiv
