#include "npiv/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef NPIV_VERSION
#define NPIV_VERSION "0.0.0"
#endif

namespace npiv::cli {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::data:
    case ErrorKind::domain: return exit_data;
    case ErrorKind::degenerate_column:
    case ErrorKind::degenerate_variance:
    case ErrorKind::insufficient_sample: return exit_numerical;
    default: return exit_config;
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(trim(cell));
  return out;
}

}  // namespace

int Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

Table parse_csv(std::istream& in) {
  Table t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) cells[0] = cells[0].substr(3);
      t.header = std::move(cells);
      for (const auto& h : t.header)
        if (std::count(t.header.begin(), t.header.end(), h) > 1) fail(ErrorKind::data, "duplicate column '" + h + "'");
      continue;
    }
    const int row = static_cast<int>(t.rows.size()) + 1;
    if (cells.size() != t.header.size())
      fail(ErrorKind::data, "row " + std::to_string(row) + " (line " + std::to_string(line_no) + ") has " +
                                std::to_string(cells.size()) + " fields, expected " +
                                std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
    t.lines.push_back(line_no);
  }
  if (t.header.empty()) fail(ErrorKind::data, "input has no header row");
  if (t.rows.empty()) fail(ErrorKind::data, "input has no data rows");
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open input '" + path + "'");
  return parse_csv(in);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string level_label(double alpha) {
  const double pct = 100.0 * (1.0 - alpha);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", std::round(pct * 1e6) / 1e6);
  return buf;
}

// ---------------------------------------------------------------------------
// Selection JSON

namespace {

const char* mode_name(SelectionMode m) { return m == SelectionMode::npiv ? "npiv" : "regression"; }

json int_map(const std::map<int, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> int_map_from(const json& j) {
  std::map<int, double> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[std::stoi(it.key())] = it.value().get<double>();
  return m;
}

}  // namespace

json selection_to_json(const AdaptiveSelection& s) {
  return json{{"mode", mode_name(s.mode)},
              {"J_hat_max", s.J_hat_max},
              {"index_set", s.index_set},
              {"alpha_hat", s.alpha_hat},
              {"theta_star", s.theta_star},
              {"theta_fallback", s.theta_fallback},
              {"J_hat", s.J_hat},
              {"J_hat_n", s.J_hat_n},
              {"J_tilde", s.J_tilde},
              {"J_minus_set", s.J_minus_set},
              {"A_hat", s.A_hat},
              {"lepski_factor", s.lepski_factor},
              {"s_hat", int_map(s.s_hat)},
              {"lepski_stat", int_map(s.lepski_stat)},
              {"warnings", s.warnings}};
}

AdaptiveSelection selection_from_json(const json& j) {
  try {
    AdaptiveSelection s;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode != "npiv" && mode != "regression") fail(ErrorKind::config, "unknown selection mode '" + mode + "'");
    s.mode = mode == "npiv" ? SelectionMode::npiv : SelectionMode::regression;
    s.J_hat_max = j.at("J_hat_max").get<int>();
    s.index_set = j.at("index_set").get<std::vector<int>>();
    s.alpha_hat = j.at("alpha_hat").get<double>();
    s.theta_star = j.at("theta_star").get<double>();
    s.theta_fallback = j.value("theta_fallback", false);
    s.J_hat = j.at("J_hat").get<int>();
    s.J_hat_n = j.at("J_hat_n").get<int>();
    s.J_tilde = j.at("J_tilde").get<int>();
    s.J_minus_set = j.at("J_minus_set").get<std::vector<int>>();
    s.A_hat = j.at("A_hat").get<double>();
    s.lepski_factor = j.value("lepski_factor", 1.1);
    if (j.contains("s_hat")) s.s_hat = int_map_from(j.at("s_hat"));
    if (j.contains("lepski_stat")) s.lepski_stat = int_map_from(j.at("lepski_stat"));
    if (j.contains("warnings")) s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed selection file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// fit / bands

namespace {

struct AxisTransform {
  std::string column;
  std::string kind;
  double lo = 0.0;
  double hi = 1.0;
  // unit-scale value u relates to the raw value v by u = (v - offset) * slope where affine
  double slope = 1.0;
  double offset = 0.0;

  double to_raw(double u) const { return u / slope + offset; }
};

std::vector<std::string> columns_with_prefix(const Table& t, const std::string& bare, const std::string& prefix) {
  std::vector<std::string> out;
  if (t.column(bare) >= 0) out.push_back(bare);
  for (int k = 1;; ++k) {
    const std::string name = prefix + std::to_string(k);
    if (t.column(name) < 0) break;
    out.push_back(name);
  }
  return out;
}

Eigen::VectorXd numeric_column(const Table& t, const std::string& name) {
  const int c = t.column(name);
  if (c < 0) fail(ErrorKind::config, "column '" + name + "' not found in the input");
  Eigen::VectorXd v(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& cell = t.rows[r][c];
    double value = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(value))
      fail(ErrorKind::data, "row " + std::to_string(r + 1) + " (line " + std::to_string(t.lines[r]) +
                                "): column '" + name + "' has non-numeric value '" + cell + "'");
    v(r) = value;
  }
  return v;
}

std::vector<int> factor_column(const Table& t, const std::string& name) {
  const int c = t.column(name);
  if (c < 0) fail(ErrorKind::config, "column '" + name + "' not found in the input");
  std::map<std::string, int> levels;
  for (const auto& row : t.rows) levels.emplace(row[c], 0);
  int id = 0;
  for (auto& [level, code] : levels) code = id++;
  std::vector<int> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.push_back(levels.at(row[c]));
  return out;
}

AxisTransform make_transform(const std::string& column, const std::string& kind, const Eigen::VectorXd& raw) {
  AxisTransform tr;
  tr.column = column;
  tr.kind = kind;
  if (kind == "unit") {
    if (raw.minCoeff() < 0.0 || raw.maxCoeff() > 1.0)
      fail(ErrorKind::data, "column '" + column + "' must lie in [0,1] under the unit transform");
  } else if (kind == "minmax") {
    tr.lo = raw.minCoeff();
    tr.hi = raw.maxCoeff();
    if (!(tr.hi > tr.lo)) fail(ErrorKind::data, "column '" + column + "' is constant");
    tr.slope = 1.0 / (tr.hi - tr.lo);
    tr.offset = tr.lo;
  } else if (kind == "log_share") {
    tr.slope = 0.1;
    tr.offset = -10.0;
  } else if (kind == "ecdf") {
    tr.slope = 0.0;
  } else {
    fail(ErrorKind::config, "unknown transform '" + kind + "'");
  }
  return tr;
}

Eigen::VectorXd apply(const AxisTransform& tr, const Eigen::VectorXd& raw) {
  if (tr.kind == "unit") return raw;
  if (tr.kind == "minmax") return apply_transform(SupportTransform::affine(tr.lo, tr.hi), raw);
  if (tr.kind == "log_share") return apply_transform(SupportTransform::log_share_clamp(), raw);
  return apply_transform(SupportTransform::empirical_cdf(), raw);
}

void validate_config(const RunConfig& c) {
  const std::vector<std::string> modes{"auto", "npiv", "regression", "additive", "partially_linear"};
  if (std::find(modes.begin(), modes.end(), c.mode) == modes.end())
    fail(ErrorKind::config, "unknown mode '" + c.mode + "'");
  if (c.knot_rule != "dyadic" && c.knot_rule != "quantile")
    fail(ErrorKind::config, "knot rule must be dyadic or quantile");
  if (c.x_transform != "unit" && c.x_transform != "minmax" && c.x_transform != "log_share")
    fail(ErrorKind::config, "x transform must be unit, minmax or log_share");
  if (c.w_transform != "unit" && c.w_transform != "minmax" && c.w_transform != "ecdf")
    fail(ErrorKind::config, "w transform must be unit, minmax or ecdf");
  if (c.order < 2) fail(ErrorKind::config, "spline order must be at least 2");
  if (c.q < 0) fail(ErrorKind::config, "q must be nonnegative");
  if (c.grid_points < 1) fail(ErrorKind::config, "grid needs at least one point per axis");
  if (!(0.0 <= c.grid_lo && c.grid_lo <= c.grid_hi && c.grid_hi <= 1.0))
    fail(ErrorKind::config, "grid interval must satisfy 0 <= lo <= hi <= 1");
  if (c.alphas.empty()) fail(ErrorKind::config, "at least one alpha is needed");
  for (double a : c.alphas)
    if (!(a > 0.0 && a < 1.0)) fail(ErrorKind::config, "alpha values must lie in (0,1)");
  if (c.draws < 1) fail(ErrorKind::config, "bootstrap draws must be positive");
  if (c.threads < 1) fail(ErrorKind::config, "threads must be positive");
  if (c.np_dim < 1) fail(ErrorKind::config, "np-dim must be at least 1");
  for (int a : c.derivative)
    if (a < 0) fail(ErrorKind::config, "derivative orders must be nonnegative");
}

struct Prepared {
  Sample sample;
  SieveModel model;
  std::vector<AxisTransform> x_transforms;  // nonparametric axes only
  std::vector<AxisTransform> w_transforms;
  std::vector<std::string> x_cols, w_cols, fe_cols, linear_cols;
  FixedEffectsPlan fe;
  std::string mode;
};

Prepared prepare(const RunConfig& c, const Table& t) {
  Prepared p;
  if (t.column(c.y_col) < 0) fail(ErrorKind::config, "column '" + c.y_col + "' not found in the input");
  p.x_cols = c.x_cols.empty() ? columns_with_prefix(t, "x", "x") : c.x_cols;
  p.w_cols = c.w_cols.empty() ? columns_with_prefix(t, "w", "w") : c.w_cols;
  if (c.fixed_effects && c.fe_cols.empty()) {
    for (const auto& h : t.header)
      if (h.rfind("fe_", 0) == 0) p.fe_cols.push_back(h);
  } else if (c.fixed_effects) {
    p.fe_cols = c.fe_cols;
  }
  if (p.x_cols.empty()) fail(ErrorKind::config, "no regressor columns (x or x1, x2, ...) in the input");

  p.mode = c.mode == "auto" ? (p.w_cols.empty() ? "regression" : "npiv") : c.mode;
  if (p.mode == "npiv" && p.w_cols.empty()) fail(ErrorKind::config, "npiv mode needs instrument columns (w or w1, ...)");
  if (p.mode == "regression" && !p.w_cols.empty()) fail(ErrorKind::config, "regression mode takes no instrument columns");

  std::vector<std::string> np_cols = p.x_cols;
  if (p.mode == "partially_linear") {
    if (c.np_dim > static_cast<int>(p.x_cols.size())) fail(ErrorKind::config, "np-dim exceeds the number of x columns");
    np_cols.assign(p.x_cols.begin(), p.x_cols.begin() + c.np_dim);
    p.linear_cols.assign(p.x_cols.begin() + c.np_dim, p.x_cols.end());
    if (p.linear_cols.empty()) fail(ErrorKind::config, "partially linear mode needs at least one linear x column");
  }

  Sample& s = p.sample;
  s.y = numeric_column(t, c.y_col);
  const Eigen::Index n = s.y.size();
  s.x.resize(n, static_cast<Eigen::Index>(np_cols.size()));
  for (std::size_t k = 0; k < np_cols.size(); ++k) {
    const Eigen::VectorXd raw = numeric_column(t, np_cols[k]);
    p.x_transforms.push_back(make_transform(np_cols[k], c.x_transform, raw));
    s.x.col(k) = apply(p.x_transforms.back(), raw);
  }
  s.w.resize(n, static_cast<Eigen::Index>(p.w_cols.size()));
  for (std::size_t k = 0; k < p.w_cols.size(); ++k) {
    const Eigen::VectorXd raw = numeric_column(t, p.w_cols[k]);
    p.w_transforms.push_back(make_transform(p.w_cols[k], c.w_transform, raw));
    s.w.col(k) = apply(p.w_transforms.back(), raw);
  }
  Eigen::MatrixXd linear(n, static_cast<Eigen::Index>(p.linear_cols.size()));
  for (std::size_t k = 0; k < p.linear_cols.size(); ++k) linear.col(k) = numeric_column(t, p.linear_cols[k]);
  for (const auto& f : p.fe_cols) {
    p.fe.names.push_back(f);
    p.fe.factors.push_back(factor_column(t, f));
  }

  const KnotRule rule = c.knot_rule == "quantile" ? KnotRule::empirical_quantile : KnotRule::uniform_dyadic;
  const int dx = static_cast<int>(s.x.cols());
  const int dw = static_cast<int>(s.w.cols());
  auto instruments = [&](int x_dim) -> std::optional<InstrumentSpec> {
    if (dw == 0) return std::nullopt;
    return make_instrument_spec(c.order, x_dim, dw, c.q);
  };

  if (p.mode == "additive") {
    std::vector<SplineFamily> families;
    for (int k = 0; k < dx; ++k)
      families.push_back(SplineFamily{c.order, 1, rule,
                                      rule == KnotRule::empirical_quantile ? Eigen::MatrixXd(s.x.col(k)) : Eigen::MatrixXd()});
    p.model = SieveModel{std::make_shared<AdditiveSplineSpace>(families), instruments(dx), {}};
  } else {
    SplineFamily family{c.order, dx, rule, rule == KnotRule::empirical_quantile ? s.x : Eigen::MatrixXd()};
    const SieveModel np = dw > 0 ? npiv_model(family, *instruments(dx)) : regression_model(family);
    p.model = p.mode == "partially_linear" ? partially_linear_model(np, linear) : np;
  }
  if (!c.derivative.empty() && static_cast<int>(c.derivative.size()) != p.model.space->target_dim())
    fail(ErrorKind::config, "derivative needs one order per nonparametric axis (" +
                                std::to_string(p.model.space->target_dim()) + ")");
  return p;
}

std::string derivative_suffix(const MultiIndex& a) {
  std::string s = "_d";
  for (int v : a) s += std::to_string(v);
  return s;
}

void write_estimates(const std::filesystem::path& path, const FitResult& r, const std::vector<std::string>& x_names,
                     const std::vector<double>& alphas, const MultiIndex& a, double deriv_scale) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::config, "cannot write '" + path.string() + "'");
  std::vector<std::string> head = x_names;
  auto add_block = [&](const std::string& suffix) {
    head.push_back("center" + suffix);
    for (double al : alphas) {
      head.push_back("lo" + level_label(al) + suffix);
      head.push_back("hi" + level_label(al) + suffix);
    }
    head.push_back("sigma" + suffix);
  };
  add_block("");
  if (!r.deriv_bands.empty()) add_block(derivative_suffix(a));
  for (std::size_t i = 0; i < head.size(); ++i) out << (i ? "," : "") << head[i];
  out << '\n';

  auto write_block = [&](const std::vector<BandResult>& bands, Eigen::Index g, double scale) {
    out << ',' << format_double(scale * bands.front().center(g));
    for (const auto& b : bands) {
      out << ',' << format_double(scale * (b.center(g) - b.halfwidth(g)));
      out << ',' << format_double(scale * (b.center(g) + b.halfwidth(g)));
    }
    out << ',' << format_double(scale * bands.front().sigma(g));
  };
  for (Eigen::Index g = 0; g < r.raw_grid.rows(); ++g) {
    for (Eigen::Index k = 0; k < r.raw_grid.cols(); ++k) out << (k ? "," : "") << format_double(r.raw_grid(g, k));
    write_block(r.bands, g, 1.0);
    if (!r.deriv_bands.empty()) write_block(r.deriv_bands, g, deriv_scale);
    out << '\n';
  }
}

json transform_json(const AxisTransform& t) {
  return json{{"column", t.column}, {"kind", t.kind}, {"lo", t.lo}, {"hi", t.hi}};
}

json config_json(const RunConfig& c) {
  json j{{"command", c.command},       {"input", c.input},           {"output_dir", c.output_dir},
         {"mode", c.mode},             {"y", c.y_col},               {"x", c.x_cols},
         {"w", c.w_cols},              {"fe", c.fe_cols}, {"fixed_effects", c.fixed_effects},            {"order", c.order},
         {"q", c.q},                   {"knot_rule", c.knot_rule},   {"x_transform", c.x_transform},
         {"w_transform", c.w_transform}, {"np_dim", c.np_dim},       {"grid_points", c.grid_points},
         {"grid_lo", c.grid_lo},       {"grid_hi", c.grid_hi},       {"alphas", c.alphas},
         {"draws", c.draws},           {"seed", c.seed},             {"threads", c.threads},
         {"derivative", c.derivative}, {"robustness", c.robustness}, {"selection", c.selection_path}};
  j["p_lower"] = c.p_lower ? json(*c.p_lower) : json(nullptr);
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::config, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

FitResult run_fit(const RunConfig& c) {
  validate_config(c);
  const auto start = std::chrono::steady_clock::now();
  const Table table = read_csv(c.input);
  Prepared p = prepare(c, table);
  FitResult r;

  SelectionOptions options;
  const int td = p.model.space->target_dim();
  options.grid = make_grid(td, c.grid_points, c.grid_lo, c.grid_hi);
  std::optional<AdaptiveSelection> stored;
  if (!c.selection_path.empty()) {
    std::ifstream in(c.selection_path);
    if (!in) fail(ErrorKind::config, "cannot open selection file '" + c.selection_path + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      fail(ErrorKind::config, std::string("malformed selection file: ") + e.what());
    }
    stored = selection_from_json(j);
  }

  if (!p.fe.factors.empty()) {
    int j_max = 0;
    if (stored) {
      j_max = stored->J_hat_max;
    } else {
      const JMaxResult jm = p.model.is_regression()
                                ? j_hat_max_regression(static_cast<double>(p.sample.n()), *p.model.space)
                                : j_hat_max_npiv(p.sample, p.model);
      j_max = jm.j_max;
      r.warnings.insert(r.warnings.end(), jm.warnings.begin(), jm.warnings.end());
    }
    const auto fe = partial_out_fixed_effects(p.sample, p.fe, p.model, j_max);
    p.sample.y = fe.adjusted_y;
    r.warnings.insert(r.warnings.end(), fe.warnings.begin(), fe.warnings.end());
    options.j_max = j_max;
  }

  const MultiplierPlan plan{c.draws, c.seed, c.threads};
  r.run = stored ? replay(p.sample, p.model, plan, *stored, options) : select(p.sample, p.model, plan, options);
  r.warnings.insert(r.warnings.end(), r.run.selection.warnings.begin(), r.run.selection.warnings.end());

  const TargetBootstrap tb = target_bootstrap(r.run);
  for (double al : c.alphas)
    r.bands.push_back(c.robustness ? band_robustness(r.run, tb, al, c.p_lower) : band_target(r.run, tb, al));
  double deriv_scale = 1.0;
  if (!c.derivative.empty()) {
    const TargetBootstrap tbd = target_bootstrap(r.run, c.derivative);
    for (double al : c.alphas)
      r.deriv_bands.push_back(c.robustness ? band_robustness(r.run, tbd, al, c.p_lower) : band_target(r.run, tbd, al));
    for (std::size_t k = 0; k < c.derivative.size(); ++k)
      deriv_scale *= std::pow(p.x_transforms[k].slope, c.derivative[k]);
  }

  r.raw_grid.resize(options.grid.rows(), options.grid.cols());
  for (Eigen::Index k = 0; k < options.grid.cols(); ++k)
    for (Eigen::Index g = 0; g < options.grid.rows(); ++g) r.raw_grid(g, k) = p.x_transforms[k].to_raw(options.grid(g, k));

  if (p.mode == "partially_linear") {
    const auto& pl = dynamic_cast<const PartiallyLinearSpace&>(*p.model.space);
    const NpivFit& f = r.run.tilde_fit();
    const int np = pl.np_columns(f.J);
    r.linear_coefficients = f.c_hat.tail(f.c_hat.size() - np);
  }

  namespace fs = std::filesystem;
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::config, "cannot create output directory '" + c.output_dir + "'");

  std::vector<std::string> x_names;
  if (td == 1) {
    x_names = {"x"};
  } else {
    for (int k = 1; k <= td; ++k) x_names.push_back("x" + std::to_string(k));
  }
  write_estimates(dir / "estimates.csv", r, x_names, c.alphas, c.derivative, deriv_scale);
  if (c.command == "bands") return r;

  json sel = selection_to_json(r.run.selection);
  if (r.linear_coefficients) {
    json beta = json::object();
    for (std::size_t k = 0; k < p.linear_cols.size(); ++k) beta[p.linear_cols[k]] = (*r.linear_coefficients)(k);
    sel["linear_coefficients"] = beta;
  }
  write_json(dir / "selection.json", sel);

  json meta{{"version", NPIV_VERSION},
            {"command", c.command},
            {"kind", c.robustness ? "robustness" : "standard"},
            {"mode", p.mode},
            {"seed", c.seed},
            {"n", p.sample.n()},
            {"config", config_json(c)},
            {"columns", {{"y", c.y_col}, {"x", p.x_cols}, {"w", p.w_cols}, {"fe", p.fe_cols}, {"linear", p.linear_cols}}},
            {"warnings", r.warnings}};
  json xt = json::array(), wt = json::array();
  for (const auto& t : p.x_transforms) xt.push_back(transform_json(t));
  for (const auto& t : p.w_transforms) wt.push_back(transform_json(t));
  meta["x_transforms"] = xt;
  meta["w_transforms"] = wt;
  if (c.robustness) meta["p_lower"] = r.bands.front().p_lower.value_or(0.0);
  if (c.record_time)
    meta["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "run_meta.json", meta);
  return r;
}

// ---------------------------------------------------------------------------
// simulate

namespace {

json sim_config_json(const SimConfig& c) {
  return json{{"design", c.design},         {"n", c.n_list},           {"reps", c.reps},
              {"draws", c.draws},           {"seed", c.seed},          {"threads", c.threads},
              {"grid_points", c.grid_points}, {"fixed_J", c.fixed_J},  {"A", c.A_values},
              {"derivative", c.derivative}, {"noise_scale", c.noise_scale}, {"z_support", c.z_support_path},
              {"fixed_effects", c.fixed_effects}, {"error_cov", c.error_cov}, {"output_dir", c.output_dir}};
}

json report_json(const McReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"n", r.n},
                    {"target", r.target},
                    {"method", r.method},
                    {"reps", r.reps},
                    {"seed", r.seed},
                    {"loss_mean", r.loss_mean},
                    {"loss_median", r.loss_median},
                    {"loss_se", r.loss_se},
                    {"coverage90", r.coverage90},
                    {"coverage95", r.coverage95},
                    {"coverage95_se", r.coverage95_se},
                    {"width_mean", r.width_mean},
                    {"width_ratio_mean", r.width_ratio_mean},
                    {"width_ratio_median", r.width_ratio_median},
                    {"reject", r.reject}});
  json sweep = json::array();
  for (const auto& s : rep.sweep) sweep.push_back({{"n", s.n}, {"A", s.A}, {"coverage", s.coverage}, {"se", s.se}});
  json hist = json::object(), mean = json::object();
  for (const auto& [n, counts] : rep.J_tilde_counts) {
    json h = json::object();
    for (const auto& [J, k] : counts) h[std::to_string(J)] = k;
    hist[std::to_string(n)] = h;
  }
  for (const auto& [n, m] : rep.mean_J_tilde) mean[std::to_string(n)] = m;
  return json{{"design", rep.design}, {"reps", rep.reps},       {"draws", rep.draws},     {"seed", rep.seed},
              {"rows", rows},         {"a_sweep", sweep},       {"J_tilde_histogram", hist}, {"mean_J_tilde", mean}};
}

void write_report_csv(const std::filesystem::path& path, const McReport& rep) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::config, "cannot write '" + path.string() + "'");
  out << "n,target,method,reps,seed,loss_mean,loss_median,loss_se,coverage90,coverage95,coverage95_se,width_mean,"
         "width_ratio_mean,width_ratio_median,reject\n";
  for (const auto& r : rep.rows) {
    out << r.n << ',' << r.target << ',' << r.method << ',' << r.reps << ',' << r.seed;
    for (double v : {r.loss_mean, r.loss_median, r.loss_se, r.coverage90, r.coverage95, r.coverage95_se, r.width_mean,
                     r.width_ratio_mean, r.width_ratio_median, r.reject})
      out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace

McReport run_simulate(const SimConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  McOptions o;
  o.design.kind = parse_design(c.design);
  o.design.noise_scale = c.noise_scale;
  o.design.trade.fixed_effects = c.fixed_effects;
  if (!c.error_cov.empty()) {
    if (c.error_cov.size() != 3) fail(ErrorKind::config, "error-cov takes var_eps,cov,var_rho");
    o.design.trade.error_cov << c.error_cov[0], c.error_cov[1], c.error_cov[1], c.error_cov[2];
  }
  if (!c.z_support_path.empty()) {
    const Table t = read_csv(c.z_support_path);
    const Eigen::VectorXd z = numeric_column(t, t.column("z") >= 0 ? "z" : t.header.front());
    o.design.trade.z_support.assign(z.data(), z.data() + z.size());
  }
  if (!(c.noise_scale >= 0.0)) fail(ErrorKind::config, "noise scale must be nonnegative");
  if (c.draws < 1 || c.threads < 1 || c.grid_points < 1) fail(ErrorKind::config, "draws, threads and grid must be positive");
  for (int n : c.n_list)
    if (n < 10) fail(ErrorKind::config, "sample sizes must be at least 10");
  o.n_list = c.n_list;
  o.reps = c.reps;
  o.draws = c.draws;
  o.seed = c.seed;
  o.threads = c.threads;
  o.grid_points = c.grid_points;
  o.fixed_J = c.fixed_J;
  o.A_values = c.A_values;
  o.derivative = c.derivative;
  const McReport rep = run_mc(o);

  namespace fs = std::filesystem;
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::config, "cannot create output directory '" + c.output_dir + "'");
  write_report_csv(dir / "mc_report.csv", rep);
  write_json(dir / "mc_report.json", report_json(rep));
  {
    std::ofstream out(dir / "j_tilde_hist.csv");
    out << "n,J,count\n";
    for (const auto& [n, counts] : rep.J_tilde_counts)
      for (const auto& [J, k] : counts) out << n << ',' << J << ',' << k << '\n';
  }
  json meta{{"version", NPIV_VERSION}, {"command", "simulate"}, {"seed", c.seed}, {"config", sim_config_json(c)}};
  if (c.record_time)
    meta["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "run_meta.json", meta);
  return rep;
}

// ---------------------------------------------------------------------------
// command line

namespace {

std::uint64_t env_seed() {
  const char* s = std::getenv("NPIV_SEED");
  if (!s || !*s) return 0;
  std::uint64_t v = 0;
  const std::string str(s);
  const auto res = std::from_chars(str.data(), str.data() + str.size(), v);
  if (res.ec != std::errc() || res.ptr != str.data() + str.size())
    fail(ErrorKind::config, "NPIV_SEED must be a nonnegative integer");
  return v;
}

void add_fit_options(CLI::App* sub, RunConfig& c, std::optional<std::uint64_t>& seed) {
  sub->add_option("-i,--input", c.input, "CSV with header row")->required();
  sub->add_option("-o,--output", c.output_dir, "output directory");
  sub->add_option("--mode", c.mode, "auto | npiv | regression | additive | partially_linear");
  sub->add_option("--y", c.y_col, "response column");
  sub->add_option("--x", c.x_cols, "regressor columns (default x or x1, x2, ...)")->delimiter(',');
  sub->add_option("--w", c.w_cols, "instrument columns (default w or w1, w2, ...)")->delimiter(',');
  sub->add_option("--fe", c.fe_cols, "fixed-effect id columns (default fe_*)")->delimiter(',');
  sub->add_flag("!--no-fe", c.fixed_effects, "ignore fixed-effect columns");
  sub->add_option("--order", c.order, "spline order r (4 = cubic)");
  sub->add_option("--q", c.q, "instrument resolution offset");
  sub->add_option("--knots", c.knot_rule, "dyadic | quantile");
  sub->add_option("--x-transform", c.x_transform, "unit | minmax | log_share");
  sub->add_option("--w-transform", c.w_transform, "unit | minmax | ecdf");
  sub->add_option("--np-dim", c.np_dim, "partially linear: number of leading x columns entering nonparametrically");
  sub->add_option("--grid", c.grid_points, "grid points per axis");
  sub->add_option("--grid-lo", c.grid_lo, "grid start on the unit scale");
  sub->add_option("--grid-hi", c.grid_hi, "grid end on the unit scale");
  sub->add_option("--alpha", c.alphas, "band levels")->delimiter(',');
  sub->add_option("--draws", c.draws, "bootstrap draws");
  sub->add_option("--seed", seed, "seed (default $NPIV_SEED, else 0)");
  sub->add_option("--threads", c.threads, "bootstrap threads");
  sub->add_option("--deriv", c.derivative, "derivative order per axis, e.g. 1 or 1,0")->delimiter(',');
  sub->add_flag("--robustness", c.robustness, "robustness-check bands");
  sub->add_option("--p-lower", c.p_lower, "smoothness lower bound for robustness bands");
  sub->add_option("--selection", c.selection_path, "reuse a stored selection.json");
  sub->add_flag("--record-time", c.record_time, "store wall time in run_meta.json");
}

}  // namespace

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sieve NPIV estimation with data-driven uniform confidence bands", "npiv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NPIV_VERSION);

  RunConfig fit_cfg, bands_cfg;
  SimConfig sim;
  std::optional<std::uint64_t> fit_seed, bands_seed, sim_seed;
  auto* fit_cmd = app.add_subcommand("fit", "select J, build bands, write estimates, selection and metadata");
  add_fit_options(fit_cmd, fit_cfg, fit_seed);
  auto* bands_cmd = app.add_subcommand("bands", "write plot data (estimates.csv) only");
  add_fit_options(bands_cmd, bands_cfg, bands_seed);
  bands_cfg.command = "bands";

  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo on a built-in design");
  sim_cmd->add_option("--design", sim.design, "npiv_sine_log | reg_wiggly | trade_lognormal | trade_pareto");
  sim_cmd->add_option("--n", sim.n_list, "sample sizes")->delimiter(',');
  sim_cmd->add_option("--reps", sim.reps, "replications");
  sim_cmd->add_option("--draws", sim.draws, "bootstrap draws");
  sim_cmd->add_option("--seed", sim_seed, "seed (default $NPIV_SEED, else 0)");
  sim_cmd->add_option("--threads", sim.threads, "replication threads");
  sim_cmd->add_option("--grid", sim.grid_points, "grid points");
  sim_cmd->add_option("--fixed-J", sim.fixed_J, "undersmoothed comparison dimensions")->delimiter(',');
  sim_cmd->add_option("--A", sim.A_values, "A-sweep values")->delimiter(',');
  sim_cmd->add_flag("--deriv", sim.derivative, "also score first-derivative bands");
  sim_cmd->add_option("--noise-scale", sim.noise_scale, "multiplies the structural error");
  sim_cmd->add_option("--z-support", sim.z_support_path, "CSV with the trade-cost shifter distribution");
  sim_cmd->add_flag("!--no-fe", sim.fixed_effects, "trade designs: skip the fixed-effect partial-out");
  sim_cmd->add_option("--error-cov", sim.error_cov, "trade designs: var_eps,cov,var_rho")->delimiter(',');
  sim_cmd->add_option("-o,--output", sim.output_dir, "output directory");
  sim_cmd->add_flag("--record-time", sim.record_time, "store wall time in run_meta.json");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return exit_ok;
    } catch (const CLI::CallForVersion&) {
      out << NPIV_VERSION << '\n';
      return exit_ok;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return exit_config;
    }

    if (*sim_cmd) {
      sim.seed = sim_seed ? *sim_seed : env_seed();
      const McReport rep = run_simulate(sim);
      for (const auto& [n, m] : rep.mean_J_tilde) out << "n = " << n << ": mean J_tilde " << m << '\n';
      for (const auto& r : rep.rows)
        out << r.n << ' ' << r.target << ' ' << r.method << ": loss " << r.loss_mean << ", coverage95 " << r.coverage95
            << '\n';
      return exit_ok;
    }
    RunConfig& cfg = *fit_cmd ? fit_cfg : bands_cfg;
    const auto& seed = *fit_cmd ? fit_seed : bands_seed;
    cfg.seed = seed ? *seed : env_seed();
    const FitResult r = run_fit(cfg);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    out << "J_tilde = " << r.run.selection.J_tilde << " (J_hat = " << r.run.selection.J_hat
        << ", J_hat_max = " << r.run.selection.J_hat_max << ")\n";
    return exit_ok;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
}

}  // namespace npiv::cli
