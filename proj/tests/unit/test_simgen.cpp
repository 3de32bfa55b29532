#include <doctest.h>

#include <cmath>
#include <string>

#include "npiv/simgen.hpp"

using namespace npiv;

namespace {

DesignOptions design_of(DesignKind kind) {
  DesignOptions d;
  d.kind = kind;
  return d;
}

}  // namespace

TEST_CASE("design names round-trip") {
  for (auto kind : {DesignKind::npiv_sine_log, DesignKind::reg_wiggly, DesignKind::trade_lognormal,
                    DesignKind::trade_pareto})
    CHECK(parse_design(to_string(kind)) == kind);
  CHECK_THROWS_AS(parse_design("probit"), Error);
}

TEST_CASE("structural functions at spot values") {
  CHECK(truth(design_of(DesignKind::npiv_sine_log)).h(0.5) == doctest::Approx(std::sin(2.0) * std::log(0.5)));
  CHECK(truth(design_of(DesignKind::npiv_sine_log)).h(0.5) == doctest::Approx(-0.630287).epsilon(1e-5));
  CHECK(truth(design_of(DesignKind::reg_wiggly)).h(0.5) == doctest::Approx(-0.877583).epsilon(1e-5));

  // Derivatives against central differences.
  for (auto kind : {DesignKind::npiv_sine_log, DesignKind::reg_wiggly, DesignKind::trade_lognormal,
                    DesignKind::trade_pareto}) {
    const Truth t = truth(design_of(kind));
    for (double x : {0.35, 0.5, 0.8}) {
      const double step = 1e-5;
      const double fd = (t.h(x + step) - t.h(x - step)) / (2.0 * step);
      CHECK(t.dh(x) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("lognormal elasticity matches a numerical derivative of log rho") {
  const TradeParams p;
  for (double pi : {0.001, 0.01, 0.1, 0.3, 0.5}) {
    const double l = std::log(pi), step = 1e-5;
    const double fd =
        (trade::log_rho(std::exp(l + step), p) - trade::log_rho(std::exp(l - step), p)) / (2.0 * step);
    CHECK(std::abs(trade::elasticity(pi, p) - fd) < 1e-6);
  }
  // The elasticity is decreasing in the share.
  CHECK(trade::elasticity(0.01, p) > trade::elasticity(0.3, p));
}

TEST_CASE("share inversion and regressor transform") {
  const TradeParams p;
  for (double pi : {1e-4, 0.01, 0.2, 0.5, 0.9})
    CHECK(trade::share_from_log_eps(trade::log_eps(pi, p), p) == doctest::Approx(pi).epsilon(1e-12));
  CHECK(trade::share_to_x(std::exp(-12.0)) == 0.0);
  CHECK(trade::share_to_x(0.5) == doctest::Approx(std::log(0.5) / 10.0 + 1.0));
  CHECK(trade::x_to_share(trade::share_to_x(0.02)) == doctest::Approx(0.02));
  const auto z = trade::default_z_support(4);
  CHECK(z.front() == doctest::Approx(5.625));
  CHECK(z.back() == doctest::Approx(9.375));
}

TEST_CASE("generated samples live on the unit interval and are reproducible") {
  for (auto kind : {DesignKind::npiv_sine_log, DesignKind::reg_wiggly, DesignKind::trade_lognormal}) {
    const auto g = generate(design_of(kind), 500, 11);
    CHECK(g.sample.y.size() == 500);
    CHECK(g.sample.x.minCoeff() >= 0.0);
    CHECK(g.sample.x.maxCoeff() <= 1.0);
    if (g.sample.w.cols() > 0) {
      CHECK(g.sample.w.minCoeff() >= 0.0);
      CHECK(g.sample.w.maxCoeff() <= 1.0);
    }
    const auto again = generate(design_of(kind), 500, 11);
    CHECK(again.sample.y == g.sample.y);
    CHECK(again.sample.x == g.sample.x);
    CHECK(generate(design_of(kind), 500, 12).sample.y != g.sample.y);
  }
  const auto t = generate(design_of(DesignKind::trade_lognormal), 300, 3);
  REQUIRE(t.fixed_effects.factors.size() == 2);
  CHECK(t.fixed_effects.factors[0].size() == 300);
  CHECK_THROWS_AS(generate(design_of(DesignKind::npiv_sine_log), 5, 1), Error);
}

TEST_CASE("noiseless samples reproduce the structural function") {
  for (auto kind : {DesignKind::npiv_sine_log, DesignKind::reg_wiggly, DesignKind::trade_pareto}) {
    DesignOptions d = design_of(kind);
    d.noise_scale = 0.0;
    const auto g = generate(d, 200, 5);
    const Truth t = truth(d);
    for (Eigen::Index i = 0; i < 200; ++i) {
      if (g.sample.x(i, 0) <= 0.0) continue;
      CHECK(g.sample.y(i) == doctest::Approx(t.h(g.sample.x(i, 0))).epsilon(1e-9));
    }
  }
}

TEST_CASE("report grids") {
  const auto npiv = report_grid(design_of(DesignKind::npiv_sine_log), 11);
  CHECK(npiv(0, 0) == doctest::Approx(0.01));
  CHECK(npiv(10, 0) == doctest::Approx(0.99));
  const auto tr = report_grid(design_of(DesignKind::trade_pareto), 11);
  CHECK(trade::x_to_share(tr(0, 0)) == doctest::Approx(0.001));
  CHECK(trade::x_to_share(tr(10, 0)) == doctest::Approx(0.5));
}

TEST_CASE("Monte Carlo runs are seed-deterministic") {
  McOptions o;
  o.design = design_of(DesignKind::npiv_sine_log);
  o.n_list = {300};
  o.reps = 3;
  o.draws = 100;
  o.seed = 21;
  o.grid_points = 30;
  o.fixed_J = {5};
  const auto a = run_mc(o);
  o.threads = 3;
  const auto b = run_mc(o);
  REQUIRE(a.rows.size() == 2);
  CHECK(a.rows[0].method == "data_driven");
  CHECK(a.rows[1].method == "J=5");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss_mean == b.rows[i].loss_mean);
    CHECK(a.rows[i].width_mean == b.rows[i].width_mean);
  }
  CHECK(a.J_tilde_counts == b.J_tilde_counts);
  CHECK(a.row(300, "h", "data_driven").width_ratio_mean == 1.0);
  CHECK_THROWS_AS(a.row(300, "deriv", "data_driven"), Error);
  CHECK(replication_seeds(21, 300, 0) != replication_seeds(21, 300, 1));
  CHECK(replication_seeds(21, 300, 0) != replication_seeds(22, 300, 0));
}

TEST_CASE("near-noiseless spanned design is recovered and covered") {
  McOptions o;
  o.design = design_of(DesignKind::trade_pareto);
  o.design.noise_scale = 1e-6;
  o.design.trade.fixed_effects = false;
  o.n_list = {800};
  o.reps = 1;
  o.draws = 200;
  o.derivative = true;
  const auto rep = run_mc(o);
  const auto& h = rep.row(800, "h", "data_driven");
  const auto& d = rep.row(800, "deriv", "data_driven");
  CHECK(h.loss_mean < 1e-4);
  CHECK(d.loss_mean < 1e-4);
  CHECK(h.coverage95 == 1.0);
  CHECK(d.coverage95 == 1.0);
}

TEST_CASE("replication failures name the replication") {
  McOptions o;
  o.design = design_of(DesignKind::trade_lognormal);
  o.design.trade.countries = 1;
  o.n_list = {100};
  o.reps = 2;
  o.draws = 50;
  try {
    run_mc(o);
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("replication 0 (n = 100)") != std::string::npos);
  }
  o.reps = 0;
  CHECK_THROWS_AS(run_mc(o), Error);
}
