#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "npiv/estimator.hpp"

using namespace npiv;

namespace {

SplineFamily cubic() { return SplineFamily{4, 1, KnotRule::uniform_dyadic, {}}; }

// Instruments identical to the regressor basis.
SieveModel self_instrumented() {
  InstrumentSpec ispec;
  ispec.x_order = 4;
  ispec.q = 0;
  ispec.w_family = cubic();
  return npiv_model(cubic(), ispec);
}

SieveModel default_npiv() { return npiv_model(cubic(), make_instrument_spec(4, 1, 1)); }

double linear(double x) { return 2.0 + 3.0 * x; }
double cubic_poly(double x) { return 1.0 - 2.0 * x + 0.5 * x * x + 4.0 * x * x * x; }

Eigen::MatrixXd tsls_oracle_projection(const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd gram = b.transpose() * b;
  return b * gram.fullPivLu().inverse() * b.transpose();
}

}  // namespace

TEST_CASE("self-instrumented linear truth is recovered exactly") {
  const auto s = fixtures::uniform_regression(200, 3, linear, 0.0);
  const auto f = fit(s, self_instrumented(), 4);
  const Eigen::MatrixXd grid = make_grid(1, 101);
  const Eigen::VectorXd h = evaluate(f, grid);
  for (Eigen::Index g = 0; g < grid.rows(); ++g) CHECK(std::abs(h(g) - linear(grid(g, 0))) < 1e-10);
  CHECK(evaluate(f, Eigen::MatrixXd::Constant(1, 1, 0.25))(0) == doctest::Approx(2.75).epsilon(1e-12));
  const Eigen::VectorXd d = evaluate(f, grid, {1});
  CHECK((d.array() - 3.0).abs().maxCoeff() < 1e-9);
  CHECK(f.s_hat == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("polynomial reproduction up to degree r-1") {
  const auto s = fixtures::uniform_regression(300, 5, cubic_poly, 0.0);
  for (int J : {4, 7, 19}) {
    const auto f = fit(s, self_instrumented(), J);
    const Eigen::MatrixXd grid = make_grid(1, 200);
    const Eigen::VectorXd h = evaluate(f, grid);
    for (Eigen::Index g = 0; g < grid.rows(); ++g) CHECK(std::abs(h(g) - cubic_poly(grid(g, 0))) < 1e-9);
  }
}

TEST_CASE("dense oracle on six observations") {
  Eigen::VectorXd x(6), w(6), y(6);
  x << 0.05, 0.21, 0.38, 0.52, 0.74, 0.93;
  w << 0.11, 0.35, 0.29, 0.66, 0.81, 0.97;
  y << 0.3, -1.2, 0.8, 1.9, 0.1, -0.4;
  const Eigen::MatrixXd psi = design_matrix(uniform_basis(4, 0), x);
  const Eigen::MatrixXd b = design_matrix(uniform_basis(5, 0), w);
  const auto f = fit_design(y, psi, b, 4, std::make_shared<TensorSplineSpace>(cubic()));

  const Eigen::MatrixXd p = tsls_oracle_projection(b);
  const Eigen::MatrixXd a = psi.transpose() * p * psi;
  const Eigen::VectorXd c = a.fullPivLu().solve(psi.transpose() * p * y);
  CHECK((f.c_hat - c).cwiseAbs().maxCoeff() < 1e-10);

  // orthogonalize with Cholesky factors instead of symmetric square roots
  const Eigen::MatrixXd lb = (b.transpose() * b).llt().matrixL();
  const Eigen::MatrixXd lp = (psi.transpose() * psi).llt().matrixL();
  const Eigen::MatrixXd cross = lb.triangularView<Eigen::Lower>().solve(b.transpose() * psi);
  const Eigen::MatrixXd orth = lp.triangularView<Eigen::Lower>().solve(cross.transpose()).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(orth);
  CHECK(f.s_hat == doctest::Approx(svd.singularValues().minCoeff()).epsilon(1e-10));
  CHECK(compute_shat(psi, b).first == doctest::Approx(f.s_hat).epsilon(1e-12));
  CHECK(f.K == 5);
}

TEST_CASE("normal equations and shat range") {
  const auto s = fixtures::endogenous(800, 21);
  const auto model = default_npiv();
  for (int J : {4, 5, 7, 11, 19}) {
    const auto f = fit(s, model, J);
    const Eigen::MatrixXd p = tsls_oracle_projection(f.b);
    const double resid = (f.psi.transpose() * p * f.u_hat).cwiseAbs().maxCoeff();
    CHECK(resid < 1e-8 * s.y.norm());
    CHECK(f.s_hat >= 0.0);
    CHECK(f.s_hat <= 1.0);
    CHECK(f.K == model.instrument_dim(J));
  }
}

TEST_CASE("independent instruments give shat near zero") {
  auto s = fixtures::endogenous(2000, 4);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < s.n(); ++i) s.w(i, 0) = u(rng);
  const auto model = default_npiv();
  for (int J : {4, 7, 19}) CHECK(fit(s, model, J).s_hat < 0.2);
}

TEST_CASE("shat decreases in J under weak instruments") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  auto cdf = [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); };
  const int n = 20000;
  Sample s;
  s.y.resize(n);
  s.x.resize(n, 1);
  s.w.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double zi = z(rng);
    s.w(i, 0) = cdf(zi);
    s.x(i, 0) = cdf(0.5 * zi + std::sqrt(0.75) * z(rng));
    s.y(i) = z(rng);
  }
  const auto model = default_npiv();
  double previous = 1.0;
  for (int J : {4, 5, 7}) {
    const double sh = fit(s, model, J).s_hat;
    CHECK(sh < previous);
    previous = sh;
  }
}

TEST_CASE("series regression equivalence") {
  const auto s = fixtures::endogenous(500, 8);
  Sample self = s;
  self.w = s.x;
  for (int J : {4, 11, 35}) {
    const auto iv = fit(self, self_instrumented(), J);
    const auto ols = fit(self, regression_model(cubic()), J);
    CHECK((iv.m - ols.m).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((iv.c_hat - ols.c_hat).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(ols.s_hat == 1.0);
  }
}

TEST_CASE("insufficient sample and dimension errors") {
  const auto s = fixtures::endogenous(30, 2);
  try {
    fit(s, default_npiv(), 11);  // K = 36 > 30
    FAIL("expected insufficient sample");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_sample);
  }
  CHECK_THROWS_AS(fit(s, default_npiv(), 6), Error);
  Sample bad = s;
  bad.x(3, 0) = 1.5;
  CHECK_THROWS_AS(fit(bad, default_npiv(), 4), Error);
}

TEST_CASE("variance field identities") {
  const auto s = fixtures::endogenous(600, 12);
  const auto model = default_npiv();
  FitMap fits;
  for (int J : {4, 5, 7}) fits.emplace(J, fit(s, model, J));
  const Eigen::MatrixXd grid = make_grid(1, 50, 0.01, 0.99);
  const auto field = variance_field(fits, grid, {}, ordered_pairs({4, 5, 7}));

  for (int J : {4, 5, 7}) {
    CHECK((field.cross.at({J, J}).array() == field.sigma2.at(J).array()).all());
    const Eigen::VectorXd self = cross_variance(fits.at(J), field.selectors.at(J), fits.at(J), field.selectors.at(J));
    CHECK((self - field.sigma2.at(J)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((field.estimate.at(J) - evaluate(fits.at(J), grid)).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (const auto& [key, sd] : field.contrast_sd) {
    const Eigen::VectorXd v = field.sigma2.at(key.first) + field.sigma2.at(key.second) - 2.0 * field.cross.at(key);
    CHECK(v.minCoeff() >= -1e-10);
    CHECK(sd.minCoeff() >= 0.0);
  }

  // a self contrast computed through the public cross routine vanishes
  const Eigen::VectorXd c44 = cross_variance(fits.at(4), field.selectors.at(4), fits.at(4), field.selectors.at(4));
  CHECK((field.sigma2.at(4) * 2.0 - 2.0 * c44).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("homoskedastic residual oracle") {
  const auto s = fixtures::endogenous(300, 13);
  auto f = fit(s, default_npiv(), 5);
  const double c = 0.7;
  f.u_hat.setConstant(c);
  FitMap fits;
  fits.emplace(5, f);
  const Eigen::MatrixXd grid = make_grid(1, 25);
  const auto field = variance_field(fits, grid);
  const Eigen::MatrixXd t = design_matrix(uniform_basis(4, 1), grid) * f.m;
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    const double expected = c * c * t.row(g).squaredNorm();
    CHECK(std::abs(field.sigma2.at(5)(g) - expected) < 1e-12 * std::max(1.0, expected));
  }
}

TEST_CASE("scale and shift behaviour") {
  const auto s = fixtures::endogenous(500, 31);
  const auto model = default_npiv();
  const Eigen::MatrixXd grid = make_grid(1, 40);
  auto field_for = [&](const Sample& sample) {
    FitMap fits;
    for (int J : {4, 7}) fits.emplace(J, fit(sample, model, J));
    return std::make_pair(fits, variance_field(fits, grid, {}, {{4, 7}}));
  };
  const auto [base_fits, base] = field_for(s);

  Sample doubled = s;
  doubled.y *= 2.0;
  const auto [dfits, scaled] = field_for(doubled);
  for (int J : {4, 7}) {
    CHECK((scaled.sigma(J) - 2.0 * base.sigma(J)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((dfits.at(J).u_hat - 2.0 * base_fits.at(J).u_hat).cwiseAbs().maxCoeff() == 0.0);
  }

  Sample scaled_y = s;
  scaled_y.y *= -3.7;
  const auto [sfits, sfield] = field_for(scaled_y);
  const Eigen::VectorXd t0 =
      (base.estimate.at(4) - base.estimate.at(7)).cwiseQuotient(base.contrast_sd.at({4, 7}));
  const Eigen::VectorXd t1 =
      (sfield.estimate.at(4) - sfield.estimate.at(7)).cwiseQuotient(sfield.contrast_sd.at({4, 7}));
  CHECK((t0 + t1).cwiseAbs().maxCoeff() < 1e-9);

  Sample shifted = s;
  shifted.y.array() += 5.0;
  const auto [hfits, hfield] = field_for(shifted);
  for (int J : {4, 7}) {
    CHECK((hfits.at(J).u_hat - base_fits.at(J).u_hat).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((hfield.sigma(J) - base.sigma(J)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((hfield.estimate.at(J).array() - base.estimate.at(J).array() - 5.0).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("zero residuals are a degenerate variance") {
  const auto s = fixtures::uniform_regression(100, 3, linear, 0.0);
  FitMap fits;
  fits.emplace(4, fit(s, self_instrumented(), 4));
  try {
    variance_field(fits, make_grid(1, 10));
    FAIL("expected degenerate variance");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_variance);
  }
}

TEST_CASE("grid construction") {
  const Eigen::MatrixXd g = make_grid(2, 3);
  REQUIRE(g.rows() == 9);
  CHECK(g(1, 0) == 0.0);
  CHECK(g(1, 1) == 0.5);
  CHECK(g(3, 0) == 0.5);
  const Eigen::MatrixXd t = make_grid(1, 100, 0.01, 0.99);
  CHECK(t(0, 0) == 0.01);
  CHECK(t(99, 0) == doctest::Approx(0.99));
}
