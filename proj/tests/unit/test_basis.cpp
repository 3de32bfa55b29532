#include <doctest.h>

#include <cmath>
#include <random>

#include "npiv/basis.hpp"

using namespace npiv;

namespace {

// Textbook Cox-de Boor recursion on the clamped knot vector, with 0/0 = 0 and
// half-open spans; x == 1 is assigned to the last nonempty span.
double cox_de_boor(const std::vector<double>& t, int i, int k, double x) {
  if (k == 1) {
    if (x == 1.0) {
      int last = static_cast<int>(t.size()) - 1;
      while (last > 0 && t[last - 1] == 1.0) --last;
      return i == last - 1 ? 1.0 : 0.0;
    }
    return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  }
  double out = 0.0;
  const double d1 = t[i + k - 1] - t[i];
  const double d2 = t[i + k] - t[i + 1];
  if (d1 > 0) out += (x - t[i]) / d1 * cox_de_boor(t, i, k - 1, x);
  if (d2 > 0) out += (t[i + k] - x) / d2 * cox_de_boor(t, i + 1, k - 1, x);
  return out;
}

double binom(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

Eigen::VectorXd point(double x) { return Eigen::VectorXd::Constant(1, x); }

}  // namespace

TEST_CASE("dimension grid") {
  CHECK(dimension_grid(4, 1, 200) == std::vector<int>{4, 5, 7, 11, 19, 35, 67, 131});
  CHECK(dimension_grid(1, 1, 8) == std::vector<int>{1, 2, 4, 8});
  CHECK(dimension_grid(4, 2, 130) == std::vector<int>{16, 25, 49, 121});
  CHECK_THROWS_AS(dimension_grid(4, 1, 3), Error);
  CHECK(level_for_dimension(4, 1, 35) == 5);
  CHECK_THROWS_AS(level_for_dimension(4, 1, 6), Error);
}

TEST_CASE("cubic spline without interior knots is the Bernstein basis") {
  const auto spec = uniform_basis(4, 0);
  const Eigen::VectorXd at0 = eval_basis(spec, point(0.0));
  CHECK((at0 - Eigen::Vector4d(1, 0, 0, 0)).cwiseAbs().maxCoeff() == 0.0);

  for (double x : {0.1, 0.5, 0.77, 1.0}) {
    const Eigen::VectorXd v = eval_basis(spec, point(x));
    const Eigen::VectorXd dv = eval_basis_deriv(spec, point(x), {1});
    for (int k = 0; k < 4; ++k) {
      const double value = binom(3, k) * std::pow(x, k) * std::pow(1 - x, 3 - k);
      const double deriv = binom(3, k) * ((k > 0 ? k * std::pow(x, k - 1) * std::pow(1 - x, 3 - k) : 0.0) -
                                          (k < 3 ? (3 - k) * std::pow(x, k) * std::pow(1 - x, 2 - k) : 0.0));
      CHECK(v(k) == doctest::Approx(value).epsilon(1e-14));
      CHECK(dv(k) == doctest::Approx(deriv).epsilon(1e-13));
    }
  }
  const Eigen::VectorXd mid = eval_basis(spec, point(0.5));
  CHECK((mid - Eigen::Vector4d(0.125, 0.375, 0.375, 0.125)).cwiseAbs().maxCoeff() < 1e-15);
  const Eigen::VectorXd dmid = eval_basis_deriv(spec, point(0.5), {1});
  CHECK((dmid - Eigen::Vector4d(-0.75, -0.75, 0.75, 0.75)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("matches the recursive definition") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int order = 1; order <= 5; ++order) {
    for (int level = 0; level <= 3; ++level) {
      const auto spec = uniform_basis(order, level);
      const auto t = knot_vector(spec);
      std::vector<double> xs{0.0, 1.0, 0.5, 0.25};
      for (int i = 0; i < 40; ++i) xs.push_back(unif(rng));
      for (double x : xs) {
        const Eigen::VectorXd v = eval_basis(spec, point(x));
        for (int j = 0; j < spec.size(); ++j) CHECK(v(j) == doctest::Approx(cox_de_boor(t, j, order, x)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("partition of unity and nonnegativity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int dim : {1, 2}) {
    for (int J : dimension_grid(4, dim, dim == 1 ? 131 : 121)) {
      const auto spec = uniform_basis(4, level_for_dimension(4, dim, J), dim);
      double worst = 0.0;
      for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd x(dim);
        for (int k = 0; k < dim; ++k) x(k) = unif(rng);
        const Eigen::VectorXd v = eval_basis(spec, x);
        CHECK(v.minCoeff() >= 0.0);
        worst = std::max(worst, std::abs(v.sum() - 1.0));
        MultiIndex a(dim, 0);
        a[0] = 1;
        const Eigen::VectorXd dv = eval_basis_deriv(spec, x, a);
        CHECK(std::abs(dv.sum()) < 1e-9 * std::max(1.0, dv.cwiseAbs().maxCoeff()));
      }
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("at most r nonzero entries per axis") {
  const auto spec = uniform_basis(4, 3, 2);
  Eigen::Vector2d x(0.31, 0.62);
  const Eigen::VectorXd v = eval_basis(spec, x);
  CHECK((v.array() != 0.0).count() <= 16);
}

TEST_CASE("nestedness across levels") {
  const int order = 4;
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(2000, 0.0, 1.0);
  for (int level = 0; level <= 4; ++level) {
    const Eigen::MatrixXd coarse = design_matrix(uniform_basis(order, level), xs);
    const Eigen::MatrixXd fine = design_matrix(uniform_basis(order, level + 1), xs);
    const Eigen::MatrixXd coef = fine.colPivHouseholderQr().solve(coarse);
    CHECK((fine * coef - coarse).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("derivative agrees with central differences at second order") {
  const auto spec = uniform_basis(4, 2);
  for (double x : {0.13, 0.41, 0.66, 0.9}) {
    const Eigen::VectorXd exact = eval_basis_deriv(spec, point(x), {1});
    auto fd_error = [&](double h) {
      const Eigen::VectorXd fd = (eval_basis(spec, point(x + h)) - eval_basis(spec, point(x - h))) / (2 * h);
      return (fd - exact).cwiseAbs().maxCoeff();
    };
    const double ratio = fd_error(1e-2) / fd_error(5e-3);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }
}

TEST_CASE("continuity at interior knots") {
  for (int order : {3, 4, 5}) {
    const auto spec = uniform_basis(order, 3);
    for (double knot : spec.interior_knots[0]) {
      const Eigen::VectorXd left = eval_basis(spec, point(std::nextafter(knot, 0.0)));
      const Eigen::VectorXd right = eval_basis(spec, point(knot));
      CHECK((left - right).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("basis errors") {
  const auto spec = uniform_basis(4, 1);
  CHECK_THROWS_AS(eval_basis(spec, point(1.0001)), Error);
  try {
    eval_basis(spec, point(-0.1));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
  try {
    eval_basis_deriv(spec, point(0.5), {3});
    FAIL("expected unsupported derivative");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported_derivative);
  }
  CHECK_NOTHROW(eval_basis_deriv(spec, point(0.5), {2}));
}

TEST_CASE("instrument dimension") {
  const auto ispec = make_instrument_spec(4, 1, 1, 2);
  CHECK(instrument_dim(ispec, 4) == 8);
  CHECK(instrument_dim(ispec, 7) == 20);
  const auto q0 = make_instrument_spec(4, 1, 1, 0);
  for (int J : dimension_grid(4, 1, 300)) {
    const int level = level_for_dimension(4, 1, J);
    CHECK(instrument_dim(q0, J) == (1 << level) + 4);
  }
  int previous = 0;
  for (int J : dimension_grid(4, 1, 300)) {
    const int K = instrument_dim(ispec, J);
    CHECK(K >= J);
    CHECK(K > previous);
    previous = K;
  }
  CHECK_THROWS_AS(instrument_dim(ispec, 6), Error);
}

TEST_CASE("support transforms") {
  CHECK(apply_transform(SupportTransform::affine(0, 10), point(5.0))(0) == 0.5);
  CHECK(apply_transform(SupportTransform::log_share_clamp(), point(-12.0))(0) == 0.0);
  const Eigen::VectorXd ranks = apply_transform(SupportTransform::empirical_cdf(), Eigen::Vector3d(3, 1, 2));
  CHECK(ranks(0) == doctest::Approx(1.0));
  CHECK(ranks(1) == doctest::Approx(1.0 / 3));
  CHECK(ranks(2) == doctest::Approx(2.0 / 3));
  const Eigen::VectorXd ties = apply_transform(SupportTransform::empirical_cdf(), Eigen::Vector4d(1, 2, 2, 3));
  CHECK(ties(1) == doctest::Approx(2.5 / 4));
  CHECK(ties(2) == ties(1));
  try {
    apply_transform(SupportTransform::empirical_cdf(), Eigen::Vector3d(1, 1, 1));
    FAIL("expected degenerate column");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_column);
  }
}

TEST_CASE("quantile knots") {
  Eigen::VectorXd data(9);
  data << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9;
  const auto spec = quantile_basis<double>(4, 2, data);
  REQUIRE(spec.interior_knots[0].size() == 3);
  CHECK(spec.interior_knots[0][0] == doctest::Approx(0.3));
  CHECK(spec.interior_knots[0][1] == doctest::Approx(0.5));
  CHECK(spec.interior_knots[0][2] == doctest::Approx(0.7));

  // Clamped boundary values do not move the knots.
  Eigen::VectorXd padded(13);
  padded << 0.0, 0.0, 0.0, data, 1.0;
  CHECK(quantile_basis<double>(4, 2, padded).interior_knots == spec.interior_knots);
  CHECK_THROWS_AS(quantile_basis<double>(4, 2, Eigen::VectorXd::Zero(5)), Error);
  const Eigen::VectorXd v = eval_basis(spec, point(0.33));
  CHECK(std::abs(v.sum() - 1.0) < 1e-12);
}

TEST_CASE("extended precision instantiation") {
  const auto spec = uniform_basis<long double>(4, 3);
  Eigen::Matrix<long double, 1, 1> x;
  x(0) = 0.3L;
  const auto v = eval_basis(spec, x);
  CHECK(std::abs(static_cast<double>(v.sum() - 1.0L)) < 1e-15);
}
