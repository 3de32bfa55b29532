#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "npiv/bootstrap.hpp"

using namespace npiv;

namespace {

SplineFamily cubic() { return SplineFamily{4, 1, KnotRule::uniform_dyadic, {}}; }
SieveModel default_npiv() { return npiv_model(cubic(), make_instrument_spec(4, 1, 1)); }

// Evaluates every J at the J = 5 cubic sieve, so a relabelled copy of a fit stays consistent.
class PinnedSpace final : public SieveSpace {
 public:
  int order() const override { return inner_.order(); }
  int input_dim() const override { return 1; }
  int target_dim() const override { return 1; }
  std::vector<int> dimension_grid(long long cap) const override { return inner_.dimension_grid(cap); }
  int level_of(int) const override { return inner_.level_of(5); }
  Eigen::MatrixXd design(int, const Eigen::MatrixXd& x) const override { return inner_.design(5, x); }
  Eigen::MatrixXd target(int, const Eigen::MatrixXd& p, const MultiIndex& a) const override {
    return inner_.target(5, p, a);
  }

 private:
  TensorSplineSpace inner_{cubic()};
};

double normal_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

FitMap fits_for(const Sample& s, const std::vector<int>& dims) {
  FitMap fits;
  for (int J : dims) fits.emplace(J, fit(s, default_npiv(), J));
  return fits;
}

}  // namespace

TEST_CASE("multipliers are reproducible and standard normal") {
  const MultiplierPlan plan{10, 99, 1};
  CHECK(draw_multipliers(plan, 3, 1000) == draw_multipliers(plan, 3, 1000));
  const Eigen::VectorXd a = draw_multipliers(plan, 0, 100000);
  const Eigen::VectorXd b = draw_multipliers(plan, 1, 100000);
  const double mean = a.mean();
  const double var = (a.array() - mean).square().sum() / (a.size() - 1);
  CHECK(std::abs(mean) < 0.01);
  CHECK(var >= 0.99);
  CHECK(var <= 1.01);
  const double ma = a.mean(), mb = b.mean();
  const double cov = ((a.array() - ma) * (b.array() - mb)).sum();
  const double rho = cov / std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
  CHECK(std::abs(rho) < 0.02);
  const MultiplierPlan other{10, 100, 1};
  CHECK(draw_multipliers(other, 3, 50) != draw_multipliers(plan, 3, 50));
}

TEST_CASE("quantile uses the ceiling order statistic") {
  Eigen::VectorXd d(4);
  d << 4, 2, 1, 3;
  CHECK(quantile(d, 0.5) == 2.0);
  CHECK(quantile(d, 0.75) == 3.0);
  CHECK(quantile(d, 0.76) == 4.0);
  CHECK(quantile(d, 1.0 - 1.0 / 8.0) == 4.0);
  CHECK(quantile(d, 0.01) == 1.0);
  CHECK_THROWS_AS(quantile(d, 1.0), Error);
  CHECK_THROWS_AS(quantile(Eigen::VectorXd(), 0.5), Error);
}

TEST_CASE("single-point t statistic is exactly standard normal") {
  const auto s = fixtures::endogenous(300, 31);
  const FitMap fits = fits_for(s, {5});
  const auto field = variance_field(fits, Eigen::MatrixXd::Constant(1, 1, 0.4));
  const MultiplierPlan plan{100000, 7, 1};
  const auto table = bootstrap_table(fits, field, plan);
  const Eigen::VectorXd t = sup_t_single(table, {5});
  CHECK(quantile(t, 0.95) == doctest::Approx(1.96).epsilon(0.02 / 1.96));

  // Kolmogorov-Smirnov distance of |t| to the half-normal law (equivalent to the signed statistic by symmetry).
  std::vector<double> v(t.data(), t.data() + t.size());
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  const double B = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double F = 2.0 * normal_cdf(v[i]) - 1.0;
    ks = std::max({ks, std::abs(F - i / B), std::abs(F - (i + 1) / B)});
  }
  CHECK(ks < 0.01);
}

TEST_CASE("bootstrap tables are bit-identical across thread counts") {
  const auto s = fixtures::endogenous(400, 32);
  const FitMap fits = fits_for(s, {4, 5, 7, 11});
  const auto field = variance_field(fits, make_grid(1, 50), {}, ordered_pairs({4, 5, 7, 11}));
  const auto t1 = bootstrap_table(fits, field, {300, 17, 1});
  for (int threads : {4, 8}) {
    const auto tk = bootstrap_table(fits, field, {300, 17, threads});
    CHECK(tk.single == t1.single);
    CHECK(tk.contrast == t1.contrast);
    CHECK(quantile(tk.contrast, 0.9) == quantile(t1.contrast, 0.9));
  }
}

TEST_CASE("sups are monotone in the index set and quantiles in the level") {
  const auto s = fixtures::endogenous(400, 33);
  const FitMap fits = fits_for(s, {4, 5, 7});
  const auto field = variance_field(fits, make_grid(1, 40), {}, ordered_pairs({4, 5, 7}));
  const auto table = bootstrap_table(fits, field, {500, 3, 1});
  const Eigen::VectorXd small = sup_t_single(table, {5});
  const Eigen::VectorXd large = sup_t_single(table, {4, 5, 7});
  CHECK((large.array() >= small.array()).all());
  CHECK((small.array() >= 0.0).all());
  const Eigen::VectorXd c = sup_t_contrast(table);
  CHECK((c.array() >= 0.0).all());
  CHECK(quantile(c, 0.9) <= quantile(c, 0.95));
  CHECK(quantile(large, 0.9) <= quantile(large, 0.95));

  // The (fits, field, plan) overloads see the same draws.
  CHECK(sup_t_single(fits, field, {500, 3, 1}, {5}) == small);
  const Eigen::VectorXd c57 = sup_t_contrast(fits, field, {500, 3, 1}, {{5, 7}});
  CHECK((c57.array() <= c.array()).all());
}

TEST_CASE("contrast pairs must be strictly ordered") {
  const auto s = fixtures::endogenous(300, 34);
  const FitMap fits = fits_for(s, {4, 5});
  CHECK_THROWS_AS(ordered_pairs({5, 5}), Error);
  const auto field = variance_field(fits, make_grid(1, 10), {}, ordered_pairs({4, 5}));
  CHECK_THROWS_AS(sup_t_contrast(fits, field, {50, 1, 1}, {{5, 5}}), Error);
  CHECK_THROWS_AS(sup_t_contrast(fits, field, {50, 1, 1}, {}), Error);
}

TEST_CASE("aliased fits give a degenerate contrast that is skipped") {
  const auto s = fixtures::endogenous(300, 35);
  FitMap fits;
  fits.emplace(5, fit(s, default_npiv(), 5));
  NpivFit alias = fits.at(5);
  alias.J = 7;
  alias.space = std::make_shared<PinnedSpace>();
  fits.emplace(7, alias);
  const auto field = variance_field(fits, make_grid(1, 20), {}, {{5, 7}});
  CHECK(field.contrast_sd.at({5, 7}).cwiseAbs().maxCoeff() < 1e-8);
  const auto table = bootstrap_table(fits, field, {100, 1, 1});
  CHECK(table.contrast.maxCoeff() == 0.0);
}

TEST_CASE("sup-t draws are invariant to rescaling Y") {
  auto s = fixtures::endogenous(400, 36);
  const std::vector<int> dims{4, 5, 7};
  const FitMap fits = fits_for(s, dims);
  Sample scaled = s;
  scaled.y = -3.0 * s.y.array() + 2.0;
  const FitMap fits2 = fits_for(scaled, dims);
  const MultiplierPlan plan{200, 9, 1};
  const auto t1 = bootstrap_table(fits, variance_field(fits, make_grid(1, 30), {}, ordered_pairs(dims)), plan);
  const auto t2 = bootstrap_table(fits2, variance_field(fits2, make_grid(1, 30), {}, ordered_pairs(dims)), plan);
  CHECK((t1.single - t2.single).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((t1.contrast - t2.contrast).cwiseAbs().maxCoeff() < 1e-9);
}
