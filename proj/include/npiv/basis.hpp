#pragma once

// B-spline sieve bases on [0,1]^d: clamped Cox-de Boor evaluation, derivatives,
// the admissible dimension grid and the J -> K(J) instrument dimension map.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "npiv/error.hpp"

namespace npiv {

enum class KnotRule { uniform_dyadic, empirical_quantile };

/// Per-axis derivative orders. An empty index means "no derivative".
using MultiIndex = std::vector<int>;

inline int total_order(const MultiIndex& a) {
  return std::accumulate(a.begin(), a.end(), 0);
}

inline long long ipow(long long base, int exp) {
  long long out = 1;
  while (exp-- > 0) out *= base;
  return out;
}

/// Number of univariate functions at resolution `level`: 2^l + r - 1.
inline int univariate_dimension(int order, int level) {
  return (1 << level) + order - 1;
}

/// Admissible sieve dimensions (2^l + r - 1)^d not exceeding `cap`.
inline std::vector<int> dimension_grid(int order, int dim, long long cap) {
  if (order < 1 || dim < 1) fail(ErrorKind::config, "basis order and dimension must be >= 1");
  std::vector<int> out;
  for (int level = 0; level < 30; ++level) {
    const long long J = ipow(univariate_dimension(order, level), dim);
    if (J > cap) break;
    out.push_back(static_cast<int>(J));
  }
  if (out.empty()) {
    fail(ErrorKind::config, "dimension cap " + std::to_string(cap) +
                                " is below the smallest admissible sieve dimension " +
                                std::to_string(ipow(order, dim)));
  }
  return out;
}

/// Resolution level l with (2^l + r - 1)^d == J.
inline int level_for_dimension(int order, int dim, long long J) {
  for (int level = 0; level < 30; ++level) {
    const long long candidate = ipow(univariate_dimension(order, level), dim);
    if (candidate == J) return level;
    if (candidate > J) break;
  }
  fail(ErrorKind::invalid_dimension,
       "J = " + std::to_string(J) + " is not an admissible sieve dimension for order " +
           std::to_string(order) + ", dim " + std::to_string(dim));
}

/// A concrete tensor-product B-spline basis at one resolution level.
template <typename Scalar>
struct BasisSpecT {
  int order = 4;  // spline order r (degree r - 1)
  int level = 0;  // resolution l
  int dim = 1;
  KnotRule knot_rule = KnotRule::uniform_dyadic;
  std::vector<std::vector<Scalar>> interior_knots;  // per axis, 2^l - 1 strictly increasing in (0,1)

  int univariate_size() const { return univariate_dimension(order, level); }
  int size() const { return static_cast<int>(ipow(univariate_size(), dim)); }
};

using BasisSpec = BasisSpecT<double>;

template <typename Scalar>
void validate(const BasisSpecT<Scalar>& spec) {
  if (spec.order < 1) fail(ErrorKind::config, "spline order must be >= 1");
  if (spec.level < 0) fail(ErrorKind::config, "resolution level must be >= 0");
  if (spec.dim < 1) fail(ErrorKind::config, "basis dimension must be >= 1");
  if (static_cast<int>(spec.interior_knots.size()) != spec.dim)
    fail(ErrorKind::config, "need one interior knot list per axis");
  const std::size_t expected = (std::size_t{1} << spec.level) - 1;
  for (const auto& knots : spec.interior_knots) {
    if (knots.size() != expected) fail(ErrorKind::config, "interior knot count must be 2^l - 1");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (!(knots[i] > Scalar(0) && knots[i] < Scalar(1)))
        fail(ErrorKind::config, "interior knots must lie in (0,1)");
      if (i > 0 && !(knots[i] > knots[i - 1]))
        fail(ErrorKind::config, "interior knots must be strictly increasing");
    }
  }
}

/// Dyadic knots 2^{-l}, ..., 1 - 2^{-l} on every axis.
template <typename Scalar = double>
BasisSpecT<Scalar> uniform_basis(int order, int level, int dim = 1) {
  BasisSpecT<Scalar> spec;
  spec.order = order;
  spec.level = level;
  spec.dim = dim;
  spec.knot_rule = KnotRule::uniform_dyadic;
  const int count = (1 << level) - 1;
  std::vector<Scalar> knots(count);
  for (int i = 0; i < count; ++i) knots[i] = Scalar(i + 1) / Scalar(1 << level);
  spec.interior_knots.assign(dim, knots);
  validate(spec);
  return spec;
}

namespace detail {

// Linear-interpolation (type 7) sample quantile of sorted data.
template <typename Scalar>
Scalar sorted_quantile(const std::vector<Scalar>& sorted, Scalar p) {
  const Scalar pos = p * Scalar(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const Scalar frac = pos - Scalar(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Interior knots at the empirical i/2^l quantiles of each column of `data`. Values
/// sitting on the boundary (e.g. clamped observations) are left out of the quantiles.
template <typename Scalar, typename Derived>
BasisSpecT<Scalar> quantile_basis(int order, int level, const Eigen::MatrixBase<Derived>& data) {
  BasisSpecT<Scalar> spec;
  spec.order = order;
  spec.level = level;
  spec.dim = static_cast<int>(data.cols());
  spec.knot_rule = KnotRule::empirical_quantile;
  const int count = (1 << level) - 1;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    std::vector<Scalar> sorted;
    sorted.reserve(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      const auto v = static_cast<Scalar>(data(i, j));
      if (v > Scalar(0) && v < Scalar(1)) sorted.push_back(v);
    }
    if (sorted.size() < 2) fail(ErrorKind::data, "quantile knots need at least two interior observations");
    std::sort(sorted.begin(), sorted.end());
    std::vector<Scalar> knots(count);
    for (int i = 0; i < count; ++i)
      knots[i] = detail::sorted_quantile(sorted, Scalar(i + 1) / Scalar(1 << level));
    spec.interior_knots.push_back(std::move(knots));
  }
  validate(spec);
  return spec;
}

/// Level-independent description of a spline sieve; produces a BasisSpec per level.
template <typename Scalar>
struct SplineFamilyT {
  int order = 4;
  int dim = 1;
  KnotRule knot_rule = KnotRule::uniform_dyadic;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> knot_source;  // data for quantile knots

  BasisSpecT<Scalar> at_level(int level) const {
    if (knot_rule == KnotRule::uniform_dyadic) return uniform_basis<Scalar>(order, level, dim);
    if (knot_source.cols() != dim)
      fail(ErrorKind::config, "quantile knot source must have one column per axis");
    return quantile_basis<Scalar>(order, level, knot_source);
  }
  BasisSpecT<Scalar> for_dimension(long long J) const { return at_level(level_for_dimension(order, dim, J)); }
  std::vector<int> grid(long long cap) const { return dimension_grid(order, dim, cap); }
};

using SplineFamily = SplineFamilyT<double>;

template <typename Scalar>
std::vector<int> dimension_grid(const BasisSpecT<Scalar>& spec, long long cap) {
  return dimension_grid(spec.order, spec.dim, cap);
}

namespace detail {

template <typename Scalar>
std::vector<Scalar> clamped_knots(int order, const std::vector<Scalar>& interior) {
  std::vector<Scalar> t(order, Scalar(0));
  t.insert(t.end(), interior.begin(), interior.end());
  t.insert(t.end(), order, Scalar(1));
  return t;
}

// Span k with t[k] <= x < t[k+1]; interior knots resolve to the right span and
// x == 1 to the last non-empty span (left limit).
template <typename Scalar>
int find_span(const std::vector<Scalar>& t, int order, int nbasis, Scalar x) {
  if (x >= t[nbasis]) return nbasis - 1;
  const auto it = std::upper_bound(t.begin() + (order - 1), t.begin() + nbasis + 1, x);
  return static_cast<int>(it - t.begin()) - 1;
}

// Nonzero basis functions and derivatives up to `nder` at x (Piegl-Tiller A2.3).
// Row k holds the k-th derivatives of B_{span-p}, ..., B_{span}.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> basis_derivatives(
    const std::vector<Scalar>& t, int order, int span, Scalar x, int nder) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const int p = order - 1;
  Mat ders = Mat::Zero(nder + 1, order);
  Mat ndu(order, order);
  std::vector<Scalar> left(order), right(order);
  ndu(0, 0) = Scalar(1);
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    Scalar saved(0);
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const Scalar temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }
  for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);
  if (nder == 0) return ders;

  Mat a(2, order);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a.setZero();
    a(0, 0) = Scalar(1);
    for (int k = 1; k <= nder; ++k) {
      Scalar d(0);
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      ders(k, r) = d;
      std::swap(s1, s2);
    }
  }
  Scalar factor(p);
  for (int k = 1; k <= nder; ++k) {
    ders.row(k) *= factor;
    factor *= Scalar(p - k);
  }
  return ders;
}

template <typename Scalar>
void check_derivative(const BasisSpecT<Scalar>& spec, const MultiIndex& a) {
  if (!a.empty() && static_cast<int>(a.size()) != spec.dim)
    fail(ErrorKind::config, "derivative multi-index must have one entry per axis");
  for (int ai : a)
    if (ai < 0) fail(ErrorKind::config, "derivative orders must be nonnegative");
  const int total = total_order(a);
  if (total > 0 && total > spec.order - 2) {
    fail(ErrorKind::unsupported_derivative,
         "derivative order " + std::to_string(total) + " exceeds r - 2 = " +
             std::to_string(spec.order - 2) + " for order-" + std::to_string(spec.order) + " splines");
  }
}

}  // namespace detail

/// Clamped knot vector of one axis (r zeros, interior knots, r ones).
template <typename Scalar>
std::vector<Scalar> knot_vector(const BasisSpecT<Scalar>& spec, int axis = 0) {
  return detail::clamped_knots(spec.order, spec.interior_knots.at(axis));
}

/// Derivative of the basis at a point of [0,1]^d, tensor ordered with the last axis fastest.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eval_basis_deriv(const BasisSpecT<Scalar>& spec,
                                                           const Eigen::MatrixBase<Derived>& x,
                                                           const MultiIndex& a) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  detail::check_derivative(spec, a);
  if (x.size() != spec.dim) fail(ErrorKind::domain, "point dimension does not match the basis");
  const int nb = spec.univariate_size();

  std::vector<int> first(spec.dim);
  std::vector<Vec> axis_values(spec.dim);
  for (int k = 0; k < spec.dim; ++k) {
    const Scalar xk = static_cast<Scalar>(x(k));
    if (!(xk >= Scalar(0) && xk <= Scalar(1)))
      fail(ErrorKind::domain, "basis evaluation point outside [0,1]^d");
    const auto t = detail::clamped_knots(spec.order, spec.interior_knots[k]);
    const int span = detail::find_span(t, spec.order, nb, xk);
    const int ak = a.empty() ? 0 : a[k];
    const auto ders = detail::basis_derivatives(t, spec.order, span, xk, ak);
    axis_values[k] = ders.row(ak).transpose();
    first[k] = span - (spec.order - 1);
  }

  Vec out = Vec::Zero(spec.size());
  const int r = spec.order;
  const long long combos = ipow(r, spec.dim);
  for (long long c = 0; c < combos; ++c) {
    long long rest = c;
    long long index = 0;
    Scalar value(1);
    for (int k = 0; k < spec.dim; ++k) {
      const long long stride = ipow(r, spec.dim - 1 - k);
      const int local = static_cast<int>(rest / stride);
      rest %= stride;
      value *= axis_values[k](local);
      index = index * nb + (first[k] + local);
    }
    out(index) += value;
  }
  return out;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eval_basis(const BasisSpecT<Scalar>& spec,
                                                     const Eigen::MatrixBase<Derived>& x) {
  return eval_basis_deriv(spec, x, MultiIndex{});
}

/// Rows are (d^a psi(x_i))' for the rows x_i of `points`.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> design_matrix(
    const BasisSpecT<Scalar>& spec, const Eigen::MatrixBase<Derived>& points,
    const MultiIndex& a = {}) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(points.rows(), spec.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    out.row(i) = eval_basis_deriv(spec, points.row(i).transpose(), a).transpose();
  return out;
}

/// Exact integrals over [0,1] of each univariate basis function: (t_{i+r} - t_i) / r.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> basis_integrals(const BasisSpecT<Scalar>& spec, int axis = 0) {
  const auto t = knot_vector(spec, axis);
  const int nb = spec.univariate_size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(nb);
  for (int i = 0; i < nb; ++i) out(i) = (t[i + spec.order] - t[i]) / Scalar(spec.order);
  return out;
}

/// Links a regressor sieve of dimension J to an instrument sieve of dimension K(J)
/// through l_w = ceil((l + q) d / d_w), with instrument order one above the regressor order.
struct InstrumentSpec {
  int x_order = 4;
  int x_dim = 1;
  int q = 2;
  SplineFamily w_family{5, 1, KnotRule::uniform_dyadic, {}};

  int w_level(int x_level) const {
    const int num = (x_level + q) * x_dim;
    return (num + w_family.dim - 1) / w_family.dim;
  }
  int dimension_for_level(int x_level) const {
    return static_cast<int>(ipow(univariate_dimension(w_family.order, w_level(x_level)), w_family.dim));
  }
  BasisSpec basis_for_level(int x_level) const { return w_family.at_level(w_level(x_level)); }
};

/// Default instrument spec for an order-r, d-dimensional regressor sieve.
InstrumentSpec make_instrument_spec(int x_order, int x_dim, int w_dim, int q = 2,
                                    KnotRule w_rule = KnotRule::uniform_dyadic);

/// K(J); throws invalid_dimension when J is not in the regressor grid or K(J) < J.
int instrument_dim(const InstrumentSpec& ispec, int J);

// ---------------------------------------------------------------------------
// Support transforms

enum class TransformKind { affine, empirical_cdf, custom_clamp };

/// Maps one raw data column into [0,1].
///   affine:       (v - lo) / (hi - lo), values outside [lo,hi] are a domain error
///   empirical_cdf: midrank(v) / n
///   custom_clamp: clamp(v / scale + shift, 0, 1)
struct SupportTransform {
  TransformKind kind = TransformKind::affine;
  double lo = 0.0;
  double hi = 1.0;
  double shift = 0.0;
  double scale = 1.0;

  static SupportTransform affine(double lo, double hi) { return {TransformKind::affine, lo, hi, 0.0, 1.0}; }
  static SupportTransform empirical_cdf() { return {TransformKind::empirical_cdf, 0.0, 1.0, 0.0, 1.0}; }
  static SupportTransform custom_clamp(double shift, double scale) {
    return {TransformKind::custom_clamp, 0.0, 1.0, shift, scale};
  }
  /// The trade-application rule x = max{0, x/10 + 1}.
  static SupportTransform log_share_clamp() { return custom_clamp(1.0, 10.0); }
};

Eigen::VectorXd apply_transform(const SupportTransform& t, const Eigen::Ref<const Eigen::VectorXd>& raw);

}  // namespace npiv
