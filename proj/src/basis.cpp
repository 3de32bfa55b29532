#include "npiv/basis.hpp"

#include <numeric>

namespace npiv {

InstrumentSpec make_instrument_spec(int x_order, int x_dim, int w_dim, int q, KnotRule w_rule) {
  if (q < 0) fail(ErrorKind::config, "resolution offset q must be >= 0");
  InstrumentSpec spec;
  spec.x_order = x_order;
  spec.x_dim = x_dim;
  spec.q = q;
  spec.w_family = SplineFamily{x_order + 1, w_dim, w_rule, {}};
  return spec;
}

int instrument_dim(const InstrumentSpec& ispec, int J) {
  const int level = level_for_dimension(ispec.x_order, ispec.x_dim, J);
  const int K = ispec.dimension_for_level(level);
  if (K < J) {
    fail(ErrorKind::invalid_dimension, "K(J) = " + std::to_string(K) + " < J = " + std::to_string(J) +
                                           "; increase the resolution offset q");
  }
  return K;
}

Eigen::VectorXd apply_transform(const SupportTransform& t, const Eigen::Ref<const Eigen::VectorXd>& raw) {
  const Eigen::Index n = raw.size();
  if (n == 0) fail(ErrorKind::data, "cannot transform an empty column");
  if (!raw.allFinite()) fail(ErrorKind::data, "column contains NaN or Inf");
  Eigen::VectorXd out(n);
  switch (t.kind) {
    case TransformKind::affine: {
      if (!(t.lo < t.hi)) fail(ErrorKind::config, "affine transform requires lo < hi");
      for (Eigen::Index i = 0; i < n; ++i) {
        if (raw(i) < t.lo || raw(i) > t.hi)
          fail(ErrorKind::domain, "value " + std::to_string(raw(i)) + " outside the affine support");
        out(i) = std::clamp((raw(i) - t.lo) / (t.hi - t.lo), 0.0, 1.0);
      }
      break;
    }
    case TransformKind::empirical_cdf: {
      if (raw.maxCoeff() == raw.minCoeff())
        fail(ErrorKind::degenerate_column, "empirical CDF of a constant column is degenerate");
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return raw(a) < raw(b); });
      // midranks over tie blocks; ranks are 1..n
      Eigen::Index start = 0;
      while (start < n) {
        Eigen::Index stop = start + 1;
        while (stop < n && raw(order[stop]) == raw(order[start])) ++stop;
        const double midrank = 0.5 * static_cast<double>(start + 1 + stop);
        for (Eigen::Index k = start; k < stop; ++k) out(order[k]) = midrank / static_cast<double>(n);
        start = stop;
      }
      break;
    }
    case TransformKind::custom_clamp: {
      if (t.scale == 0.0) fail(ErrorKind::config, "clamp transform scale must be nonzero");
      for (Eigen::Index i = 0; i < n; ++i) out(i) = std::clamp(raw(i) / t.scale + t.shift, 0.0, 1.0);
      break;
    }
  }
  return out;
}

}  // namespace npiv
