#pragma once

#include <random>

#include "npiv/estimator.hpp"

namespace fixtures {

// Endogenous design on [0,1]: X and W share a latent normal, the error loads on X's own noise.
inline npiv::Sample endogenous(int n, std::uint64_t seed, double noise = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  auto cdf = [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); };
  npiv::Sample s;
  s.y.resize(n);
  s.x.resize(n, 1);
  s.w.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double zi = z(rng), vi = z(rng), ei = z(rng);
    s.w(i, 0) = cdf(zi);
    s.x(i, 0) = cdf(0.8 * zi + 0.6 * vi);
    s.y(i) = std::sin(3.0 * s.x(i, 0)) + noise * (0.6 * vi + 0.8 * ei);
  }
  return s;
}

inline npiv::Sample uniform_regression(int n, std::uint64_t seed, double (*h)(double), double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  npiv::Sample s;
  s.y.resize(n);
  s.x.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    s.x(i, 0) = u(rng);
    s.y(i) = h(s.x(i, 0)) + noise * z(rng);
  }
  s.w = s.x;
  return s;
}

}  // namespace fixtures
