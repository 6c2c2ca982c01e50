#pragma once

#include "omtube/linalg.hpp"
#include "omtube/rng.hpp"

#include <cmath>
#include <cstdint>

namespace omtube::testing {

/// Uniform random point in the open ball of radius r (deterministic in `index`).
inline Vec random_point(int d, double r, std::uint64_t index, std::uint64_t seed = 99) {
  CounterRng rng(seed, Stream::test, index, 1);
  Vec u(d);
  for (int i = 0; i < d; ++i) u[i] = rng.normal();
  u /= u.norm();
  return r * std::pow(rng.uniform(), 1.0 / d) * u;
}

inline Vec random_unit(int d, std::uint64_t index, std::uint64_t seed = 5) {
  CounterRng rng(seed, Stream::test, index, 2);
  Vec u(d);
  for (int i = 0; i < d; ++i) u[i] = rng.normal();
  return u / u.norm();
}

inline double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }
inline double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace omtube::testing
