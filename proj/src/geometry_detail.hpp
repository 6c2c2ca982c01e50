#pragma once

#include "omtube/geometry.hpp"

#include <vector>

namespace omtube::geometry::detail {

/// Base points and parallel orthonormal frames of a curve on the time grid,
/// integrated from its frame velocity (RK4, grid step / 4).
struct Development {
  std::vector<Vec> points;
  std::vector<Mat> frames;
};

Development develop_curve(const ManifoldModel& model, const CurveSpec& curve);

/// Catmull–Rom interpolation of grid samples at time t.
template <class T>
T interpolate_grid(const std::vector<T>& samples, const CurveSpec& curve, double t) {
  const int n = curve.steps();
  double pos = t / curve.grid_dt();
  if (pos <= 0.0) return samples.front();
  if (pos >= n) return samples.back();
  int k = static_cast<int>(pos);
  if (k >= n) k = n - 1;
  const double s = pos - k;
  if (s == 0.0) return samples[k];
  const T& p1 = samples[k];
  const T& p2 = samples[k + 1];
  const T p0 = k > 0 ? samples[k - 1] : T(2 * p1 - p2);
  const T p3 = k + 2 <= n ? samples[k + 2] : T(2 * p2 - p1);
  const double s2 = s * s, s3 = s2 * s;
  return T(0.5 * ((2 * p1) + (-p0 + p2) * s + (2 * p0 - 5 * p1 + 4 * p2 - p3) * s2 + (-p0 + 3 * p1 - 3 * p2 + p3) * s3));
}

}  // namespace omtube::geometry::detail
