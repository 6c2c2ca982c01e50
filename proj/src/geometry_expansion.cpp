#include "omtube/geometry.hpp"
#include "omtube/rng.hpp"

#include <cmath>

namespace omtube::geometry {

std::string to_string(ExpansionQuantity q) {
  switch (q) {
    case ExpansionQuantity::sigma_minus_expansion: return "sigma_minus_expansion";
    case ExpansionQuantity::div_a_minus_limit: return "div_a_minus_limit";
    case ExpansionQuantity::div_c_minus_limit: return "div_c_minus_limit";
  }
  return "unknown";
}

namespace {

double residual(const MetricChart& chart, ExpansionQuantity q, const CurvatureData& curv, double t, const Vec& x) {
  const int d = chart.dim();
  const double h = chart.fd_step();
  switch (q) {
    case ExpansionQuantity::sigma_minus_expansion: {
      const Mat s = chart.sigma_minus_identity(t, x);
      double worst = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double lead = 0.0;
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) lead += curv.R(i, k, j, l) * x[k] * x[l];
          worst = std::max(worst, std::abs(s(i, j) - lead / 6.0));
        }
      return worst;
    }
    case ExpansionQuantity::div_a_minus_limit: {
      auto a = [&](const Vec& y) { return chart.coriolis_drift(t, y); };
      return std::abs(divergence_fd(a, x, h) + curv.scalar / 3.0);
    }
    case ExpansionQuantity::div_c_minus_limit: {
      auto c = [&](const Vec& y) { return chart.besselization_drift(t, y); };
      const Vec u = x / x.norm();
      return std::abs(divergence_fd(c, x, h) + d / 6.0 * u.dot(curv.ricci * u));
    }
  }
  return 0.0;
}

}  // namespace

ExpansionFit expansion_order_check(const MetricChart& chart, ExpansionQuantity quantity, const std::vector<double>& radii,
                                   double t, int directions, std::uint64_t seed) {
  if (radii.size() < 2) throw std::invalid_argument("expansion_order_check needs at least two radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || radii[i] >= chart.tube_radius()) {
      throw std::invalid_argument("radii must lie in (0, tube_radius)");
    }
    if (i > 0 && !(radii[i] < radii[i - 1])) throw std::invalid_argument("radii must be strictly decreasing");
  }
  if (directions < 1) throw std::invalid_argument("directions must be positive");

  const int d = chart.dim();
  const CurvatureData curv = chart.curvature(t);
  std::vector<Vec> dirs;
  for (int k = 0; k < directions; ++k) {
    CounterRng rng(seed, Stream::test, static_cast<std::uint64_t>(k), 0);
    Vec u(d);
    for (int i = 0; i < d; ++i) u[i] = rng.normal();
    dirs.push_back(u / u.norm());
  }

  ExpansionFit fit;
  fit.radii = radii;
  for (double r : radii) {
    double worst = 0.0;
    for (const Vec& u : dirs) worst = std::max(worst, residual(chart, quantity, curv, t, Vec(r * u)));
    fit.residuals.push_back(worst);
  }
  fit.exact = true;
  for (double e : fit.residuals) fit.exact = fit.exact && e < 1e-13;
  if (fit.exact) return fit;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(fit.residuals[i] > 0.0)) continue;
    const double lx = std::log(radii[i]), ly = std::log(fit.residuals[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

}  // namespace omtube::geometry
