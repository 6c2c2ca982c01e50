#include "omtube/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace omtube::geometry {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::euclidean: return "euclidean";
    case ModelKind::sphere: return "sphere";
    case ModelKind::hyperbolic: return "hyperbolic";
    case ModelKind::warped_diagonal: return "warped";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "euclidean") return ModelKind::euclidean;
  if (name == "sphere") return ModelKind::sphere;
  if (name == "hyperbolic") return ModelKind::hyperbolic;
  if (name == "warped" || name == "warped_diagonal") return ModelKind::warped_diagonal;
  throw ConstructionError("unknown model '" + name + "'");
}

double WarpProfile::h(double s) const {
  double acc = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * s + *it;
  return acc * s;
}

double WarpProfile::dh(double s) const {
  // d/ds sum c_k s^(k+1) = sum (k+1) c_k s^k
  double acc = 0.0;
  for (int k = static_cast<int>(coefficients.size()) - 1; k >= 0; --k) acc = acc * s + (k + 1) * coefficients[k];
  return acc;
}

double WarpProfile::d2h(double s) const {
  double acc = 0.0;
  for (int k = static_cast<int>(coefficients.size()) - 1; k >= 1; --k) acc = acc * s + (k + 1) * k * coefficients[k];
  return acc;
}

ManifoldModel ManifoldModel::euclidean(int d) {
  ManifoldModel m;
  m.kind = ModelKind::euclidean;
  m.dim = d;
  m.validate();
  return m;
}

ManifoldModel ManifoldModel::sphere(int d, double radius) {
  ManifoldModel m;
  m.kind = ModelKind::sphere;
  m.dim = d;
  m.radius = radius;
  m.validate();
  return m;
}

ManifoldModel ManifoldModel::hyperbolic(int d, double curvature_scale) {
  ManifoldModel m;
  m.kind = ModelKind::hyperbolic;
  m.dim = d;
  m.curvature_scale = curvature_scale;
  m.validate();
  return m;
}

ManifoldModel ManifoldModel::warped_diagonal(int d, WarpProfile profile) {
  ManifoldModel m;
  m.kind = ModelKind::warped_diagonal;
  m.dim = d;
  if (profile.axis_weights.empty()) {
    // distinct weights give distinct Ricci eigenvalues at the base point
    for (int i = 0; i < d; ++i) profile.axis_weights.push_back(1.0 - 0.75 * i);
  }
  m.profile = std::move(profile);
  m.validate();
  return m;
}

void ManifoldModel::validate() const {
  if (dim < 1 || dim > kMaxDim) {
    throw ConstructionError("dimension must be in [1, " + std::to_string(kMaxDim) + "], got " + std::to_string(dim));
  }
  if (kind == ModelKind::sphere && !(radius > 0.0 && std::isfinite(radius))) {
    throw ConstructionError("sphere radius must be positive");
  }
  if (kind == ModelKind::hyperbolic && !(curvature_scale > 0.0 && std::isfinite(curvature_scale))) {
    throw ConstructionError("hyperbolic curvature_scale must be positive");
  }
  if (kind == ModelKind::warped_diagonal) {
    if (static_cast<int>(profile.axis_weights.size()) != dim) {
      throw ConstructionError("warped profile needs one axis weight per dimension");
    }
    if (profile.coefficients.empty()) throw ConstructionError("warped profile needs at least one coefficient");
  }
}

double ManifoldModel::sectional_curvature() const {
  switch (kind) {
    case ModelKind::euclidean: return 0.0;
    case ModelKind::sphere: return 1.0 / (radius * radius);
    case ModelKind::hyperbolic: return -1.0 / (curvature_scale * curvature_scale);
    case ModelKind::warped_diagonal: break;
  }
  throw ConstructionError("sectional curvature is not constant for warped models");
}

double ManifoldModel::max_tube_radius() const {
  if (kind == ModelKind::sphere) return std::numbers::pi * radius / 2.0;
  return std::numeric_limits<double>::infinity();
}

double ManifoldModel::coordinate_domain_radius() const {
  if (kind == ModelKind::sphere) return std::numbers::pi * radius;
  return std::numeric_limits<double>::infinity();
}

std::string ManifoldModel::describe() const {
  std::ostringstream os;
  os << to_string(kind) << "(d=" << dim;
  if (kind == ModelKind::sphere) os << ", radius=" << radius;
  if (kind == ModelKind::hyperbolic) os << ", curvature_scale=" << curvature_scale;
  if (kind == ModelKind::warped_diagonal) {
    os << ", h=[";
    for (std::size_t i = 0; i < profile.coefficients.size(); ++i) os << (i ? "," : "") << profile.coefficients[i];
    os << "], w=[";
    for (std::size_t i = 0; i < profile.axis_weights.size(); ++i) os << (i ? "," : "") << profile.axis_weights[i];
    os << "]";
  }
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------

CurveSpec CurveSpec::constant(int dim, double duration, int steps) {
  if (dim < 1 || dim > kMaxDim) throw ConstructionError("curve dimension out of range");
  if (!(duration > 0.0) || steps < 1) throw ConstructionError("curve needs T > 0 and at least one grid step");
  CurveSpec c;
  c.kind_ = Kind::constant;
  c.dim_ = dim;
  c.duration_ = duration;
  c.steps_ = steps;
  c.line_velocity_ = Vec::Zero(dim);
  return c;
}

CurveSpec CurveSpec::line(const Vec& velocity, double duration, int steps) {
  CurveSpec c = constant(static_cast<int>(velocity.size()), duration, steps);
  if (!velocity.allFinite()) throw ConstructionError("line velocity must be finite");
  if (velocity.squaredNorm() > 0.0) c.kind_ = Kind::line;
  c.line_velocity_ = velocity;
  return c;
}

CurveSpec CurveSpec::table(std::vector<double> knot_times, std::vector<Vec> knot_velocities, int steps) {
  if (knot_times.size() < 2 || knot_times.size() != knot_velocities.size()) {
    throw ConstructionError("curve table needs at least two knots with matching velocities");
  }
  if (knot_times.front() != 0.0) throw ConstructionError("curve table must start at t = 0");
  for (std::size_t i = 1; i < knot_times.size(); ++i) {
    if (!(knot_times[i] > knot_times[i - 1])) throw ConstructionError("curve table times must increase");
    if (knot_velocities[i].size() != knot_velocities[0].size()) throw ConstructionError("curve table dimension mismatch");
  }
  CurveSpec c = constant(static_cast<int>(knot_velocities[0].size()), knot_times.back(), steps);
  bool all_zero = true;
  for (const auto& v : knot_velocities) all_zero = all_zero && v.squaredNorm() == 0.0;
  if (!all_zero) c.kind_ = Kind::table;
  c.knot_times_ = std::move(knot_times);
  c.knot_velocities_ = std::move(knot_velocities);
  return c;
}

Vec CurveSpec::velocity(double t) const {
  switch (kind_) {
    case Kind::constant: return Vec::Zero(dim_);
    case Kind::line: return line_velocity_;
    case Kind::table: break;
  }
  const auto& ts = knot_times_;
  const auto& vs = knot_velocities_;
  const std::size_t n = ts.size();
  if (t <= ts.front()) return vs.front();
  if (t >= ts.back()) return vs.back();
  std::size_t i = 0;
  while (i + 2 < n && ts[i + 1] <= t) ++i;
  const double h = ts[i + 1] - ts[i];
  const double s = (t - ts[i]) / h;
  // Catmull–Rom tangents with one-sided differences at the ends
  const Vec m0 = (i == 0) ? Vec((vs[1] - vs[0]) / h) : Vec((vs[i + 1] - vs[i - 1]) / (ts[i + 1] - ts[i - 1]));
  const Vec m1 = (i + 2 >= n) ? Vec((vs[i + 1] - vs[i]) / h) : Vec((vs[i + 2] - vs[i]) / (ts[i + 2] - ts[i]));
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * vs[i] + (s3 - 2 * s2 + s) * h * m0 + (-2 * s3 + 3 * s2) * vs[i + 1] +
         (s3 - s2) * h * m1;
}

// ---------------------------------------------------------------------------

CurvatureData CurvatureData::constant_curvature(int dim, double K, double t) {
  CurvatureData c;
  c.dim = dim;
  c.t = t;
  c.riemann.assign(static_cast<std::size_t>(dim * dim * dim * dim), 0.0);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      for (int cc = 0; cc < dim; ++cc)
        for (int d = 0; d < dim; ++d)
          c.R(a, b, cc, d) = K * ((a == cc && b == d ? 1.0 : 0.0) - (a == d && b == cc ? 1.0 : 0.0));
  c.contract();
  return c;
}

void CurvatureData::contract() {
  ricci = Mat::Zero(dim, dim);
  for (int b = 0; b < dim; ++b)
    for (int d = 0; d < dim; ++d) {
      double s = 0.0;
      for (int a = 0; a < dim; ++a) s += R(a, b, a, d);
      ricci(b, d) = s;
    }
  scalar = ricci.trace();
}

}  // namespace omtube::geometry
