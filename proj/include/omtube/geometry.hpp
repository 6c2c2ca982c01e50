#pragma once

#include "omtube/linalg.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace omtube::geometry {

/// A point left the region where a chart is valid.
class ChartDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Chart or curve could not be built for the requested model.
class ConstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite or non-SPD intermediate in a geometric computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

enum class ModelKind { euclidean, sphere, hyperbolic, warped_diagonal };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Radial profile of a warped diagonal metric,
///   G_ii(y) = exp(2 w_i h(|y|^2)),   h(s) = sum_k c_k s^(k+1).
/// h(0) = 0, so G(0) = I.
struct WarpProfile {
  std::vector<double> coefficients{0.5};
  std::vector<double> axis_weights;

  double h(double s) const;
  double dh(double s) const;
  double d2h(double s) const;
};

struct ManifoldModel {
  ModelKind kind = ModelKind::euclidean;
  int dim = 2;
  double radius = 1.0;           // sphere
  double curvature_scale = 1.0;  // hyperbolic: sectional curvature -1/scale^2
  WarpProfile profile;           // warped_diagonal

  static ManifoldModel euclidean(int d);
  static ManifoldModel sphere(int d, double radius);
  static ManifoldModel hyperbolic(int d, double curvature_scale);
  static ManifoldModel warped_diagonal(int d, WarpProfile profile);

  void validate() const;
  bool constant_curvature() const { return kind != ModelKind::warped_diagonal; }
  /// Sectional curvature of the constant-curvature models (0 for euclidean).
  double sectional_curvature() const;
  /// Upper bound on chart tube radii (injectivity radius along any curve).
  double max_tube_radius() const;
  /// Radius of the model's global coordinate domain around the base point.
  double coordinate_domain_radius() const;
  std::string describe() const;
};

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// A curve described by its development: the velocity of γ expressed in a
/// parallel orthonormal frame along γ, on a uniform grid over [0, T].
/// Starting point is the model's base point (global coordinates 0).
class CurveSpec {
 public:
  enum class Kind { constant, line, table };

  static CurveSpec constant(int dim, double duration, int steps);
  /// Geodesic with constant frame velocity.
  static CurveSpec line(const Vec& velocity, double duration, int steps);
  /// Frame velocity sampled at knot times (first knot 0, last knot = T),
  /// interpolated by Catmull–Rom cubics.
  static CurveSpec table(std::vector<double> knot_times, std::vector<Vec> knot_velocities, int steps);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double duration() const { return duration_; }
  int steps() const { return steps_; }
  double grid_dt() const { return duration_ / steps_; }
  double grid_time(int k) const { return duration_ * k / steps_; }
  bool is_constant() const { return kind_ == Kind::constant; }

  Vec velocity(double t) const;

 private:
  Kind kind_ = Kind::constant;
  int dim_ = 1;
  double duration_ = 1.0;
  int steps_ = 1;
  Vec line_velocity_;
  std::vector<double> knot_times_;
  std::vector<Vec> knot_velocities_;
};

// ---------------------------------------------------------------------------
// Curvature
// ---------------------------------------------------------------------------

/// Curvature tensors at the origin of a Fermi chart (g = I there), with
/// the convention R_abab = sectional curvature of the (a, b) plane.
struct CurvatureData {
  int dim = 0;
  double t = 0.0;
  std::vector<double> riemann;  // R_abcd, row-major d^4
  Mat ricci;                    // R_bd = sum_a R_abad
  double scalar = 0.0;

  double& R(int a, int b, int c, int d) { return riemann[((a * dim + b) * dim + c) * dim + d]; }
  double R(int a, int b, int c, int d) const { return riemann[((a * dim + b) * dim + c) * dim + d]; }

  static CurvatureData constant_curvature(int dim, double K, double t = 0.0);
  /// Fills ricci and scalar from riemann.
  void contract();
};

/// Christoffel symbols Γ^k_ij of a global metric, stored [k][i][j].
struct Christoffel {
  int dim = 0;
  std::array<double, kMaxDim * kMaxDim * kMaxDim> v{};

  double& operator()(int k, int i, int j) { return v[(k * kMaxDim + i) * kMaxDim + j]; }
  double operator()(int k, int i, int j) const { return v[(k * kMaxDim + i) * kMaxDim + j]; }
};

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

enum class DerivativeMode {
  automatic,          // closed form when the chart has one
  finite_difference,  // always the generic finite-difference pipeline
};

/// Fermi (normal-along-γ) chart. Immutable after construction; safe to
/// share between worker threads.
class MetricChart {
 public:
  MetricChart(ManifoldModel model, CurveSpec curve, double tube_radius);
  virtual ~MetricChart() = default;

  const ManifoldModel& model() const { return model_; }
  const CurveSpec& curve() const { return curve_; }
  int dim() const { return model_.dim; }
  double tube_radius() const { return tube_radius_; }
  /// Step for the 4th-order difference stencils on g.
  double fd_step() const { return 1e-3 * tube_radius_; }

  virtual Mat metric(double t, const Vec& x) const = 0;
  virtual Mat inverse_metric(double t, const Vec& x) const;
  virtual double sqrt_det(double t, const Vec& x) const;
  /// Symmetric square root of inverse_metric.
  virtual Mat sigma(double t, const Vec& x) const;
  virtual Mat sigma_minus_identity(double t, const Vec& x) const;
  /// Sum_j (1 - g^jj(t, x)).
  virtual double besselization_numerator(double t, const Vec& x) const;

  virtual Vec coriolis_drift(double t, const Vec& x, DerivativeMode mode = DerivativeMode::automatic) const;
  Vec besselization_drift(double t, const Vec& x) const;
  virtual CurvatureData curvature(double t, DerivativeMode mode = DerivativeMode::automatic) const;

  /// γ(t) in the model's global coordinates.
  virtual Vec base_point(double t) const = 0;
  /// True when g(t, x) does not depend on t.
  virtual bool time_independent() const = 0;
  /// True when σ = I and all drifts vanish identically.
  virtual bool flat() const { return false; }

  /// Throws ChartDomainError when |x| >= tube_radius or x is not finite.
  void check_domain(double t, const Vec& x) const;

 protected:
  Vec coriolis_drift_fd(double t, const Vec& x) const;
  CurvatureData curvature_fd(double t) const;
  static Mat symmetric_sqrt(const Mat& a, double t, const Vec& x);

 private:
  ManifoldModel model_;
  CurveSpec curve_;
  double tube_radius_;
};

using ChartPtr = std::shared_ptr<const MetricChart>;

/// Closed-form chart for constant sectional curvature K (euclidean, sphere,
/// hyperbolic). The metric in normal coordinates is
///   g = u u^T + (sn(r)/r)^2 (I - u u^T),  u = x/|x|,
/// identical at every point of every curve.
class IsotropicChart final : public MetricChart {
 public:
  IsotropicChart(ManifoldModel model, CurveSpec curve, double tube_radius);

  Mat metric(double t, const Vec& x) const override;
  Mat inverse_metric(double t, const Vec& x) const override;
  double sqrt_det(double t, const Vec& x) const override;
  Mat sigma(double t, const Vec& x) const override;
  Mat sigma_minus_identity(double t, const Vec& x) const override;
  double besselization_numerator(double t, const Vec& x) const override;
  Vec coriolis_drift(double t, const Vec& x, DerivativeMode mode = DerivativeMode::automatic) const override;
  CurvatureData curvature(double t, DerivativeMode mode = DerivativeMode::automatic) const override;
  Vec base_point(double t) const override;
  bool time_independent() const override { return true; }
  bool flat() const override { return curvature_ == 0.0; }

  double sectional_curvature() const { return curvature_; }
  /// r / sn(r) - 1, accurate for small r.
  double transverse_sigma_minus_one(double r) const;
  /// Radial component of the Coriolis drift.
  double coriolis_radial(double r) const;
  /// Both of the above with one trigonometric evaluation.
  void radial_terms(double r, double& sigma_minus_one, double& coriolis) const;

 private:
  double curvature_;
  std::vector<Vec> base_points_;
};

/// Chart for a warped diagonal metric built by geodesic shooting from γ(t)
/// with a parallel frame transported along γ (RK4, grid step / 4).
class WarpedChart final : public MetricChart {
 public:
  WarpedChart(ManifoldModel model, CurveSpec curve, double tube_radius, int shooting_steps = 32);

  Mat metric(double t, const Vec& x) const override;
  Vec base_point(double t) const override;
  bool time_independent() const override { return curve().is_constant(); }

  /// Parallel orthonormal frame at γ(t) (columns, global coordinates).
  Mat frame(double t) const;
  /// Exact curvature of the global metric at γ(t), expressed in the frame.
  CurvatureData frame_curvature(double t) const;

 private:
  int shooting_steps_;
  std::vector<Vec> points_;
  std::vector<Mat> frames_;
};

/// Global metric of a model in its base-point coordinates.
Mat global_metric(const ManifoldModel& model, const Vec& y);
/// Christoffel symbols of global_metric (closed form for warped_diagonal,
/// 4th-order differences otherwise).
Christoffel global_christoffel(const ManifoldModel& model, const Vec& y);
/// Riemann tensor R_abcd of a warped diagonal global metric at y, in
/// global coordinates. Closed form from the profile.
CurvatureData warped_riemann(const ManifoldModel& model, const Vec& y);

/// Builds the Fermi chart of `model` along `curve`.
/// Throws ChartDomainError if tube_radius reaches the injectivity bound and
/// ConstructionError if the curve leaves the model's coordinate domain.
ChartPtr fermi_chart(const ManifoldModel& model, const CurveSpec& curve, double tube_radius);

/// Curvature at x = 0 of the chart at time t.
CurvatureData curvature_at(const MetricChart& chart, double t, DerivativeMode mode = DerivativeMode::automatic);
Vec coriolis_drift(const MetricChart& chart, double t, const Vec& x, DerivativeMode mode = DerivativeMode::automatic);
Vec besselization_drift(const MetricChart& chart, double t, const Vec& x);
Mat sigma_sqrt(const MetricChart& chart, double t, const Vec& x);

/// Divergence sum_j ∂_j F^j of a chart vector field by 4th-order central differences.
template <class Field>
double divergence_fd(const Field& field, const Vec& x, double h) {
  double div = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    Vec e = Vec::Zero(x.size());
    e[j] = h;
    div += (-field(Vec(x + 2 * e))[j] + 8.0 * field(Vec(x + e))[j] - 8.0 * field(Vec(x - e))[j] +
            field(Vec(x - 2 * e))[j]) /
           (12.0 * h);
  }
  return div;
}

// ---------------------------------------------------------------------------
// Expansion orders
// ---------------------------------------------------------------------------

enum class ExpansionQuantity { sigma_minus_expansion, div_a_minus_limit, div_c_minus_limit };

std::string to_string(ExpansionQuantity q);

struct ExpansionFit {
  bool exact = false;  // every residual below 1e-13
  double slope = 0.0;
  std::vector<double> radii;
  std::vector<double> residuals;
};

/// Log–log slope of (quantity − leading term) against |x|, maximised over
/// `directions` random unit vectors at each radius.
///
/// Leading terms at the origin of the chart at time t:
///   σ^ij ≈ δ^ij + (1/6) R_ikjl x^k x^l
///   div a ≈ −R/3
///   div c ≈ −(d/6) R_ij u^i u^j
ExpansionFit expansion_order_check(const MetricChart& chart, ExpansionQuantity quantity, const std::vector<double>& radii,
                                   double t = 0.0, int directions = 16, std::uint64_t seed = 1);

}  // namespace omtube::geometry
