#pragma once

#include "omtube/geometry.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace omtube::om {

using geometry::ChartPtr;
using geometry::CurvatureData;
using geometry::CurveSpec;
using geometry::MetricChart;

/// Non-finite Lagrangian or action.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Drift vector field f(t, x) expressed in the chart.
class DriftField {
 public:
  enum class Kind { zero, linear, rotational, table };

  static DriftField zero(int dim);
  /// f(x) = A x.
  static DriftField linear(const Mat& a);
  /// f(x) = ω (1 + k|x|^2) (−x², x¹, 0, ...) + m |x|² x: a rotation in the
  /// first coordinate plane plus an optional curl-free radial cubic term.
  static DriftField rotational(int dim, double omega, double k = 0.0, double m = 0.0);
  /// f(t, x) = A(t) x + b(t), piecewise linear in t between the knots.
  static DriftField table(std::vector<double> times, std::vector<Mat> a, std::vector<Vec> b);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool is_zero() const { return kind_ == Kind::zero; }
  std::string describe() const;

  Vec operator()(double t, const Vec& x) const;
  /// Euclidean divergence Σ ∂_i f^i, analytic.
  double divergence(double t, const Vec& x) const;
  /// 4th-order central-difference divergence with step h.
  double divergence_fd(double t, const Vec& x, double h) const;

  /// Returns the field plus ∇φ for φ(x) = ½ xᵀ S x + cᵀx (S symmetric).
  DriftField plus_gradient(const Mat& s, const Vec& c) const;

 private:
  void affine_at(double t, Mat& a, Vec& b) const;

  Kind kind_ = Kind::zero;
  int dim_ = 1;
  double omega_ = 0.0;
  double k_ = 0.0;
  double m_ = 0.0;
  Mat a_;
  Vec b_;
  std::vector<double> times_;
  std::vector<Mat> a_knots_;
  std::vector<Vec> b_knots_;
  bool has_gradient_ = false;
  Mat grad_s_;
  Vec grad_c_;
};

struct OmTerms {
  double kinetic = 0.0;     // ½|f − v|²
  double divergence = 0.0;  // ½ div f
  double curvature = 0.0;   // R / 12
  double total = 0.0;
};

/// Lagrangian at the chart origin (the curve point γ(t)), where g = I.
OmTerms om_lagrangian(const MetricChart& chart, const DriftField& field, double t, const Vec& v);

struct ActionResult {
  double value = 0.0;
  double error_estimate = 0.0;
  OmTerms integrated;  // each term integrated separately
};

/// Composite Simpson quadrature of the Lagrangian over the curve grid.
ActionResult om_action(const MetricChart& chart, const DriftField& field, const CurveSpec& curve);

/// (d/12) Σ R_ij (u^i u^j − δ^ij/d). Throws std::domain_error unless |u| = 1 to 1e-12.
double beta(const CurvatureData& curvature, const Vec& u);

/// b = f − γ̇ at (t, x).
Vec drift_difference(const DriftField& field, const CurveSpec& curve, double t, const Vec& x);

/// α_i = Σ_j (a^j + b^j − c^j) g_ij.
Vec alpha_form(const MetricChart& chart, const DriftField& field, const CurveSpec& curve, double t, const Vec& x);

/// Antisymmetric kernel α_ij(t, x) = ½ ∫₀¹ s (∂_iα_j − ∂_jα_i)(t, sx) ds, so that
/// ∫_{sY} dα = Σ_ij ∫ α_ij(t, Y) ∘ dA^ij with A^ij = ∫ Y^i∘dY^j − Y^j∘dY^i.
/// Gauss–Legendre in s (8 points by default) on a central-difference curl.
Mat alpha_kernel(const MetricChart& chart, const DriftField& field, const CurveSpec& curve, double t, const Vec& x,
                 int gauss_points = 8);

/// Nodes and weights of the n-point Gauss–Legendre rule on [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule& gauss_legendre(int n);

/// Cached evaluation of the Girsanov forms along one chart, used in the
/// per-step hot loop. On constant-curvature charts the Coriolis and
/// Besselization parts of α are radial (φ(|x|) x) and curl-free, so the
/// kernel is computed from g·b alone; α ≡ 0 kernels are short-circuited.
class GirsanovForms {
 public:
  GirsanovForms(ChartPtr chart, DriftField field, CurveSpec curve);

  const MetricChart& chart() const { return *chart_; }
  const DriftField& field() const { return field_; }
  const CurveSpec& curve() const { return curve_; }

  Vec b(double t, const Vec& x) const { return drift_difference(field_, curve_, t, x); }
  Vec alpha(double t, const Vec& x) const;
  Mat kernel(double t, const Vec& x) const;
  double beta(double t, const Vec& u) const;
  /// True when α_ij vanishes identically.
  bool kernel_vanishes() const { return kernel_zero_; }
  /// True when β vanishes identically (isotropic Ricci at every t).
  bool beta_vanishes() const { return beta_zero_; }
  /// Ricci tensor at the chart origin at time t (grid-interpolated on moving charts).
  Mat ricci(double t) const;

 private:
  Vec reduced_alpha(double t, const Vec& x) const;

  ChartPtr chart_;
  DriftField field_;
  CurveSpec curve_;
  bool isotropic_ = false;
  bool kernel_zero_ = false;
  bool beta_zero_ = false;
  std::vector<Mat> ricci_grid_;
};

}  // namespace omtube::om
