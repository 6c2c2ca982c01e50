#include "omtube/om.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

namespace omtube::om {

using geometry::ConstructionError;
using geometry::IsotropicChart;

// ---------------------------------------------------------------------------
// DriftField

DriftField DriftField::zero(int dim) {
  if (dim < 1 || dim > kMaxDim) throw ConstructionError("drift field dimension out of range");
  DriftField f;
  f.kind_ = Kind::zero;
  f.dim_ = dim;
  return f;
}

DriftField DriftField::linear(const Mat& a) {
  if (a.rows() != a.cols()) throw ConstructionError("linear drift needs a square matrix");
  DriftField f = zero(static_cast<int>(a.rows()));
  if (!a.allFinite()) throw ConstructionError("linear drift must be finite");
  if (a.cwiseAbs().maxCoeff() == 0.0) return f;
  f.kind_ = Kind::linear;
  f.a_ = a;
  return f;
}

DriftField DriftField::rotational(int dim, double omega, double k, double m) {
  if (dim < 2) throw ConstructionError("rotational drift needs dimension >= 2");
  DriftField f = zero(dim);
  if (!std::isfinite(omega) || !std::isfinite(k) || !std::isfinite(m)) {
    throw ConstructionError("rotational drift must be finite");
  }
  if (omega == 0.0 && m == 0.0) return f;
  f.kind_ = Kind::rotational;
  f.omega_ = omega;
  f.k_ = k;
  f.m_ = m;
  return f;
}

DriftField DriftField::table(std::vector<double> times, std::vector<Mat> a, std::vector<Vec> b) {
  if (times.empty() || times.size() != a.size() || times.size() != b.size()) {
    throw ConstructionError("drift table needs matching times, matrices and offsets");
  }
  DriftField f = zero(static_cast<int>(b[0].size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (a[i].rows() != f.dim_ || a[i].cols() != f.dim_ || b[i].size() != f.dim_) {
      throw ConstructionError("drift table entry has the wrong shape");
    }
    if (i > 0 && !(times[i] > times[i - 1])) throw ConstructionError("drift table times must increase");
  }
  f.kind_ = Kind::table;
  f.times_ = std::move(times);
  f.a_knots_ = std::move(a);
  f.b_knots_ = std::move(b);
  return f;
}

std::string DriftField::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::zero: os << "zero"; break;
    case Kind::linear: os << "linear"; break;
    case Kind::rotational:
      os << "rotational(omega=" << omega_ << ", k=" << k_;
      if (m_ != 0.0) os << ", m=" << m_;
      os << ")";
      break;
    case Kind::table: os << "table(" << times_.size() << " knots)"; break;
  }
  if (has_gradient_) os << "+gradient";
  return os.str();
}

void DriftField::affine_at(double t, Mat& a, Vec& b) const {
  const auto& ts = times_;
  if (t <= ts.front()) {
    a = a_knots_.front();
    b = b_knots_.front();
    return;
  }
  if (t >= ts.back()) {
    a = a_knots_.back();
    b = b_knots_.back();
    return;
  }
  std::size_t i = 0;
  while (ts[i + 1] <= t) ++i;
  const double w = (t - ts[i]) / (ts[i + 1] - ts[i]);
  a = (1 - w) * a_knots_[i] + w * a_knots_[i + 1];
  b = (1 - w) * b_knots_[i] + w * b_knots_[i + 1];
}

Vec DriftField::operator()(double t, const Vec& x) const {
  Vec out = Vec::Zero(dim_);
  switch (kind_) {
    case Kind::zero: break;
    case Kind::linear: out = a_ * x; break;
    case Kind::rotational: {
      const double s = omega_ * (1.0 + k_ * x.squaredNorm());
      out[0] = -s * x[1];
      out[1] = s * x[0];
      if (m_ != 0.0) out += m_ * x.squaredNorm() * x;
      break;
    }
    case Kind::table: {
      Mat a;
      Vec b;
      affine_at(t, a, b);
      out = a * x + b;
      break;
    }
  }
  if (has_gradient_) out += grad_s_ * x + grad_c_;
  return out;
}

double DriftField::divergence(double t, const Vec& x) const {
  double div = 0.0;
  switch (kind_) {
    case Kind::zero: break;
    case Kind::linear: div = a_.trace(); break;
    case Kind::rotational:  // rotation part: ∂_1(−s x²) + ∂_2(s x¹) = 0
      div = m_ * (dim_ + 2) * x.squaredNorm();
      break;
    case Kind::table: {
      Mat a;
      Vec b;
      affine_at(t, a, b);
      div = a.trace();
      break;
    }
  }
  if (has_gradient_) div += grad_s_.trace();
  return div;
}

double DriftField::divergence_fd(double t, const Vec& x, double h) const {
  auto f = [&](const Vec& y) { return (*this)(t, y); };
  return geometry::divergence_fd(f, x, h);
}

DriftField DriftField::plus_gradient(const Mat& s, const Vec& c) const {
  if (s.rows() != dim_ || s.cols() != dim_ || c.size() != dim_) throw ConstructionError("gradient shape mismatch");
  DriftField f = *this;
  const Mat sym = 0.5 * (s + s.transpose());
  if (f.has_gradient_) {
    f.grad_s_ += sym;
    f.grad_c_ += c;
  } else {
    f.has_gradient_ = true;
    f.grad_s_ = sym;
    f.grad_c_ = c;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Lagrangian and action

OmTerms om_lagrangian(const MetricChart& chart, const DriftField& field, double t, const Vec& v) {
  if (field.dim() != chart.dim() || v.size() != chart.dim()) throw ConstructionError("dimension mismatch");
  const Vec origin = Vec::Zero(chart.dim());
  OmTerms terms;
  terms.kinetic = 0.5 * (field(t, origin) - v).squaredNorm();
  terms.divergence = 0.5 * field.divergence(t, origin);
  terms.curvature = chart.curvature(t).scalar / 12.0;
  terms.total = terms.kinetic + terms.divergence + terms.curvature;
  return terms;
}

namespace {

double simpson(const std::vector<double>& y, double h) {
  const int n = static_cast<int>(y.size()) - 1;
  if (n == 1) return 0.5 * h * (y[0] + y[1]);
  int even = n % 2 == 0 ? n : n - 3;
  double s = 0.0;
  for (int i = 0; i + 2 <= even; i += 2) s += h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
  if (even != n) s += 3.0 * h / 8.0 * (y[n - 3] + 3.0 * y[n - 2] + 3.0 * y[n - 1] + y[n]);
  return s;
}

double trapezoid(const std::vector<double>& y, double h) {
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  return s * h;
}

}  // namespace

ActionResult om_action(const MetricChart& chart, const DriftField& field, const CurveSpec& curve) {
  const int n = curve.steps();
  std::vector<double> tot(n + 1), kin(n + 1), div(n + 1), cur(n + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = curve.grid_time(k);
    const OmTerms l = om_lagrangian(chart, field, t, curve.velocity(t));
    if (!std::isfinite(l.total)) {
      std::ostringstream os;
      os << "non-finite Lagrangian at t=" << t;
      throw EvaluationError(os.str());
    }
    tot[k] = l.total;
    kin[k] = l.kinetic;
    div[k] = l.divergence;
    cur[k] = l.curvature;
  }
  const double h = curve.grid_dt();
  ActionResult r;
  r.value = simpson(tot, h);
  r.integrated.kinetic = simpson(kin, h);
  r.integrated.divergence = simpson(div, h);
  r.integrated.curvature = simpson(cur, h);
  r.integrated.total = r.value;
  if (n % 4 == 0) {
    std::vector<double> coarse;
    for (int k = 0; k <= n; k += 2) coarse.push_back(tot[k]);
    r.error_estimate = std::abs(r.value - simpson(coarse, 2 * h)) / 15.0;
  } else {
    r.error_estimate = std::abs(r.value - trapezoid(tot, h));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Girsanov forms

double beta(const CurvatureData& curvature, const Vec& u) {
  if (u.size() != curvature.dim) throw std::domain_error("beta: dimension mismatch");
  if (std::abs(u.norm() - 1.0) > 1e-12) throw std::domain_error("beta: u is not a unit vector");
  const int d = curvature.dim;
  return d / 12.0 * (u.dot(curvature.ricci * u) - curvature.ricci.trace() / d);
}

Vec drift_difference(const DriftField& field, const CurveSpec& curve, double t, const Vec& x) {
  return field(t, x) - curve.velocity(t);
}

Vec alpha_form(const MetricChart& chart, const DriftField& field, const CurveSpec& curve, double t, const Vec& x) {
  const Vec drift = chart.coriolis_drift(t, x) + drift_difference(field, curve, t, x) - chart.besselization_drift(t, x);
  if (chart.flat()) return drift;
  return chart.metric(t, x) * drift;
}

const GaussRule& gauss_legendre(int n) {
  static std::mutex mutex;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre: unsupported point count");
  GaussRule rule;
  for (int i = 1; i <= n; ++i) {
    double z = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    rule.nodes.push_back(0.5 * (1.0 - z));
    rule.weights.push_back(1.0 / ((1.0 - z * z) * dp * dp));
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

namespace {

/// ½ ∫₀¹ s curl(α)(sx) ds for a covector field α, by 4th-order central
/// differences with step h.
template <class Alpha>
Mat curl_kernel(const Alpha& alpha, const Vec& x, double h, int gauss_points) {
  const int d = static_cast<int>(x.size());
  const GaussRule& rule = gauss_legendre(gauss_points);
  Mat k = Mat::Zero(d, d);
  if (d < 2) return k;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double s = rule.nodes[q];
    const Vec y = s * x;
    Mat jac(d, d);  // jac(i, j) = ∂_i α_j
    for (int i = 0; i < d; ++i) {
      Vec e = Vec::Zero(d);
      e[i] = h;
      jac.row(i) = ((-alpha(Vec(y + 2 * e)) + 8.0 * alpha(Vec(y + e)) - 8.0 * alpha(Vec(y - e)) + alpha(Vec(y - 2 * e))) /
                    (12.0 * h))
                       .transpose();
    }
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) k(i, j) += 0.5 * rule.weights[q] * s * (jac(i, j) - jac(j, i));
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) k(j, i) = -k(i, j);
  return k;
}

}  // namespace

Mat alpha_kernel(const MetricChart& chart, const DriftField& field, const CurveSpec& curve, double t, const Vec& x,
                 int gauss_points) {
  auto alpha = [&](const Vec& y) { return alpha_form(chart, field, curve, t, y); };
  return curl_kernel(alpha, x, 1e-4 * chart.tube_radius(), gauss_points);
}

GirsanovForms::GirsanovForms(ChartPtr chart, DriftField field, CurveSpec curve)
    : chart_(std::move(chart)), field_(std::move(field)), curve_(std::move(curve)) {
  if (!chart_) throw ConstructionError("GirsanovForms needs a chart");
  if (field_.dim() != chart_->dim() || curve_.dim() != chart_->dim()) {
    throw ConstructionError("GirsanovForms: dimension mismatch");
  }
  isotropic_ = dynamic_cast<const IsotropicChart*>(chart_.get()) != nullptr;
  // radial parts are curl-free; g·b is curl-free when g = I and f has no curl, or when b ≡ 0
  kernel_zero_ = isotropic_ && field_.is_zero() && (chart_->flat() || curve_.is_constant());
  beta_zero_ = isotropic_;
  if (!isotropic_) {
    if (chart_->time_independent()) {
      ricci_grid_.push_back(chart_->curvature(0.0).ricci);
    } else {
      for (int k = 0; k <= curve_.steps(); ++k) ricci_grid_.push_back(chart_->curvature(curve_.grid_time(k)).ricci);
    }
  }
}

Vec GirsanovForms::alpha(double t, const Vec& x) const { return alpha_form(*chart_, field_, curve_, t, x); }

Vec GirsanovForms::reduced_alpha(double t, const Vec& x) const {
  const Vec bx = b(t, x);
  if (chart_->flat()) return bx;
  return chart_->metric(t, x) * bx;
}

Mat GirsanovForms::kernel(double t, const Vec& x) const {
  const int d = chart_->dim();
  if (kernel_zero_) return Mat::Zero(d, d);
  const double h = 1e-4 * chart_->tube_radius();
  if (isotropic_) {
    auto alpha = [&](const Vec& y) { return reduced_alpha(t, y); };
    return curl_kernel(alpha, x, h, 8);
  }
  auto alpha = [&](const Vec& y) { return alpha_form(*chart_, field_, curve_, t, y); };
  return curl_kernel(alpha, x, h, 8);
}

Mat GirsanovForms::ricci(double t) const {
  const int d = chart_->dim();
  if (isotropic_) {
    const double K = static_cast<const IsotropicChart&>(*chart_).sectional_curvature();
    return (d - 1) * K * Mat::Identity(d, d);
  }
  if (ricci_grid_.size() == 1) return ricci_grid_.front();
  const double pos = std::clamp(t / curve_.grid_dt(), 0.0, static_cast<double>(curve_.steps()));
  const int k = std::min(static_cast<int>(pos), curve_.steps() - 1);
  const double w = pos - k;
  return (1 - w) * ricci_grid_[k] + w * ricci_grid_[k + 1];
}

double GirsanovForms::beta(double t, const Vec& u) const {
  if (std::abs(u.norm() - 1.0) > 1e-12) throw std::domain_error("beta: u is not a unit vector");
  if (beta_zero_) return 0.0;
  const Mat ric = ricci(t);
  const int d = chart_->dim();
  return d / 12.0 * (u.dot(ric * u) - ric.trace() / d);
}

}  // namespace omtube::om
