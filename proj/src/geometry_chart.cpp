#include "geometry_detail.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace omtube::geometry {

namespace {

std::string where(double t, const Vec& x) {
  std::ostringstream os;
  os.precision(17);
  os << "(t=" << t << ", x=[";
  for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << "])";
  return os.str();
}

// 1-D 4th-order first-derivative weights at offsets -2..2, divided by 12h.
constexpr double kD1[5] = {1.0, -8.0, 0.0, 8.0, -1.0};

}  // namespace

MetricChart::MetricChart(ManifoldModel model, CurveSpec curve, double tube_radius)
    : model_(std::move(model)), curve_(std::move(curve)), tube_radius_(tube_radius) {
  model_.validate();
  if (curve_.dim() != model_.dim) {
    throw ConstructionError("curve dimension " + std::to_string(curve_.dim()) + " does not match model dimension " +
                            std::to_string(model_.dim));
  }
  if (!(tube_radius_ > 0.0) || !std::isfinite(tube_radius_)) {
    throw ConstructionError("tube_radius must be positive and finite");
  }
  if (tube_radius_ >= model_.max_tube_radius()) {
    std::ostringstream os;
    os << "tube_radius " << tube_radius_ << " exceeds the injectivity bound " << model_.max_tube_radius() << " of "
       << model_.describe();
    throw ChartDomainError(os.str());
  }
}

void MetricChart::check_domain(double t, const Vec& x) const {
  if (x.size() != dim()) throw ChartDomainError("point has wrong dimension " + where(t, x));
  if (!x.allFinite() || x.norm() >= tube_radius_) throw ChartDomainError("point outside chart " + where(t, x));
}

Mat MetricChart::inverse_metric(double t, const Vec& x) const {
  const Mat g = metric(t, x);
  Eigen::LDLT<Mat> ldlt(g);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericError("metric not SPD at " + where(t, x));
  Mat inv = ldlt.solve(Mat::Identity(dim(), dim()));
  return 0.5 * (inv + inv.transpose());
}

double MetricChart::sqrt_det(double t, const Vec& x) const {
  const double det = metric(t, x).determinant();
  if (!(det > 0.0)) throw NumericError("non-positive metric determinant at " + where(t, x));
  return std::sqrt(det);
}

Mat MetricChart::sigma(double t, const Vec& x) const { return symmetric_sqrt(inverse_metric(t, x), t, x); }

Mat MetricChart::sigma_minus_identity(double t, const Vec& x) const {
  return sigma(t, x) - Mat::Identity(dim(), dim());
}

double MetricChart::besselization_numerator(double t, const Vec& x) const {
  if (x.norm() < 1e-6) {
    // sum_j (g^jj - 1) = (1/3) Ric(x, x) + O(|x|^3)
    const CurvatureData c = curvature(t);
    return -x.dot(c.ricci * x) / 3.0;
  }
  const Mat ginv = inverse_metric(t, x);
  return static_cast<double>(dim()) - ginv.trace();
}

Vec MetricChart::besselization_drift(double t, const Vec& x) const {
  const double r2 = x.squaredNorm();
  if (r2 == 0.0 || flat()) return Vec::Zero(dim());
  // parallel to x by construction, so c^i x^j = c^j x^i exactly
  return (besselization_numerator(t, x) / (2.0 * r2)) * x;
}

Vec MetricChart::coriolis_drift(double t, const Vec& x, DerivativeMode) const { return coriolis_drift_fd(t, x); }

CurvatureData MetricChart::curvature(double t, DerivativeMode) const { return curvature_fd(t); }

Vec MetricChart::coriolis_drift_fd(double t, const Vec& x) const {
  const int d = dim();
  const double h = fd_step();
  Vec div = Vec::Zero(d);
  for (int j = 0; j < d; ++j) {
    for (int p = 0; p < 5; ++p) {
      if (kD1[p] == 0.0) continue;
      Vec y = x;
      y[j] += (p - 2) * h;
      const Mat ginv = inverse_metric(t, y);
      const double sg = sqrt_det(t, y);
      for (int i = 0; i < d; ++i) div[i] += kD1[p] * sg * ginv(i, j);
    }
  }
  div /= 12.0 * h;
  Vec a = (0.5 / sqrt_det(t, x)) * div;
  if (!a.allFinite()) throw NumericError("non-finite Coriolis drift at " + where(t, x));
  return a;
}

CurvatureData MetricChart::curvature_fd(double t) const {
  const int d = dim();
  const double h = fd_step();
  const Vec origin = Vec::Zero(d);
  // second[m * d + n] = ∂_m ∂_n g at the origin
  std::vector<Mat> second(static_cast<std::size_t>(d * d), Mat::Zero(d, d));
  const Mat g0 = metric(t, origin);
  for (int m = 0; m < d; ++m) {
    Mat acc = -30.0 * g0;
    const double w[5] = {-1.0, 16.0, 0.0, 16.0, -1.0};
    for (int p = 0; p < 5; ++p) {
      if (p == 2) continue;
      Vec y = origin;
      y[m] = (p - 2) * h;
      acc += w[p] * metric(t, y);
    }
    second[m * d + m] = acc / (12.0 * h * h);
    for (int n = m + 1; n < d; ++n) {
      Mat mixed = Mat::Zero(d, d);
      for (int p = 0; p < 5; ++p) {
        if (kD1[p] == 0.0) continue;
        for (int q = 0; q < 5; ++q) {
          if (kD1[q] == 0.0) continue;
          Vec y = origin;
          y[m] = (p - 2) * h;
          y[n] = (q - 2) * h;
          mixed += kD1[p] * kD1[q] * metric(t, y);
        }
      }
      mixed /= 144.0 * h * h;
      second[m * d + n] = mixed;
      second[n * d + m] = mixed;
    }
  }
  auto dd = [&](int m, int n, int i, int j) { return second[m * d + n](i, j); };
  CurvatureData c;
  c.dim = d;
  c.t = t;
  c.riemann.assign(static_cast<std::size_t>(d * d * d * d), 0.0);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int cc = 0; cc < d; ++cc)
        for (int e = 0; e < d; ++e) {
          const double v = 0.5 * (dd(b, cc, a, e) + dd(a, e, b, cc) - dd(a, cc, b, e) - dd(b, e, a, cc));
          if (!std::isfinite(v)) throw NumericError("non-finite curvature estimate at t=" + std::to_string(t));
          c.R(a, b, cc, e) = v;
        }
  c.contract();
  return c;
}

Mat MetricChart::symmetric_sqrt(const Mat& a, double t, const Vec& x) {
  if (!a.allFinite()) throw NumericError("non-finite inverse metric at " + where(t, x));
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed at " + where(t, x));
  Vec ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-12 * scale) throw NumericError("inverse metric not positive definite at " + where(t, x));
  for (int i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 1e-12));
  const Mat& v = es.eigenvectors();
  Mat s = v * ev.asDiagonal() * v.transpose();
  return 0.5 * (s + s.transpose());
}

// ---------------------------------------------------------------------------

IsotropicChart::IsotropicChart(ManifoldModel model, CurveSpec curve, double tube_radius)
    : MetricChart(std::move(model), std::move(curve), tube_radius), curvature_(this->model().sectional_curvature()) {
  if (this->model().kind == ModelKind::euclidean) {
    // flat development: γ(t) = ∫ v
    base_points_.reserve(this->curve().steps() + 1);
    Vec p = Vec::Zero(dim());
    base_points_.push_back(p);
    const double h = this->curve().grid_dt();
    for (int k = 0; k < this->curve().steps(); ++k) {
      const double t0 = this->curve().grid_time(k);
      p += h / 6.0 *
           (this->curve().velocity(t0) + 4.0 * this->curve().velocity(t0 + 0.5 * h) + this->curve().velocity(t0 + h));
      base_points_.push_back(p);
    }
  } else {
    base_points_ = detail::develop_curve(this->model(), this->curve()).points;
  }
}

double IsotropicChart::transverse_sigma_minus_one(double r) const {
  const double K = curvature_;
  const double z = K * r * r;
  if (std::abs(z) < 1e-3) {
    return z * (1.0 / 6.0 + z * (7.0 / 360.0 + z * (31.0 / 15120.0 + z * (127.0 / 604800.0))));
  }
  const double k = std::sqrt(std::abs(K));
  const double sn = K > 0 ? std::sin(k * r) / k : std::sinh(k * r) / k;
  return r / sn - 1.0;
}

double IsotropicChart::coriolis_radial(double r) const {
  const double K = curvature_;
  const double d1 = dim() - 1;
  const double z = K * r * r;
  if (std::abs(z) < 1e-3) {
    // cn/sn - r/sn^2 = -r (2K/3 + 4K^2 r^2/45 + 4K^3 r^4/315 + 8K^4 r^6/4725)
    return -0.5 * d1 * r * K * (2.0 / 3.0 + z * (4.0 / 45.0 + z * (4.0 / 315.0 + z * (8.0 / 4725.0))));
  }
  const double k = std::sqrt(std::abs(K));
  const double sn = K > 0 ? std::sin(k * r) / k : std::sinh(k * r) / k;
  const double cn = K > 0 ? std::cos(k * r) : std::cosh(k * r);
  return 0.5 * d1 * (cn / sn - r / (sn * sn));
}

void IsotropicChart::radial_terms(double r, double& sigma_minus_one, double& coriolis) const {
  const double K = curvature_;
  if (std::abs(K * r * r) < 1e-3) {
    sigma_minus_one = transverse_sigma_minus_one(r);
    coriolis = coriolis_radial(r);
    return;
  }
  const double k = std::sqrt(std::abs(K));
  const double sn = K > 0 ? std::sin(k * r) / k : std::sinh(k * r) / k;
  const double cn = K > 0 ? std::cos(k * r) : std::cosh(k * r);
  sigma_minus_one = r / sn - 1.0;
  coriolis = 0.5 * (dim() - 1) * (cn / sn - r / (sn * sn));
}

Mat IsotropicChart::metric(double, const Vec& x) const {
  const int d = dim();
  const double r = x.norm();
  Mat g = Mat::Identity(d, d);
  if (r == 0.0 || curvature_ == 0.0) return g;
  const double rm1 = transverse_sigma_minus_one(r);
  const double rho = 1.0 + rm1;
  const Vec u = x / r;
  // ρ^-2 - 1 on the transverse block
  g += (-rm1 * (rho + 1.0) / (rho * rho)) * (Mat::Identity(d, d) - u * u.transpose());
  return g;
}

Mat IsotropicChart::inverse_metric(double, const Vec& x) const {
  const int d = dim();
  const double r = x.norm();
  Mat g = Mat::Identity(d, d);
  if (r == 0.0 || curvature_ == 0.0) return g;
  const double rm1 = transverse_sigma_minus_one(r);
  const Vec u = x / r;
  g += (rm1 * (rm1 + 2.0)) * (Mat::Identity(d, d) - u * u.transpose());
  return g;
}

double IsotropicChart::sqrt_det(double, const Vec& x) const {
  const double r = x.norm();
  if (r == 0.0 || curvature_ == 0.0) return 1.0;
  return std::pow(1.0 + transverse_sigma_minus_one(r), -(dim() - 1));
}

Mat IsotropicChart::sigma(double t, const Vec& x) const {
  return Mat::Identity(dim(), dim()) + sigma_minus_identity(t, x);
}

Mat IsotropicChart::sigma_minus_identity(double, const Vec& x) const {
  const int d = dim();
  const double r = x.norm();
  if (r == 0.0 || curvature_ == 0.0) return Mat::Zero(d, d);
  const Vec u = x / r;
  return transverse_sigma_minus_one(r) * (Mat::Identity(d, d) - u * u.transpose());
}

double IsotropicChart::besselization_numerator(double, const Vec& x) const {
  const double r = x.norm();
  if (r == 0.0 || curvature_ == 0.0) return 0.0;
  const double rm1 = transverse_sigma_minus_one(r);
  return -(dim() - 1) * rm1 * (rm1 + 2.0);
}

Vec IsotropicChart::coriolis_drift(double t, const Vec& x, DerivativeMode mode) const {
  if (mode == DerivativeMode::finite_difference) return coriolis_drift_fd(t, x);
  const double r = x.norm();
  if (r == 0.0 || curvature_ == 0.0) return Vec::Zero(dim());
  return (coriolis_radial(r) / r) * x;
}

CurvatureData IsotropicChart::curvature(double t, DerivativeMode mode) const {
  if (mode == DerivativeMode::finite_difference) return curvature_fd(t);
  return CurvatureData::constant_curvature(dim(), curvature_, t);
}

Vec IsotropicChart::base_point(double t) const { return detail::interpolate_grid(base_points_, curve(), t); }

// ---------------------------------------------------------------------------

ChartPtr fermi_chart(const ManifoldModel& model, const CurveSpec& curve, double tube_radius) {
  model.validate();
  if (model.constant_curvature()) return std::make_shared<IsotropicChart>(model, curve, tube_radius);
  return std::make_shared<WarpedChart>(model, curve, tube_radius);
}

CurvatureData curvature_at(const MetricChart& chart, double t, DerivativeMode mode) { return chart.curvature(t, mode); }

Vec coriolis_drift(const MetricChart& chart, double t, const Vec& x, DerivativeMode mode) {
  chart.check_domain(t, x);
  return chart.coriolis_drift(t, x, mode);
}

Vec besselization_drift(const MetricChart& chart, double t, const Vec& x) {
  chart.check_domain(t, x);
  return chart.besselization_drift(t, x);
}

Mat sigma_sqrt(const MetricChart& chart, double t, const Vec& x) {
  chart.check_domain(t, x);
  return chart.sigma(t, x);
}

}  // namespace omtube::geometry
