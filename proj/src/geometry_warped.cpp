#include "geometry_detail.hpp"

#include <cmath>
#include <sstream>

namespace omtube::geometry {

namespace {

constexpr int kIdx3 = kMaxDim * kMaxDim * kMaxDim;

/// ∂_m Γ^k_ij stored [m][k][i][j].
struct ChristoffelDerivative {
  std::array<double, kIdx3 * kMaxDim> v{};
  double& operator()(int m, int k, int i, int j) { return v[((m * kMaxDim + k) * kMaxDim + i) * kMaxDim + j]; }
  double operator()(int m, int k, int i, int j) const { return v[((m * kMaxDim + k) * kMaxDim + i) * kMaxDim + j]; }
};

/// Log-warp λ_i = w_i h(|y|^2) and its first two derivatives.
struct WarpJet {
  int d = 0;
  double lambda[kMaxDim]{};
  double d1[kMaxDim][kMaxDim]{};            // [i][m] = ∂_m λ_i
  double d2[kMaxDim][kMaxDim][kMaxDim]{};   // [i][m][n] = ∂_m ∂_n λ_i
};

WarpJet warp_jet(const ManifoldModel& model, const Vec& y) {
  WarpJet j;
  j.d = model.dim;
  const double s = y.squaredNorm();
  const double h = model.profile.h(s), h1 = model.profile.dh(s), h2 = model.profile.d2h(s);
  for (int i = 0; i < j.d; ++i) {
    const double w = model.profile.axis_weights[i];
    j.lambda[i] = w * h;
    for (int m = 0; m < j.d; ++m) {
      j.d1[i][m] = 2.0 * w * h1 * y[m];
      for (int n = 0; n < j.d; ++n) j.d2[i][m][n] = w * (4.0 * h2 * y[m] * y[n] + (m == n ? 2.0 * h1 : 0.0));
    }
  }
  return j;
}

Christoffel warped_christoffel(const WarpJet& j) {
  Christoffel c;
  c.dim = j.d;
  for (int k = 0; k < j.d; ++k)
    for (int i = 0; i < j.d; ++i)
      for (int l = 0; l < j.d; ++l) {
        double v = 0.0;
        if (k == l) v += j.d1[k][i];
        if (k == i) v += j.d1[k][l];
        if (i == l) v -= std::exp(2.0 * (j.lambda[i] - j.lambda[k])) * j.d1[i][k];
        c(k, i, l) = v;
      }
  return c;
}

ChristoffelDerivative warped_christoffel_derivative(const WarpJet& j) {
  ChristoffelDerivative dc;
  const int d = j.d;
  for (int m = 0; m < d; ++m)
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < d; ++i)
        for (int l = 0; l < d; ++l) {
          double v = 0.0;
          if (l == k) v += j.d2[k][m][i];
          if (i == k) v += j.d2[k][m][l];
          if (i == l) {
            const double e = std::exp(2.0 * (j.lambda[i] - j.lambda[k]));
            v -= e * (2.0 * (j.d1[i][m] - j.d1[k][m]) * j.d1[i][k] + j.d2[i][m][k]);
          }
          dc(m, k, i, l) = v;
        }
  return dc;
}

Mat isotropic_global_metric(const ManifoldModel& model, const Vec& y) {
  const int d = model.dim;
  Mat g = Mat::Identity(d, d);
  const double r = y.norm();
  if (r >= model.coordinate_domain_radius()) {
    throw ChartDomainError("point outside the coordinate domain of " + model.describe());
  }
  const double K = model.sectional_curvature();
  if (r == 0.0 || K == 0.0) return g;
  const double k = std::sqrt(std::abs(K));
  const double sn = K > 0 ? std::sin(k * r) / k : std::sinh(k * r) / k;
  const double q = sn / r;
  const Vec u = y / r;
  g += (q * q - 1.0) * (Mat::Identity(d, d) - u * u.transpose());
  return g;
}

Christoffel fd_christoffel(const ManifoldModel& model, const Vec& y) {
  const int d = model.dim;
  const double h = 1e-4;
  std::vector<Mat> dg(d, Mat::Zero(d, d));  // dg[m] = ∂_m g
  const double w[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
  for (int m = 0; m < d; ++m) {
    for (int p = 0; p < 5; ++p) {
      if (w[p] == 0.0) continue;
      Vec z = y;
      z[m] += (p - 2) * h;
      dg[m] += w[p] * global_metric(model, z);
    }
    dg[m] /= 12.0 * h;
  }
  const Mat ginv = global_metric(model, y).inverse();
  Christoffel c;
  c.dim = d;
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double v = 0.0;
        for (int l = 0; l < d; ++l) v += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        c(k, i, j) = 0.5 * v;
      }
  return c;
}

Vec contract(const Christoffel& c, const Vec& a, const Vec& b) {
  const int d = c.dim;
  Vec out = Vec::Zero(d);
  for (int k = 0; k < d; ++k) {
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) s += c(k, i, j) * a[i] * b[j];
    out[k] = s;
  }
  return out;
}

/// Gram–Schmidt in the inner product G.
Mat orthonormalize(const Mat& e, const Mat& G) {
  Mat q = e;
  for (int a = 0; a < q.cols(); ++a) {
    for (int b = 0; b < a; ++b) q.col(a) -= (q.col(b).dot(G * q.col(a))) * q.col(b);
    const double n = std::sqrt(q.col(a).dot(G * q.col(a)));
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("degenerate parallel frame");
    q.col(a) /= n;
  }
  return q;
}

}  // namespace

Mat global_metric(const ManifoldModel& model, const Vec& y) {
  if (model.kind != ModelKind::warped_diagonal) return isotropic_global_metric(model, y);
  const int d = model.dim;
  const double h = model.profile.h(y.squaredNorm());
  Mat g = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i) g(i, i) = std::exp(2.0 * model.profile.axis_weights[i] * h);
  return g;
}

Christoffel global_christoffel(const ManifoldModel& model, const Vec& y) {
  if (model.kind == ModelKind::warped_diagonal) return warped_christoffel(warp_jet(model, y));
  return fd_christoffel(model, y);
}

CurvatureData warped_riemann(const ManifoldModel& model, const Vec& y) {
  if (model.kind != ModelKind::warped_diagonal) throw ConstructionError("warped_riemann needs a warped model");
  const int d = model.dim;
  const WarpJet jet = warp_jet(model, y);
  const Christoffel G = warped_christoffel(jet);
  const ChristoffelDerivative dG = warped_christoffel_derivative(jet);
  CurvatureData c;
  c.dim = d;
  c.riemann.assign(static_cast<std::size_t>(d * d * d * d), 0.0);
  for (int a = 0; a < d; ++a) {
    const double gaa = std::exp(2.0 * jet.lambda[a]);
    for (int b = 0; b < d; ++b)
      for (int cc = 0; cc < d; ++cc)
        for (int e = 0; e < d; ++e) {
          double v = dG(cc, a, e, b) - dG(e, a, cc, b);
          for (int f = 0; f < d; ++f) v += G(a, cc, f) * G(f, e, b) - G(a, e, f) * G(f, cc, b);
          c.R(a, b, cc, e) = gaa * v;
        }
  }
  c.ricci = Mat::Zero(d, d);
  for (int b = 0; b < d; ++b)
    for (int e = 0; e < d; ++e) {
      double s = 0.0;
      for (int a = 0; a < d; ++a) s += std::exp(-2.0 * jet.lambda[a]) * c.R(a, b, a, e);
      c.ricci(b, e) = s;
    }
  c.scalar = 0.0;
  for (int b = 0; b < d; ++b) c.scalar += std::exp(-2.0 * jet.lambda[b]) * c.ricci(b, b);
  return c;
}

namespace detail {

Development develop_curve(const ManifoldModel& model, const CurveSpec& curve) {
  const int d = model.dim;
  Development dev;
  dev.points.reserve(curve.steps() + 1);
  dev.frames.reserve(curve.steps() + 1);
  Vec y = Vec::Zero(d);
  Mat e = Mat::Identity(d, d);
  dev.points.push_back(y);
  dev.frames.push_back(e);
  if (curve.is_constant()) {
    dev.points.assign(curve.steps() + 1, y);
    dev.frames.assign(curve.steps() + 1, e);
    return dev;
  }
  struct State {
    Vec y;
    Mat e;
  };
  auto rhs = [&](double t, const State& s) {
    const Christoffel c = global_christoffel(model, s.y);
    State ds{s.e * curve.velocity(t), Mat::Zero(d, d)};
    for (int a = 0; a < d; ++a) ds.e.col(a) = -contract(c, ds.y, Vec(s.e.col(a)));
    return ds;
  };
  const int sub = 4;
  const double h = curve.grid_dt() / sub;
  const double limit = model.coordinate_domain_radius();
  for (int k = 0; k < curve.steps(); ++k) try {
    for (int q = 0; q < sub; ++q) {
      const double t = curve.grid_time(k) + q * h;
      const State s0{y, e};
      const State k1 = rhs(t, s0);
      const State k2 = rhs(t + 0.5 * h, {Vec(y + 0.5 * h * k1.y), Mat(e + 0.5 * h * k1.e)});
      const State k3 = rhs(t + 0.5 * h, {Vec(y + 0.5 * h * k2.y), Mat(e + 0.5 * h * k2.e)});
      const State k4 = rhs(t + h, {Vec(y + h * k3.y), Mat(e + h * k3.e)});
      y += h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
      e += h / 6.0 * (k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e);
      if (!y.allFinite() || !e.allFinite() || y.norm() >= limit) {
        std::ostringstream os;
        os << "curve leaves the coordinate domain of " << model.describe() << " near t=" << t;
        throw ConstructionError(os.str());
      }
    }
    dev.points.push_back(y);
    dev.frames.push_back(orthonormalize(e, global_metric(model, y)));
  } catch (const ChartDomainError&) {
    std::ostringstream os;
    os << "curve leaves the coordinate domain of " << model.describe() << " near t=" << curve.grid_time(k);
    throw ConstructionError(os.str());
  }
  return dev;
}

}  // namespace detail

// ---------------------------------------------------------------------------

WarpedChart::WarpedChart(ManifoldModel model, CurveSpec curve, double tube_radius, int shooting_steps)
    : MetricChart(std::move(model), std::move(curve), tube_radius), shooting_steps_(shooting_steps) {
  if (this->model().kind != ModelKind::warped_diagonal) throw ConstructionError("WarpedChart needs a warped model");
  if (shooting_steps_ < 1) throw ConstructionError("shooting_steps must be positive");
  auto dev = detail::develop_curve(this->model(), this->curve());
  points_ = std::move(dev.points);
  frames_ = std::move(dev.frames);
}

Vec WarpedChart::base_point(double t) const {
  if (curve().is_constant()) return points_.front();
  return detail::interpolate_grid(points_, curve(), t);
}

Mat WarpedChart::frame(double t) const {
  if (curve().is_constant()) return frames_.front();
  const Mat e = detail::interpolate_grid(frames_, curve(), t);
  return orthonormalize(e, global_metric(model(), base_point(t)));
}

CurvatureData WarpedChart::frame_curvature(double t) const {
  const int d = dim();
  const Mat e = frame(t);
  const CurvatureData g = warped_riemann(model(), base_point(t));
  CurvatureData c;
  c.dim = d;
  c.t = t;
  c.riemann.assign(g.riemann.size(), 0.0);
  // contract one index at a time: R_abcd E^a_p E^b_q E^c_r E^d_s
  std::vector<double> tmp = g.riemann;
  const int strides[4] = {d * d * d, d * d, d, 1};
  for (int slot = 0; slot < 4; ++slot) {
    std::vector<double> out(tmp.size(), 0.0);
    for (std::size_t idx = 0; idx < tmp.size(); ++idx) {
      const int i = static_cast<int>(idx / strides[slot]) % d;
      const std::size_t base = idx - static_cast<std::size_t>(i) * strides[slot];
      for (int p = 0; p < d; ++p) out[base + static_cast<std::size_t>(p) * strides[slot]] += tmp[idx] * e(i, p);
    }
    tmp.swap(out);
  }
  c.riemann = std::move(tmp);
  c.contract();
  return c;
}

Mat WarpedChart::metric(double t, const Vec& x) const {
  const int d = dim();
  if (x.squaredNorm() == 0.0) return Mat::Identity(d, d);
  const Mat e = frame(t);
  // geodesic y(s) = exp(s E x) with Jacobi fields for each frame direction
  struct State {
    Vec y, v;
    Mat Y, V;
  };
  auto rhs = [&](const State& s) {
    const WarpJet jet = warp_jet(model(), s.y);
    const Christoffel c = warped_christoffel(jet);
    const ChristoffelDerivative dc = warped_christoffel_derivative(jet);
    State ds{s.v, -contract(c, s.v, s.v), s.V, Mat::Zero(d, d)};
    for (int a = 0; a < d; ++a) {
      Vec acc = -2.0 * contract(c, s.v, Vec(s.V.col(a)));
      for (int k = 0; k < d; ++k) {
        double t2 = 0.0;
        for (int m = 0; m < d; ++m) {
          if (s.Y(m, a) == 0.0) continue;
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) t2 += dc(m, k, i, j) * s.Y(m, a) * s.v[i] * s.v[j];
        }
        acc[k] -= t2;
      }
      ds.V.col(a) = acc;
    }
    return ds;
  };
  auto axpy = [](const State& s, double h, const State& k) {
    return State{s.y + h * k.y, s.v + h * k.v, s.Y + h * k.Y, s.V + h * k.V};
  };
  State s{base_point(t), e * x, Mat::Zero(d, d), e};
  const double h = 1.0 / shooting_steps_;
  for (int n = 0; n < shooting_steps_; ++n) {
    const State k1 = rhs(s);
    const State k2 = rhs(axpy(s, 0.5 * h, k1));
    const State k3 = rhs(axpy(s, 0.5 * h, k2));
    const State k4 = rhs(axpy(s, h, k3));
    s.y += h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
    s.v += h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
    s.Y += h / 6.0 * (k1.Y + 2.0 * k2.Y + 2.0 * k3.Y + k4.Y);
    s.V += h / 6.0 * (k1.V + 2.0 * k2.V + 2.0 * k3.V + k4.V);
  }
  if (!s.Y.allFinite()) throw NumericError("geodesic shooting diverged");
  Mat g = s.Y.transpose() * global_metric(model(), s.y) * s.Y;
  return 0.5 * (g + g.transpose());
}

}  // namespace omtube::geometry
