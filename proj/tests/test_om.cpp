#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omtube/om.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace omtube;
using namespace omtube::geometry;
using namespace omtube::om;
using omtube::testing::max_abs;
using omtube::testing::random_point;

namespace {

CurveSpec still(int d) { return CurveSpec::constant(d, 1.0, 40); }

CurveSpec straight(double vx, double vy) {
  Vec v(2);
  v << vx, vy;
  return CurveSpec::line(v, 1.0, 40);
}

WarpProfile anisotropic_profile() {
  WarpProfile p;
  p.coefficients = {0.5};
  p.axis_weights = {1.0, 0.5, -0.5};
  return p;
}

}  // namespace

TEST_CASE("Lagrangian terms") {
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), still(2), 1.0);
  const auto zero = DriftField::zero(2);
  CHECK(om_lagrangian(*flat, zero, 0.0, Vec::Zero(2)).total == 0.0);
  Vec v(2);
  v << 0.6, 0.8;
  const OmTerms moving = om_lagrangian(*flat, zero, 0.0, v);
  CHECK(moving.total == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(moving.kinetic >= 0.0);

  const auto sphere = fermi_chart(ManifoldModel::sphere(2, 1.0), still(2), 0.5);
  const OmTerms s = om_lagrangian(*sphere, zero, 0.0, Vec::Zero(2));
  CHECK(s.total == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(s.total == s.kinetic + s.divergence + s.curvature);

  const auto lin = DriftField::linear(Mat::Constant(2, 2, 0.3));
  const OmTerms l = om_lagrangian(*sphere, lin, 0.0, v);
  CHECK(l.total == l.kinetic + l.divergence + l.curvature);
  CHECK(l.divergence == doctest::Approx(0.3));
}

TEST_CASE("action along curves") {
  const auto zero = DriftField::zero(2);
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), still(2), 1.0);
  CHECK(om_action(*flat, zero, still(2)).value == 0.0);

  const auto line = straight(1.0, 0.0);
  const auto flat_line = fermi_chart(ManifoldModel::euclidean(2), line, 1.0);
  const ActionResult a = om_action(*flat_line, zero, line);
  CHECK(a.value == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(a.error_estimate < 1e-14);

  // Euclidean(1), f = -x: L = ½ div f = -½
  Mat m(1, 1);
  m << -1.0;
  const auto ou = DriftField::linear(m);
  CHECK(ou.divergence_fd(0.0, Vec::Zero(1), 1e-4) == doctest::Approx(-1.0).epsilon(1e-12));
  const auto flat1 = fermi_chart(ManifoldModel::euclidean(1), still(1), 1.0);
  CHECK(om_action(*flat1, ou, still(1)).value == doctest::Approx(-0.5).epsilon(1e-14));

  // curvature term
  const auto hyp = fermi_chart(ManifoldModel::hyperbolic(2, 1.0), still(2), 0.5);
  const ActionResult h = om_action(*hyp, zero, still(2));
  CHECK(h.value == doctest::Approx(-1.0 / 6.0).epsilon(1e-14));
  CHECK(h.integrated.curvature == doctest::Approx(-1.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("Simpson error estimate on a time-dependent field") {
  const Mat a0 = Mat::Zero(2, 2);
  Vec b0(2), b1(2), b2(2);
  b0 << 0.0, 0.0;
  b1 << 1.0, 0.0;
  b2 << 0.0, 0.0;
  const auto field = DriftField::table({0.0, 0.5, 1.0}, {a0, a0, a0}, {b0, b1, b2});
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), still(2), 1.0);
  // f1 is a tent of height 1; ½∫ f1² dt = ½ · 2 · ∫₀^½ (2t)² dt = 1/6
  const ActionResult r = om_action(*flat, field, still(2));
  CHECK(r.value == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(r.error_estimate < 1e-12);
}

TEST_CASE("drift field divergences") {
  Mat a(3, 3);
  a << 0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.7, -0.8, -0.9;
  const auto lin = DriftField::linear(a);
  const auto rot = DriftField::rotational(3, 1.3, 0.7);
  const auto grad = rot.plus_gradient(a, Vec::Ones(3));
  const auto radial = DriftField::rotational(3, 1.3, 0.7, -2.0);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Vec x = random_point(3, 0.5, k);
    for (const auto* f : {&lin, &rot, &grad, &radial}) {
      CHECK(f->divergence_fd(0.0, x, 1e-3) == doctest::Approx(f->divergence(0.0, x)).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(DriftField::rotational(1, 1.0), ConstructionError);
  CHECK(DriftField::linear(Mat::Zero(2, 2)).is_zero());
}

TEST_CASE("beta") {
  const auto flat = fermi_chart(ManifoldModel::euclidean(3), still(3), 1.0);
  const auto sphere = fermi_chart(ManifoldModel::sphere(2, 1.0), still(2), 0.5);
  for (std::uint64_t k = 0; k < 20; ++k) {
    CHECK(om::beta(curvature_at(*flat, 0.0), omtube::testing::random_unit(3, k)) == 0.0);
    CHECK(std::abs(om::beta(curvature_at(*sphere, 0.0), omtube::testing::random_unit(2, k))) < 1e-15);
  }
  GirsanovForms forms(sphere, DriftField::zero(2), still(2));
  CHECK(forms.beta_vanishes());
  CHECK(forms.beta(0.3, omtube::testing::random_unit(2, 3)) == 0.0);

  Vec bad(2);
  bad << 1.0, 1e-5;
  CHECK_THROWS_AS(om::beta(curvature_at(*sphere, 0.0), bad), std::domain_error);

  // anisotropic Ricci: eigenvalues (-2, -1.5, -0.5) at the base point
  const auto warped = fermi_chart(ManifoldModel::warped_diagonal(3, anisotropic_profile()), still(3), 0.4);
  const CurvatureData c = curvature_at(*warped, 0.0);
  Vec e1 = Vec::Zero(3);
  e1[0] = 1.0;
  const double expect = 3.0 / 12.0 * (-2.0 - (-2.0 - 1.5 - 0.5) / 3.0);
  CHECK(om::beta(c, e1) == doctest::Approx(expect).epsilon(1e-6));
  GirsanovForms wf(warped, DriftField::zero(3), still(3));
  CHECK(!wf.beta_vanishes());
  CHECK(wf.beta(0.0, e1) == doctest::Approx(expect).epsilon(1e-6));

  // uniform sphere average is zero
  const int n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double b = om::beta(c, omtube::testing::random_unit(3, static_cast<std::uint64_t>(k), 17));
    sum += b;
    sum2 += b * b;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("alpha form") {
  const auto zero2 = DriftField::zero(2);
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), still(2), 1.0);
  CHECK(max_abs(alpha_form(*flat, zero2, still(2), 0.2, random_point(2, 0.9, 1))) == 0.0);

  const auto line = straight(0.3, -0.4);
  const auto flat_line = fermi_chart(ManifoldModel::euclidean(2), line, 1.0);
  const Vec a = alpha_form(*flat_line, zero2, line, 0.2, random_point(2, 0.9, 2));
  CHECK(a[0] == -0.3);
  CHECK(a[1] == 0.4);

  const auto sphere = fermi_chart(ManifoldModel::sphere(2, 1.0), still(2), 0.5);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Vec x = random_point(2, 0.45, k);
    const Vec drift = geometry::coriolis_drift(*sphere, 0.0, x, DerivativeMode::finite_difference) -
                      geometry::besselization_drift(*sphere, 0.0, x);
    const Vec expect = sphere->metric(0.0, x) * drift;
    CHECK(max_abs(Vec(alpha_form(*sphere, zero2, still(2), 0.0, x) - expect)) < 1e-10);
  }
}

TEST_CASE("alpha kernel") {
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), still(2), 1.0);
  const auto rot = DriftField::rotational(2, 1.0);
  for (std::uint64_t k = 0; k < 10; ++k) {
    const Vec x = random_point(2, 0.9, k);
    const Mat m = alpha_kernel(*flat, rot, still(2), 0.0, x);
    CHECK(m(0, 1) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(m(0, 1) + m(1, 0) == 0.0);
    CHECK(m(0, 0) == 0.0);
  }

  // nonlinear rotation: curl = 2ω(1 + 2k|x|²), kernel = ½ω(1 + k|x|²)
  const double omega = 0.8, kk = 2.0;
  const auto twist = DriftField::rotational(2, omega, kk);
  GirsanovForms forms(flat, twist, still(2));
  for (std::uint64_t k = 0; k < 10; ++k) {
    const Vec x = random_point(2, 0.9, k);
    const double expect = 0.5 * omega * (1.0 + kk * x.squaredNorm());
    CHECK(alpha_kernel(*flat, twist, still(2), 0.0, x)(0, 1) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(forms.kernel(0.0, x)(0, 1) == doctest::Approx(expect).epsilon(1e-10));
  }

  const auto line = straight(1.0, 0.0);
  const auto flat_line = fermi_chart(ManifoldModel::euclidean(2), line, 1.0);
  CHECK(max_abs(alpha_kernel(*flat_line, DriftField::zero(2), line, 0.3, random_point(2, 0.9, 3))) < 1e-12);

  // quadrature convergence and gauge invariance
  const auto sphere_line = fermi_chart(ManifoldModel::sphere(3, 1.0), CurveSpec::line(Vec::Ones(3) * 0.3, 1.0, 40), 0.5);
  const auto rot3 = DriftField::rotational(3, 0.7, 1.5);
  const CurveSpec& c3 = sphere_line->curve();
  Mat s(3, 3);
  s << 1.0, 0.2, 0.0, 0.2, -0.5, 0.3, 0.0, 0.3, 0.4;
  Vec c(3);
  c << 0.1, -0.2, 0.3;
  const auto gauged = rot3.plus_gradient(s, c);
  for (std::uint64_t k = 0; k < 5; ++k) {
    const Vec x = random_point(3, 0.45, k);
    const Mat k8 = alpha_kernel(*sphere_line, rot3, c3, 0.2, x, 8);
    const Mat k16 = alpha_kernel(*sphere_line, rot3, c3, 0.2, x, 16);
    CHECK(max_abs(Mat(k8 - k16)) < 1e-10);
    CHECK(max_abs(Mat(k8 + k8.transpose())) == 0.0);
    const auto fl = fermi_chart(ManifoldModel::euclidean(3), c3, 0.5);
    const Mat plain = alpha_kernel(*fl, rot3, c3, 0.2, x);
    const Mat gauge = alpha_kernel(*fl, gauged, c3, 0.2, x);
    CHECK(max_abs(Mat(plain - gauge)) < 1e-9);
    // the reduced evaluation drops only curl-free radial parts
    GirsanovForms sf(sphere_line, rot3, c3);
    CHECK(max_abs(Mat(sf.kernel(0.2, x) - k8)) < 1e-8);
  }

  // radial-only α on a constant sphere chart
  const auto sphere = fermi_chart(ManifoldModel::sphere(2, 1.0), still(2), 0.5);
  GirsanovForms zero_forms(sphere, DriftField::zero(2), still(2));
  CHECK(zero_forms.kernel_vanishes());
  CHECK(max_abs(alpha_kernel(*sphere, DriftField::zero(2), still(2), 0.0, random_point(2, 0.45, 4))) < 1e-9);
}

TEST_CASE("Gauss-Legendre rules") {
  for (int n : {1, 2, 8, 16}) {
    const GaussRule& r = gauss_legendre(n);
    for (int p = 0; p < 2 * n; ++p) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      CHECK(s == doctest::Approx(1.0 / (p + 1)).epsilon(1e-14));
    }
  }
}
