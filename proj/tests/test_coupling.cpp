#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omtube/coupling.hpp"
#include "omtube/stats.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace omtube;
using namespace omtube::coupling;
using namespace omtube::geometry;
using om::DriftField;
using omtube::testing::random_unit;

namespace {

mc::EnsembleOptions resampled(std::size_t n, int batches = 10) {
  mc::EnsembleOptions o;
  o.n_paths = n;
  o.conditioning = mc::Conditioning::resampling;
  o.batches = batches;
  return o;
}

// RMS Stokes residual over `paths` paths of X, each simulated on a grid of
// `steps` steps from the same fine Brownian increments.
double stokes_rms(const om::GirsanovForms& forms, const sde::Dynamics& dyn, double T, int fine, int steps, int paths) {
  const int ratio = fine / steps;
  const double h = T / steps;
  double s2 = 0.0;
  for (int p = 0; p < paths; ++p) {
    std::vector<double> times = {0.0};
    std::vector<Vec> states = {Vec::Zero(2)};
    Vec x = Vec::Zero(2), dB(2), fine_dB(2);
    for (int k = 0; k < steps; ++k) {
      dB.setZero();
      for (int j = 0; j < ratio; ++j) {
        sde::draw_increment(12, Stream::test, p, k * ratio + j, std::sqrt(T / fine), fine_dB);
        dB += fine_dB;
      }
      dyn.step(k * h, x, dB, h);
      times.push_back((k + 1) * h);
      states.push_back(x);
    }
    const double r = stokes_consistency(times, states, forms).residual();
    s2 += r * r;
  }
  return std::sqrt(s2 / paths);
}

}  // namespace

TEST_CASE("J maps: isometry, orthonormality, contraction for d = 1..6") {
  for (int d = 1; d <= 6; ++d) {
    const auto c = check_jmaps(d, 1000, 3);
    CHECK(c.max() < 1e-12);
    const auto J = build_J(d);
    CHECK(J.n == noise_dim(d));
    CHECK(static_cast<int>(J.J.size()) == d);
  }
  CHECK(noise_dim(1) == 1);
  CHECK(noise_dim(3) == 4);
  CHECK(noise_dim(6) == 16);
}

TEST_CASE("J maps for d = 2 and the sparse product") {
  const auto J = build_J(2);
  Vec u(2);
  u << 0.6, -0.8;
  const Eigen::MatrixXd cols = J.columns(u);
  // J¹u = (u¹, u²), J²u = (u², −u¹)
  CHECK(cols(0, 0) == 0.6);
  CHECK(cols(1, 0) == -0.8);
  CHECK(cols(0, 1) == -0.8);
  CHECK(cols(1, 1) == -0.6);
  CHECK(J.pair_index(0, 1) == 1);
  CHECK((J.contracted(u) - Eigen::Vector2d(1.0, 0.0)).norm() < 1e-15);

  for (int d = 2; d <= 5; ++d) {
    const auto Jd = build_J(d);
    const Vec v = random_unit(d, d);
    NoiseVec dW(Jd.n);
    for (int i = 0; i < Jd.n; ++i) dW[i] = std::sin(1.0 + i);
    const Vec dense = Jd.columns(v).transpose() * dW;
    CHECK((apply_J(v, dW) - dense).norm() < 1e-14);
    CHECK(v.dot(apply_J(v, dW)) == doctest::Approx(dW[0]).epsilon(1e-14));
  }
}

TEST_CASE("omega identities") {
  for (int k = 0; k < 20; ++k) {
    const Vec U = random_unit(3, 2 * k), Ut = random_unit(3, 2 * k + 1);
    const Mat w = omega_matrix(U, Ut);
    CHECK((w * Ut - U).norm() < 1e-14);
    const Mat sym = w.transpose() + w - 2.0 * U.dot(Ut) * Mat::Identity(3, 3);
    CHECK(testing::max_abs(sym) < 1e-14);
  }
}

TEST_CASE("Levy area of a circle is 2 pi r^2") {
  const double r = 0.7;
  Mat A = Mat::Zero(2, 2);
  Vec prev(2), next(2);
  prev << r, 0.0;
  const int n = 2000;
  for (int k = 1; k <= n; ++k) {
    const double th = 2.0 * std::numbers::pi * k / n;
    next << r * std::cos(th), r * std::sin(th);
    levy_area_update(A, prev, next);
    prev = next;
  }
  CHECK(A(0, 1) == doctest::Approx(2.0 * std::numbers::pi * r * r).epsilon(0.01));
  CHECK(A(1, 0) == doctest::Approx(-A(0, 1)));
}

TEST_CASE("M_p and the inner-product step") {
  CHECK(martingale_Mp(2.0, 3.0, 0.5) == doctest::Approx(0.625));
  CHECK(martingale_Mp(2.0, 3.0, 1.0) == doctest::Approx(0.5));
  CHECK(inner_product_sde_step(1.0, 0.1, 0.0, 0.0, 0.3, 0.01) == 1.0);
  CHECK(inner_product_sde_step(0.5, 0.1, 2.0, 4.0, 0.3, 0.01) == doctest::Approx(0.5 + 0.06 - 0.5 * 0.04 * 0.5 * 0.01));
  CHECK(tol_radial(1e-4, 0.2) == doctest::Approx(0.1));
}

TEST_CASE("H and G") {
  const Mat zero = Mat::Zero(2, 2);
  Vec U(2), Ut(2);
  U << 1, 0;
  Ut << 0, 1;
  CHECK(H_of(zero, 0.1, U, Ut) == 0.0);
  CHECK(G_of(zero, 0.1) == 0.0);
  // curvature: H² ≤ G at random chart points
  const auto chart = fermi_chart(ManifoldModel::sphere(3, 1.0), CurveSpec::constant(3, 1.0, 16), 0.9);
  for (int k = 0; k < 200; ++k) {
    const Vec u = random_unit(3, 3 * k), ut = random_unit(3, 3 * k + 1);
    const double R = 0.05 + 0.8 * (k % 17) / 17.0;
    const double H = H_of(*chart, 0.0, R, u, ut);
    const double G = G_of(*chart, 0.0, R, u);
    CHECK(H * H <= G * (1.0 + 1e-12));
    CHECK(G > 0.0);
  }
}

TEST_CASE("Euclidean coupling is exact") {
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), CurveSpec::constant(2, 0.1, 16), 5.0);
  CouplingConfig cfg;
  cfg.T = 0.1;
  cfg.dt = 1e-3;
  cfg.delta = 0.5;
  const auto e = run_coupled(flat, DriftField::zero(2), cfg, resampled(1000));
  CHECK(e.diagnostics.G_max == 0.0);
  CHECK(e.diagnostics.gap_max == 0.0);
  CHECK(e.result.conditional_mean(obs_sup_dev).mean == 0.0);
  CHECK(e.result.conditional_mean(obs_M).mean == 0.0);
}

TEST_CASE("sphere coupling: gap, H^2 <= G, identities, nu bound") {
  const double T = 0.2;
  const auto chart = fermi_chart(ManifoldModel::sphere(2, 1.0), CurveSpec::constant(2, T, 16), 0.9);
  CouplingConfig cfg;
  cfg.T = T;
  cfg.dt = 1e-4;
  cfg.delta = 0.2;
  cfg.strict = true;
  const auto e = run_coupled(chart, DriftField::zero(2), cfg, resampled(1000));
  const auto& d = e.diagnostics;
  CHECK(d.gap_max <= tol_radial(e.dt, cfg.delta));
  CHECK(d.gap_max > 0.0);
  CHECK(d.gap_violations == 0);
  CHECK(d.H2_le_G_violations == 0);
  CHECK(d.evaluated_states > 0);
  CHECK(d.radial_identity_max < 1e-12);
  CHECK(d.dW0_identity_max < 1e-12);
  CHECK(d.nu_bound_excess <= 1e-12);
  const auto dev = e.result.conditional_mean(obs_sup_dev);
  CHECK(dev.mean > 0.0);
  CHECK(dev.mean < 0.1);
  // orthogonality of Lévy area and radius
  const auto cov = e.result.conditional_mean(obs_covariation);
  CHECK(std::abs(cov.mean) < 4.0 * cov.se + 1e-12);
  // inner-product SDE tracks the simulated ⟨U, Ũ⟩
  const auto uu = e.result.conditional_mean([](auto r) { return r[obs_uu] - r[obs_uu_pred]; });
  CHECK(std::abs(uu.mean) < 2e-4);

  const auto tail = delta_tail_estimate(e, {0.01, 0.02, 0.05, 0.1});
  REQUIRE(tail.p.size() == 4);
  for (std::size_t i = 1; i < tail.p.size(); ++i) CHECK(tail.p[i] <= tail.p[i - 1]);
  std::ostringstream os;
  write_diagnostic_csv_header(os);
  write_diagnostic_csv_row(os, e);
  const std::string csv = os.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("serial and parallel coupled runs agree bit for bit") {
  const auto chart = fermi_chart(ManifoldModel::sphere(2, 1.0), CurveSpec::constant(2, 0.05, 16), 0.9);
  CouplingConfig cfg;
  cfg.T = 0.05;
  cfg.dt = 2e-4;
  cfg.delta = 0.2;
  auto opt = resampled(400, 4);
  opt.execution = Execution::serial;
  const auto a = run_coupled(chart, DriftField::zero(2), cfg, opt);
  opt.execution = Execution::parallel;
  const auto b = run_coupled(chart, DriftField::zero(2), cfg, opt);
  CHECK(a.result.rows == b.result.rows);
  CHECK(a.result.p_hat == b.result.p_hat);
  CHECK(a.diagnostics.gap_max == b.diagnostics.gap_max);
}

TEST_CASE("Stokes: rotations close exactly, a radial term converges at first order") {
  const double T = 0.5;
  const auto curve = CurveSpec::constant(2, T, 16);
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), curve, 5.0);

  const om::GirsanovForms rigid(flat, DriftField::rotational(2, 1.0), curve);
  const sde::Dynamics rigid_dyn(sde::Process::X, flat, DriftField::rotational(2, 1.0), curve);
  CHECK(stokes_rms(rigid, rigid_dyn, T, 256, 256, 5) < 1e-12);
  // α·x ≡ 0 for any rotation, so only rounding remains
  const om::GirsanovForms twist(flat, DriftField::rotational(2, 1.0, 3.0), curve);
  const sde::Dynamics twist_dyn(sde::Process::X, flat, DriftField::rotational(2, 1.0, 3.0), curve);
  CHECK(stokes_rms(twist, twist_dyn, T, 256, 256, 5) < 1e-10);

  const auto field = DriftField::rotational(2, 1.0, 3.0, -2.0);
  const om::GirsanovForms forms(flat, field, curve);
  const sde::Dynamics dyn(sde::Process::X, flat, field, curve);
  std::vector<double> lx, ly;
  for (int steps : {128, 256, 512, 1024}) {
    lx.push_back(std::log(T / steps));
    ly.push_back(std::log(stokes_rms(forms, dyn, T, 1024, steps, 40)));
    MESSAGE("steps " << steps << " rms " << std::exp(ly.back()));
  }
  const auto fit = stats::fit_line(lx, ly);
  MESSAGE("Stokes residual slope " << fit.slope);
  CHECK(std::abs(fit.slope - 1.0) < 0.3);
}
