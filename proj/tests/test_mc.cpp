#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omtube/mc.hpp"

#include <omp.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace omtube;
using namespace omtube::geometry;
using namespace omtube::mc;
using om::DriftField;

namespace {

double theta_survival(double delta, double T) {
  double s = 0.0;
  for (int k = 0; k < 60; ++k) {
    const double m = 2.0 * k + 1.0;
    s += (k % 2 ? -1.0 : 1.0) / m * std::exp(-m * m * std::numbers::pi * std::numbers::pi * T / (8 * delta * delta));
  }
  return 4.0 / std::numbers::pi * s;
}

sde::IntegratorConfig tube(double T, double dt, double delta, std::uint64_t seed) {
  sde::IntegratorConfig c;
  c.T = T;
  c.dt = dt;
  c.delta = delta;
  c.seed = seed;
  return c;
}

EnsembleOptions options(std::size_t n, Conditioning c, Execution e, int batches = 8) {
  EnsembleOptions o;
  o.n_paths = n;
  o.conditioning = c;
  o.execution = e;
  o.batches = batches;
  return o;
}

}  // namespace

TEST_CASE("small-ball series") {
  for (double delta : {0.3, 0.7, 1.0, 2.0}) {
    CHECK(small_ball_probability(1, delta, 1.0) == doctest::Approx(theta_survival(delta, 1.0)).epsilon(1e-12));
  }
  // d = 3: zeros kπ, coefficients 2(−1)^{k+1}
  double s3 = 0.0;
  for (int k = 1; k < 200; ++k) {
    s3 += 2.0 * (k % 2 ? 1.0 : -1.0) * std::exp(-k * k * std::numbers::pi * std::numbers::pi * 0.3 / 2.0);
  }
  CHECK(small_ball_probability(3, 1.0, 0.3) == doctest::Approx(s3).epsilon(1e-12));
  // leading-term asymptotics for tiny tubes
  CHECK(log_small_ball_probability(2, 0.1, 1.0) < -280.0);
  CHECK(std::isfinite(log_small_ball_probability(2, 0.05, 1.0)));
  CHECK(std::log(small_ball_probability(2, 0.6, 1.0)) == doctest::Approx(log_small_ball_probability(2, 0.6, 1.0)));
  CHECK(small_ball_probability(2, 0.6, 1.0) < small_ball_probability(1, 0.6, 1.0));
  CHECK(automatic_conditioning(1, 1.0, 1.0) == Conditioning::rejection);
  CHECK(automatic_conditioning(2, 0.2, 1.0) == Conditioning::resampling);
}

TEST_CASE("conditioning names round-trip") {
  for (auto c : {Conditioning::rejection, Conditioning::resampling}) CHECK(conditioning_from_string(to_string(c)) == c);
  CHECK_THROWS(conditioning_from_string("splitting"));
}

TEST_CASE("ensembles: serial and parallel runs are bit-identical") {
  omp_set_num_threads(3);
  const auto bm = sde::Dynamics::brownian(2);
  auto cfg = tube(0.5, 2e-3, 0.4, 5);
  cfg.bridge_correction = true;
  for (auto c : {Conditioning::rejection, Conditioning::resampling}) {
    const auto a = estimate_tube_prob(bm, cfg, options(3000, c, Execution::serial));
    const auto b = estimate_tube_prob(bm, cfg, options(3000, c, Execution::parallel));
    CHECK(a.p_hat == b.p_hat);
    CHECK(a.se == b.se);
    CHECK(a.n_survive == b.n_survive);
    CHECK(a.batch_log_p == b.batch_log_p);
  }
}

TEST_CASE("resampling agrees with rejection and the series") {
  const auto bm = sde::Dynamics::brownian(1);
  auto cfg = tube(1.0, 1e-3, 1.0, 8);
  cfg.bridge_correction = true;
  const double exact = small_ball_probability(1, 1.0, 1.0);
  const auto rs = estimate_tube_prob(bm, cfg, options(20000, Conditioning::resampling, Execution::parallel, 20));
  CHECK(std::abs(rs.p_hat - exact) < 3.5 * rs.se);
  CHECK(rs.log_p == doctest::Approx(std::log(rs.p_hat)));

  // tiny tube: resampling resolves probabilities far below rejection's reach
  auto small = tube(1.0, 7e-5, 0.06, 3);
  small.bridge_correction = true;
  const auto tiny = estimate_tube_prob(bm, small, options(4000, Conditioning::resampling, Execution::parallel, 20));
  const double log_exact = log_small_ball_probability(1, 0.06, 1.0);
  CHECK(log_exact < -300.0);
  CHECK(std::abs(tiny.log_p - log_exact) < 3.0 * tiny.rel_se + 0.05);
}

TEST_CASE("tube estimate preconditions and warnings") {
  const auto bm = sde::Dynamics::brownian(1);
  CHECK_THROWS_AS(estimate_tube_prob(bm, tube(1.0, 1e-3, 1.0, 1), options(999, Conditioning::rejection, Execution::serial)),
                  std::invalid_argument);
  const auto e = estimate_tube_prob(bm, tube(1.0, 1e-3, 0.3, 1), options(1000, Conditioning::rejection, Execution::serial));
  CHECK(e.n_survive < 100);
  CHECK_FALSE(e.warnings.empty());
  // huge tube: everything survives
  const auto big = estimate_tube_prob(bm, tube(1.0, 1e-2, 20.0, 1), options(1000, Conditioning::rejection, Execution::serial));
  CHECK(big.p_hat == 1.0);
}

TEST_CASE("flat, f = 0, constant curve: ratio exactly 1") {
  const auto chart = fermi_chart(ManifoldModel::euclidean(2), CurveSpec::constant(2, 0.5, 16), 5.0);
  RatioConfig cfg;
  cfg.delta = 0.5;
  cfg.dt = 1e-3;
  cfg.n_paths = 2000;
  const auto r = estimate_ratio(chart, DriftField::zero(2), cfg);
  CHECK(r.shared_stream);
  CHECK(r.ratio == 1.0);
  CHECK(r.predicted == 1.0);
  CHECK(r.z_score == 0.0);
  std::ostringstream js, cs;
  write_json(js, r);
  write_csv(cs, {r});
  CHECK(js.str().find("\"ratio\"") != std::string::npos);
  const std::string csv = cs.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("legs use independent streams outside the flat constant case") {
  Vec v(1);
  v << 0.5;
  const auto chart = fermi_chart(ManifoldModel::euclidean(1), CurveSpec::line(v, 0.5, 16), 5.0);
  RatioConfig cfg;
  cfg.delta = 0.6;
  cfg.dt = 1e-3;
  cfg.n_paths = 2000;
  cfg.conditioning = Conditioning::rejection;
  const auto r = estimate_ratio(chart, DriftField::zero(1), cfg);
  CHECK_FALSE(r.shared_stream);
  CHECK(r.ratio_se > 0.0);

  // checksum and correlation of the two streams' first increments
  double cross = 0.0, sum_a = 0.0, sum_b = 0.0;
  Vec a(1), b(1);
  for (std::uint64_t p = 0; p < 20000; ++p) {
    sde::draw_increment(1, Stream::primary, p, 0, 1.0, a);
    sde::draw_increment(1, Stream::reference, p, 0, 1.0, b);
    cross += a[0] * b[0];
    sum_a += a[0];
    sum_b += b[0];
  }
  CHECK(sum_a != sum_b);
  CHECK(std::abs(cross / 20000) < 4.0 / std::sqrt(20000.0));
}

TEST_CASE("extrapolation") {
  std::vector<RatioPoint> pts;
  for (double d : {0.3, 0.2, 0.1, 0.05}) pts.push_back({d, std::exp(-0.5 + 0.3 * std::sqrt(d)), 0.01});
  const auto e = extrapolate_ratio(pts);
  CHECK(std::abs(e.limit - std::exp(-0.5)) < 1e-10);
  CHECK(e.a == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(std::abs(e.b) < 1e-8);
  CHECK(e.limit_se > 0.0);
  CHECK_FALSE(e.low_confidence);

  std::vector<RatioPoint> flat = {{0.3, 1.0, 0.0}, {0.2, 1.0, 0.0}, {0.1, 1.0, 0.0}};
  const auto f = extrapolate_ratio(flat);
  CHECK(f.limit == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(f.a) < 1e-10);

  CHECK_THROWS(extrapolate_ratio(std::vector<RatioPoint>{{0.3, 1.0, 0.1}, {0.2, 1.0, 0.1}}));

  // erratic SEs amplified by the fit
  std::vector<RatioPoint> bad = {{0.3, 0.9, 0.001}, {0.2, 0.8, 0.05}, {0.1, 0.85, 0.002}};
  CHECK(extrapolate_ratio(bad).low_confidence);
}

TEST_CASE("bootstrap SE agrees with the delta method") {
  const auto chart = fermi_chart(ManifoldModel::euclidean(1), CurveSpec::constant(1, 1.0, 16), 5.0);
  Mat a(1, 1);
  a << -1.0;
  RatioConfig cfg;
  cfg.delta = 0.6;
  cfg.dt = 5e-3;
  cfg.n_paths = 20000;
  cfg.conditioning = Conditioning::rejection;
  const auto r = estimate_ratio(chart, DriftField::linear(a), cfg);
  const double boot = bootstrap_ratio_se(r, 500, 4);
  CHECK(boot == doctest::Approx(r.ratio_se).epsilon(0.2));

  cfg.conditioning = Conditioning::resampling;
  cfg.n_paths = 8000;
  const auto rs = estimate_ratio(chart, DriftField::linear(a), cfg);
  CHECK(bootstrap_ratio_se(rs, 500, 4) == doctest::Approx(rs.ratio_se).epsilon(0.35));
}

TEST_CASE("Girsanov weight and moment experiment") {
  const double T = 0.2;
  const auto sphere = fermi_chart(ManifoldModel::sphere(2, 1.0), CurveSpec::constant(2, T, 16), 0.9);
  coupling::CouplingConfig cfg;
  cfg.T = T;
  cfg.dt = 2e-4;
  cfg.delta = 0.2;
  const auto opt = options(1000, Conditioning::resampling, Execution::parallel, 10);
  const auto e = coupling::run_coupled(sphere, DriftField::zero(2), cfg, opt);
  const auto w = estimate_girsanov_weight(e);
  CHECK(w.mean_weight == 1.0);  // α ≡ 0 and Einstein: M = L = 0
  CHECK(w.max_abs_L == 0.0);
  CHECK(w.jensen_holds);
  CHECK(1.0 / w.p_holder + 2.0 * std::sqrt(0.2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.p_holder > 1.0);
  std::ostringstream os;
  write_json(os, w);
  CHECK(os.str().find("mean_weight") != std::string::npos);

  const auto zero_c = conditional_moment_experiment(sphere, DriftField::zero(2), {0.3, 0.2}, 0.0, cfg, opt);
  for (const auto& r : zero_c.rows) CHECK(r.mean == 1.0);

  const auto flat = fermi_chart(ManifoldModel::euclidean(2), CurveSpec::constant(2, T, 16), 5.0);
  const auto euclid = conditional_moment_experiment(flat, DriftField::zero(2), {0.3, 0.2}, 1.0, cfg, opt);
  for (const auto& r : euclid.rows) CHECK(r.mean == 1.0);
  CHECK(euclid.bounded);
  CHECK(euclid.rows[1].dt == doctest::Approx(2e-4));

  const auto curved = conditional_moment_experiment(sphere, DriftField::zero(2), {0.4, 0.2}, 1.0, cfg, opt);
  for (const auto& r : curved.rows) {
    CHECK(r.mean > 1.0);
    CHECK(r.mean < 1.5);
  }
}

TEST_CASE("Girsanov weight on a rotating field satisfies Jensen") {
  const double T = 0.2;
  const auto flat = fermi_chart(ManifoldModel::euclidean(2), CurveSpec::constant(2, T, 16), 5.0);
  coupling::CouplingConfig cfg;
  cfg.T = T;
  cfg.dt = 2e-4;
  cfg.delta = 0.3;
  const auto e = coupling::run_coupled(flat, DriftField::rotational(2, 1.0, 2.0), cfg,
                                       options(1000, Conditioning::resampling, Execution::parallel, 10));
  const auto w = estimate_girsanov_weight(e);
  CHECK(w.jensen_holds);
  CHECK(w.jensen_lower <= w.mean_weight);
  CHECK(w.M.se > 0.0);
  CHECK(std::abs(w.mean_weight - 1.0) < 0.1);
}
