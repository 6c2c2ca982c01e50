#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omtube/mc.hpp"
#include "omtube/sde.hpp"
#include "omtube/stats.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

using namespace omtube;
using namespace omtube::geometry;
using namespace omtube::sde;
using om::DriftField;

namespace {

// P[max_{t≤T} |B| < δ], d = 1: (4/π) Σ (−1)^k/(2k+1) exp(−(2k+1)²π²T/(8δ²))
double theta_survival(double delta, double T) {
  double s = 0.0;
  for (int k = 0; k < 60; ++k) {
    const double m = 2.0 * k + 1.0;
    s += (k % 2 ? -1.0 : 1.0) / m * std::exp(-m * m * std::numbers::pi * std::numbers::pi * T / (8 * delta * delta));
  }
  return 4.0 / std::numbers::pi * s;
}

IntegratorConfig config(double T, double dt, std::uint64_t path, std::uint64_t seed = 1) {
  IntegratorConfig c;
  c.T = T;
  c.dt = dt;
  c.path_index = path;
  c.seed = seed;
  return c;
}

mc::EnsembleOptions rejection(std::size_t n) {
  mc::EnsembleOptions o;
  o.n_paths = n;
  o.conditioning = mc::Conditioning::rejection;
  return o;
}

}  // namespace

TEST_CASE("effective step and validation") {
  IntegratorConfig c = config(1.0, 0.3, 0);
  CHECK(c.steps() == 4);
  CHECK(c.step() == 0.25);
  c.dt = 0.1;
  CHECK(c.steps() == 10);
  c.delta = 0.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // dt > δ²/50
  c.allow_coarse_dt = true;
  CHECK(c.validate().size() == 1);
  c.T = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  IntegratorConfig t = config(1.0, 1e-4, 0);
  t.delta = 0.6;
  const auto chart = fermi_chart(ManifoldModel::sphere(2, 1.0), CurveSpec::constant(2, 1.0, 16), 0.5);
  CHECK_THROWS(t.validate(chart.get()));  // δ beyond the chart's tube
}

TEST_CASE("scheme names round-trip") {
  for (auto s : {Scheme::euler_maruyama, Scheme::milstein_diagonal}) CHECK(scheme_from_string(to_string(s)) == s);
  CHECK_THROWS(scheme_from_string("rk4"));
}

TEST_CASE("Brownian motion: mean and covariance at T") {
  std::vector<double> x, y, xx;
  for (std::uint64_t p = 0; p < 4000; ++p) {
    const auto path = simulate_bm(2, config(1.0, 1e-2, p));
    const Vec& b = path.states.back();
    x.push_back(b[0]);
    y.push_back(b[1]);
    xx.push_back(b[0] * b[1]);
  }
  for (const auto* v : {&x, &y}) {
    const auto m = stats::mean_se(*v);
    CHECK(std::abs(m.mean) < 4 * m.se);
    CHECK(stats::sample_variance(*v) == doctest::Approx(1.0).epsilon(0.1));
  }
  const auto c = stats::mean_se(xx);
  CHECK(std::abs(c.mean) < 4 * c.se);
}

TEST_CASE("Ornstein-Uhlenbeck variance (1 - e^-2)/2") {
  Mat a(1, 1);
  a << -1.0;
  const auto chart = fermi_chart(ManifoldModel::euclidean(1), CurveSpec::constant(1, 1.0, 16), 10.0);
  const auto field = DriftField::linear(a);
  std::vector<double> v;
  for (std::uint64_t p = 0; p < 4000; ++p) {
    v.push_back(simulate_X(chart, field, CurveSpec::constant(1, 1.0, 16), config(1.0, 1e-3, p)).states.back()[0]);
  }
  const double var = stats::sample_variance(v);
  const double exact = 0.5 * (1.0 - std::exp(-2.0));
  CHECK(std::abs(var - exact) < 4.0 * exact * std::sqrt(2.0 / v.size()));
}

TEST_CASE("flat X with f = 0 is Brownian motion pathwise") {
  const auto curve = CurveSpec::constant(3, 0.5, 16);
  const auto chart = fermi_chart(ManifoldModel::euclidean(3), curve, 5.0);
  for (std::uint64_t p = 0; p < 20; ++p) {
    const auto c = config(0.5, 1e-3, p, 9);
    const auto x = simulate_X(chart, DriftField::zero(3), curve, c);
    const auto b = simulate_bm(3, c);
    REQUIRE(x.states.size() == b.states.size());
    for (std::size_t k = 0; k < x.states.size(); ++k) REQUIRE((x.states[k] - b.states[k]).norm() == 0.0);
  }
}

TEST_CASE("sphere: E|X|^2 falls below d t (paired with Brownian noise)") {
  const double T = 0.08;
  const auto curve = CurveSpec::constant(2, T, 16);
  const auto chart = fermi_chart(ManifoldModel::sphere(2, 1.0), curve, 1.5);
  std::vector<double> diff, sq;
  for (std::uint64_t p = 0; p < 4000; ++p) {
    const auto c = config(T, 1e-3, p, 4);
    const double x2 = simulate_X(chart, DriftField::zero(2), curve, c).states.back().squaredNorm();
    const double b2 = simulate_bm(2, c).states.back().squaredNorm();
    diff.push_back(x2 - b2);
    sq.push_back(x2);
  }
  const auto d = stats::mean_se(diff);
  CHECK(d.mean + 3.0 * d.se < 0.0);
  CHECK(stats::mean_se(sq).mean < 2.0 * T);
}

TEST_CASE("Besselized Y: |Y(T)|^2/T is chi-square(2)") {
  const double T = 0.05;
  const auto curve = CurveSpec::constant(2, T, 16);
  const auto chart = fermi_chart(ManifoldModel::sphere(2, 1.0), curve, 1.5);
  std::vector<double> s;
  for (std::uint64_t p = 0; p < 3000; ++p) s.push_back(simulate_Y(chart, curve, config(T, 1e-4, p)).states.back().squaredNorm() / T);
  const double d = stats::ks_statistic(s, [](double x) { return stats::chi_square_cdf(x, 2); });
  CHECK(stats::ks_pvalue(d, s.size()) > 0.01);
}

TEST_CASE("Bessel(3) mean 2 sqrt(2t/pi)") {
  std::vector<double> r;
  for (std::uint64_t p = 0; p < 4000; ++p) r.push_back(simulate_bessel(3, config(1.0, 1e-2, p)).states.back()[0]);
  const auto m = stats::mean_se(r);
  CHECK(std::abs(m.mean - 2.0 * std::sqrt(2.0 / std::numbers::pi)) < 4.0 * m.se);
}

TEST_CASE("increments have kurtosis 3") {
  std::vector<double> z;
  Vec dB(4);
  for (std::uint64_t p = 0; p < 20000; ++p) {
    draw_increment(3, Stream::primary, p, 0, 1.0, dB);
    for (int i = 0; i < 4; ++i) z.push_back(dB[i]);
  }
  const auto k = stats::kurtosis(z);
  CHECK(std::abs(k.mean - 3.0) < 4.0 * k.se);
}

TEST_CASE("Brownian-bridge crossing probability limits") {
  CHECK(bridge_exit_probability(1.0, 0.2, 1.0, 0.1) == 1.0);
  CHECK(bridge_exit_probability(0.2, 1.2, 1.0, 0.1) == 1.0);
  CHECK(bridge_exit_probability(0.0, 0.0, 1.0, 1e-4) == 0.0);  // underflows
  CHECK(bridge_exit_probability(0.5, 0.5, 1.0, 0.1) == doctest::Approx(std::exp(-5.0)));
  CHECK(bridge_exit_probability(0.999, 0.999, 1.0, 1e-2) > 0.99);
  CHECK(tube_exit_check(0.1, 0.2, 1.0, 0.1, false, 0.0) == false);
  CHECK(tube_exit_check(0.1, 1.0, 1.0, 0.1, false, 0.5) == true);
  CHECK(tube_exit_check(0.9, 0.9, 1.0, 0.1, true, 0.1) == true);
}

TEST_CASE("theta-series survival of BM(1), delta = 1, T = 1") {
  CHECK(theta_survival(1.0, 1.0) == doctest::Approx(0.370777).epsilon(1e-5));
  CHECK(mc::small_ball_probability(1, 1.0, 1.0) == doctest::Approx(theta_survival(1.0, 1.0)).epsilon(1e-12));

  IntegratorConfig c = config(1.0, 1e-3, 0, 17);
  c.delta = 1.0;
  c.bridge_correction = true;
  const auto e = mc::estimate_tube_prob(Dynamics::brownian(1), c, rejection(20000));
  CHECK(std::abs(e.p_hat - theta_survival(1.0, 1.0)) < 3.0 * e.se);
  CHECK(e.se == doctest::Approx(std::sqrt(e.p_hat * (1 - e.p_hat) / 20000)));
}

TEST_CASE("grid-monitored survival converges from above") {
  const double exact = theta_survival(1.0, 1.0);
  std::vector<double> p;
  double se = 0.0;
  for (double dt : {2e-2, 5e-3, 1e-3}) {
    IntegratorConfig c = config(1.0, dt, 0, 23);
    c.delta = 1.0;
    c.allow_coarse_dt = true;
    const auto e = mc::estimate_tube_prob(Dynamics::brownian(1), c, rejection(20000));
    p.push_back(e.p_hat);
    se = e.se;
  }
  CHECK(p[0] > p[1]);
  CHECK(p[1] > p[2]);
  CHECK(p[2] - exact > -3.0 * se);
  CHECK(p[0] - exact > 3.0 * se);
}

TEST_CASE("tube exits and domain errors") {
  IntegratorConfig c = config(1.0, 4e-5, 3);
  c.delta = 0.05;
  const auto path = simulate_bm(2, c);
  CHECK(path.exited);
  REQUIRE(path.exit_time.has_value());
  CHECK(path.states.size() < 25001);
  CHECK(path.radial.size() == path.states.size());

  const auto curve = CurveSpec::constant(2, 1.0, 16);
  const auto chart = fermi_chart(ManifoldModel::sphere(2, 1.0), curve, 0.1);
  CHECK_THROWS_AS(simulate_X(chart, DriftField::zero(2), curve, config(1.0, 1e-3, 0)), ChartDomainError);
}

TEST_CASE("NDJSON dump") {
  std::vector<PathSample> paths;
  for (std::uint64_t p = 0; p < 3; ++p) paths.push_back(simulate_bm(1, config(0.01, 1e-3, p)));
  std::ostringstream os;
  CHECK(write_ndjson(os, paths, 2) == 2);
  const std::string s = os.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == 2);
  CHECK(s.find("\"path_index\"") != std::string::npos);
}
