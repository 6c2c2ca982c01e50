#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omtube/parallel.hpp"
#include "omtube/rng.hpp"
#include "omtube/stats.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace omtube;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("CounterRng cells are reproducible and distinct") {
  CounterRng a(7, Stream::primary, 3, 5), b(7, Stream::primary, 3, 5);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  CounterRng c(7, Stream::reference, 3, 5), d(7, Stream::primary, 3, 6), e(7, Stream::primary, 4, 5);
  CounterRng f(7, Stream::primary, 3, 5);
  const double x = f.uniform();
  CHECK(c.uniform() != x);
  CHECK(d.uniform() != x);
  CHECK(e.uniform() != x);
}

TEST_CASE("uniforms lie in [0,1) with the right mean") {
  std::vector<double> u;
  for (std::uint64_t p = 0; p < 20000; ++p) {
    CounterRng r(1, Stream::test, p, 0);
    const double x = r.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    u.push_back(x);
  }
  const auto m = stats::mean_se(u);
  CHECK(std::abs(m.mean - 0.5) < 4.0 * m.se);
  CHECK(stats::ks_pvalue(stats::ks_statistic(u, [](double x) { return x; }), u.size()) > 0.01);
}

TEST_CASE("normals: moments, kurtosis, KS") {
  std::vector<double> z;
  for (std::uint64_t p = 0; p < 50000; ++p) {
    CounterRng r(2, Stream::test, p, 0);
    z.push_back(r.normal());
    z.push_back(r.normal());
  }
  const auto m = stats::mean_se(z);
  CHECK(std::abs(m.mean) < 4.0 * m.se);
  CHECK(stats::sample_variance(z) == doctest::Approx(1.0).epsilon(0.02));
  const auto k = stats::kurtosis(z);
  CHECK(std::abs(k.mean - 3.0) < 4.0 * k.se);
  const double d = stats::ks_statistic(z, [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); });
  CHECK(stats::ks_pvalue(d, z.size()) > 0.01);
}

TEST_CASE("stats helpers") {
  const std::vector<double> v = {1, 2, 3, 4};
  const auto m = stats::mean_se(v);
  CHECK(m.mean == 2.5);
  CHECK(stats::sample_variance(v) == doctest::Approx(5.0 / 3.0));
  CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 12.0)));
  CHECK(pairwise_sum(v) == 10.0);

  // χ²_2 is exponential with mean 2
  CHECK(stats::chi_square_cdf(1.3, 2) == doctest::Approx(1.0 - std::exp(-0.65)).epsilon(1e-12));
  CHECK(stats::normal_tail(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_tail(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-9));

  const std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  const auto fit = stats::fit_line(x, y);
  CHECK(fit.slope == doctest::Approx(2.0));
  CHECK(fit.intercept == doctest::Approx(1.0));
  CHECK(fit.r2 == doctest::Approx(1.0));

  // KS: statistic of a perfect grid sample is 1/(2n)
  std::vector<double> g;
  for (int i = 0; i < 100; ++i) g.push_back((i + 0.5) / 100.0);
  CHECK(stats::ks_statistic(g, [](double t) { return t; }) == doctest::Approx(0.005));
  CHECK(stats::ks_pvalue(0.3, 100) < 1e-6);
}

TEST_CASE("parallel loop rethrows the first error") {
  CHECK_THROWS_AS(for_each_index(Execution::parallel, 100,
                                 [](std::size_t i) {
                                   if (i == 37) throw std::runtime_error("boom");
                                 }),
                  std::runtime_error);
  std::vector<int> hit(64, 0);
  for_each_index(Execution::parallel, hit.size(), [&](std::size_t i) { hit[i] = 1; });
  for (int h : hit) CHECK(h == 1);
}
