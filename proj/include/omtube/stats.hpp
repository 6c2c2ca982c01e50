#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace omtube::stats {

struct Moment {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard error of the mean (pairwise-summed).
Moment mean_se(std::span<const double> values);
double sample_variance(std::span<const double> values);
/// Sample kurtosis m4 / m2² and its large-sample standard error √(24/n).
Moment kurtosis(std::span<const double> values);

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);
/// P[D_n > d] under the null, from the asymptotic Kolmogorov series with
/// Stephens' finite-n correction.
double ks_pvalue(double d, std::size_t n);

/// CDF of the chi-square distribution with k degrees of freedom.
double chi_square_cdf(double x, double k);
/// Standard normal upper tail.
double normal_tail(double z);

/// Ordinary least-squares slope of y on x, with intercept, and its R².
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace omtube::stats
