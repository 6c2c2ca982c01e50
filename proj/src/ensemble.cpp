#include "omtube/ensemble.hpp"

namespace omtube::mc {

std::string to_string(Conditioning c) { return c == Conditioning::rejection ? "rejection" : "resampling"; }

Conditioning conditioning_from_string(const std::string& name) {
  if (name == "rejection") return Conditioning::rejection;
  if (name == "resampling") return Conditioning::resampling;
  throw std::invalid_argument("unknown conditioning '" + name + "'");
}

namespace detail {

void finish_probability(EnsembleResult& r) {
  const auto B = r.batch_log_p.size();
  double m = -std::numeric_limits<double>::infinity();
  for (double l : r.batch_log_p) m = std::max(m, l);
  if (!std::isfinite(m)) {
    r.p_hat = r.se = 0.0;
    r.log_p = m;
    r.rel_se = std::numeric_limits<double>::infinity();
    return;
  }
  std::vector<double> w(B);
  for (std::size_t b = 0; b < B; ++b) w[b] = std::exp(r.batch_log_p[b] - m);
  const stats::Moment scaled = stats::mean_se(w);
  r.log_p = m + std::log(scaled.mean);
  r.p_hat = std::exp(r.log_p);
  r.rel_se = scaled.se / scaled.mean;
  r.se = r.rel_se * r.p_hat;
}

}  // namespace detail

stats::Moment EnsembleResult::conditional_mean(const std::function<double(std::span<const double>)>& f) const {
  const std::size_t n = row_count();
  if (n == 0) throw std::runtime_error("conditional_mean: no surviving paths");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(row(i));
  if (conditioning == Conditioning::rejection) return stats::mean_se(v);

  const std::size_t B = batch_log_p.size();
  std::vector<double> sum(B, 0.0);
  std::vector<std::size_t> count(B, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sum[row_batch[i]] += v[i];
    ++count[row_batch[i]];
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double l : batch_log_p) m = std::max(m, l);
  double wsum = 0.0, wm = 0.0;
  std::vector<double> w(B, 0.0), mb(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    if (count[b] == 0) continue;
    w[b] = std::exp(batch_log_p[b] - m);
    mb[b] = sum[b] / static_cast<double>(count[b]);
    wsum += w[b];
    wm += w[b] * mb[b];
  }
  stats::Moment out;
  out.n = n;
  out.mean = wm / wsum;
  double s2 = 0.0;
  for (std::size_t b = 0; b < B; ++b) s2 += (w[b] * (mb[b] - out.mean)) * (w[b] * (mb[b] - out.mean));
  out.se = B > 1 ? std::sqrt(s2 * static_cast<double>(B) / static_cast<double>(B - 1)) / wsum : 0.0;
  return out;
}

stats::Moment EnsembleResult::conditional_mean(int column) const {
  if (column < 0 || column >= observables) throw std::out_of_range("conditional_mean: bad column");
  return conditional_mean([column](std::span<const double> r) { return r[static_cast<std::size_t>(column)]; });
}

}  // namespace omtube::mc
