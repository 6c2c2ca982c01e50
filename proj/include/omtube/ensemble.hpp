#pragma once

#include "omtube/parallel.hpp"
#include "omtube/rng.hpp"
#include "omtube/stats.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace omtube::mc {

/// Too few surviving paths for the requested estimate.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How the tube event is imposed on an ensemble.
///   rejection:  independent paths, exited ones are dropped.
///   resampling: fixed-size populations in batches; exited particles are
///               replaced by copies of survivors and P is the product of
///               the per-step surviving fractions.
enum class Conditioning { rejection, resampling };

std::string to_string(Conditioning c);
Conditioning conditioning_from_string(const std::string& name);

struct EnsembleOptions {
  std::size_t n_paths = 100000;
  Conditioning conditioning = Conditioning::rejection;
  /// Number of independent populations in resampling mode.
  int batches = 20;
  Execution execution = Execution::parallel;
};

/// A path-level Monte Carlo kernel. Noise must depend only on
/// (seed(), stream(), key, step) so any schedule gives the same result.
template <class K>
concept EnsembleKernel = requires(const K& k, typename K::State& s, const typename K::State& cs,
                                  typename K::Stats& st, const typename K::Stats& cst, double* out,
                                  std::uint64_t key, int step) {
  { k.steps() } -> std::convertible_to<int>;
  { k.observables() } -> std::convertible_to<int>;
  { k.seed() } -> std::convertible_to<std::uint64_t>;
  { k.stream() } -> std::convertible_to<Stream>;
  k.start(s, key);
  { k.advance(s, step, key) } -> std::convertible_to<bool>;
  k.observe(cs, out);
  k.record(st, cs);
  K::merge(st, cst);
};

struct EnsembleResult {
  Conditioning conditioning = Conditioning::rejection;
  std::size_t n_paths = 0;
  /// Rejection: surviving paths. Resampling: rows of the final populations.
  std::size_t n_survive = 0;
  int observables = 0;
  double p_hat = 0.0;
  double se = 0.0;
  /// log p_hat, finite even when p_hat underflows.
  double log_p = -std::numeric_limits<double>::infinity();
  /// se / p_hat.
  double rel_se = std::numeric_limits<double>::infinity();
  std::vector<double> batch_log_p;
  /// Row-major, one row of `observables` values per surviving path.
  std::vector<double> rows;
  std::vector<int> row_batch;

  std::span<const double> row(std::size_t i) const {
    return {rows.data() + i * static_cast<std::size_t>(observables), static_cast<std::size_t>(observables)};
  }
  std::size_t row_count() const { return observables ? rows.size() / observables : n_survive; }

  /// Conditional mean of f(row) given survival, with its standard error.
  /// Resampling mode weights batch means by the batch probabilities and
  /// uses the delta-method SE over batches.
  stats::Moment conditional_mean(const std::function<double(std::span<const double>)>& f) const;
  stats::Moment conditional_mean(int column) const;
};

template <EnsembleKernel K>
struct EnsembleRun {
  EnsembleResult result;
  typename K::Stats stats{};
};

namespace detail {

void finish_probability(EnsembleResult& r);

template <EnsembleKernel K>
void run_rejection(const K& kernel, const EnsembleOptions& opt, EnsembleRun<K>& run) {
  constexpr std::size_t kBlock = 256;
  const int steps = kernel.steps();
  const int nobs = kernel.observables();
  const std::size_t n = opt.n_paths;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> block_rows(blocks);
  std::vector<std::size_t> block_survivors(blocks, 0);
  std::vector<typename K::Stats> block_stats(blocks);
  for_each_index(opt.execution, blocks, [&](std::size_t b) {
    typename K::State state;
    std::vector<double> obs(static_cast<std::size_t>(nobs));
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t path = b * kBlock; path < end; ++path) {
      kernel.start(state, path);
      bool alive = true;
      for (int k = 0; k < steps && alive; ++k) alive = kernel.advance(state, k, path);
      kernel.record(block_stats[b], state);
      if (!alive) continue;
      ++block_survivors[b];
      if (nobs > 0) {
        kernel.observe(state, obs.data());
        block_rows[b].insert(block_rows[b].end(), obs.begin(), obs.end());
      }
    }
  });
  auto& r = run.result;
  for (std::size_t b = 0; b < blocks; ++b) {
    r.n_survive += block_survivors[b];
    r.rows.insert(r.rows.end(), block_rows[b].begin(), block_rows[b].end());
    K::merge(run.stats, block_stats[b]);
  }
  r.row_batch.assign(r.n_survive, 0);
  r.p_hat = static_cast<double>(r.n_survive) / static_cast<double>(n);
  r.se = std::sqrt(r.p_hat * (1.0 - r.p_hat) / static_cast<double>(n));
  r.log_p = std::log(r.p_hat);
  r.rel_se = r.p_hat > 0 ? r.se / r.p_hat : std::numeric_limits<double>::infinity();
  r.batch_log_p = {r.log_p};
}

template <EnsembleKernel K>
void run_resampling(const K& kernel, const EnsembleOptions& opt, EnsembleRun<K>& run) {
  if (opt.batches < 2) throw std::invalid_argument("resampling needs at least 2 batches");
  const int steps = kernel.steps();
  const int nobs = kernel.observables();
  const std::size_t batches = static_cast<std::size_t>(opt.batches);
  const std::size_t N = (opt.n_paths + batches - 1) / batches;
  auto& r = run.result;
  r.n_paths = N * batches;
  std::vector<typename K::State> states(N), next(N);
  std::vector<char> alive(N);
  std::vector<std::size_t> alive_idx;
  alive_idx.reserve(N);
  std::vector<double> obs(static_cast<std::size_t>(nobs));
  for (std::size_t b = 0; b < batches; ++b) {
    const auto key = [b](std::size_t slot) { return (static_cast<std::uint64_t>(b) << 32) | slot; };
    for_each_index(opt.execution, N, [&](std::size_t i) { kernel.start(states[i], key(i)); });
    double log_p = 0.0;
    for (int k = 0; k < steps; ++k) {
      for_each_index(opt.execution, N, [&](std::size_t i) { alive[i] = kernel.advance(states[i], k, key(i)); });
      alive_idx.clear();
      for (std::size_t i = 0; i < N; ++i) {
        if (alive[i]) {
          alive_idx.push_back(i);
        } else {
          kernel.record(run.stats, states[i]);
        }
      }
      const std::size_t A = alive_idx.size();
      if (A == N) continue;
      if (A == 0) {
        log_p = -std::numeric_limits<double>::infinity();
        break;
      }
      log_p += std::log(static_cast<double>(A) / static_cast<double>(N));
      const std::uint64_t tag = (static_cast<std::uint64_t>(kernel.stream()) << 40) | b;
      CounterRng rng(kernel.seed(), Stream::resampling, tag, static_cast<std::uint64_t>(k));
      const double u = rng.uniform();
      for (std::size_t i = 0; i < N; ++i) {
        const auto j = std::min(A - 1, static_cast<std::size_t>((static_cast<double>(i) + u) * A / N));
        next[i] = states[alive_idx[j]];
      }
      std::swap(states, next);
    }
    r.batch_log_p.push_back(log_p);
    if (!std::isfinite(log_p)) continue;
    for (std::size_t i = 0; i < N; ++i) {
      kernel.record(run.stats, states[i]);
      if (nobs > 0) {
        kernel.observe(states[i], obs.data());
        r.rows.insert(r.rows.end(), obs.begin(), obs.end());
      }
      r.row_batch.push_back(static_cast<int>(b));
    }
    r.n_survive += N;
  }
  finish_probability(r);
}

}  // namespace detail

/// Runs `kernel` over an ensemble. Serial and parallel execution produce
/// bit-identical results.
template <EnsembleKernel K>
EnsembleRun<K> run_ensemble(const K& kernel, const EnsembleOptions& opt) {
  if (opt.n_paths == 0) throw std::invalid_argument("run_ensemble: n_paths must be positive");
  EnsembleRun<K> run;
  run.result.conditioning = opt.conditioning;
  run.result.n_paths = opt.n_paths;
  run.result.observables = kernel.observables();
  if (opt.conditioning == Conditioning::rejection) {
    detail::run_rejection(kernel, opt, run);
  } else {
    detail::run_resampling(kernel, opt, run);
  }
  return run;
}

}  // namespace omtube::mc
