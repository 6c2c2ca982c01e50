#pragma once

#include "omtube/coupling.hpp"
#include "omtube/ensemble.hpp"
#include "omtube/geometry.hpp"
#include "omtube/om.hpp"
#include "omtube/sde.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace omtube::mc {

/// P[max_{t≤T} |B(t)| < δ] for d-dimensional Brownian motion, from the
/// Bessel-zero eigenfunction series (d = 1 reduces to the theta series).
double small_ball_probability(int dim, double delta, double T);
/// Logarithm of the same, accurate when the probability underflows.
double log_small_ball_probability(int dim, double delta, double T);

/// Rejection when the small-ball series predicts P ≥ 1e-3, else resampling.
Conditioning automatic_conditioning(int dim, double delta, double T);

/// Survival of one diffusion in the tube {|x| < δ}. Observable: |x(T)|.
class TubeKernel {
 public:
  struct State {
    Vec x;
    double r = 0.0;
    bool exited = false;
  };
  struct Stats {
    std::size_t exits = 0;
  };

  TubeKernel(const sde::Dynamics& dynamics, const sde::IntegratorConfig& cfg);

  int steps() const { return steps_; }
  int observables() const { return 1; }
  std::uint64_t seed() const { return cfg_.seed; }
  Stream stream() const { return cfg_.stream; }
  void start(State& s, std::uint64_t key) const;
  bool advance(State& s, int step, std::uint64_t key) const;
  void observe(const State& s, double* out) const { out[0] = s.r; }
  void record(Stats& st, const State& s) const { st.exits += s.exited; }
  static void merge(Stats& a, const Stats& b) { a.exits += b.exits; }

 private:
  const sde::Dynamics* dynamics_;
  sde::IntegratorConfig cfg_;
  int steps_;
  double h_, sqrt_h_;
};

struct TubeEstimate {
  sde::Process process = sde::Process::BM;
  Conditioning conditioning = Conditioning::rejection;
  double p_hat = 0.0;
  double se = 0.0;
  double log_p = 0.0;
  double rel_se = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_survive = 0;
  double delta = 0.0;
  double dt = 0.0;  // effective step
  double T = 0.0;
  bool bridge_correction = false;
  std::vector<double> batch_log_p;
  std::vector<std::string> warnings;
};

/// Tube probability of `dynamics` started at the origin. cfg supplies
/// T, dt, delta, bridge flag, seed and stream; opt the ensemble layout.
TubeEstimate estimate_tube_prob(const sde::Dynamics& dynamics, const sde::IntegratorConfig& cfg,
                                const EnsembleOptions& opt);

struct RatioConfig {
  double delta = 0.2;
  double dt = 1e-4;
  std::size_t n_paths = 200000;
  std::uint64_t seed = 1;
  bool bridge_correction = true;
  bool allow_coarse_dt = false;
  sde::Scheme scheme = sde::Scheme::euler_maruyama;
  /// Unset: chosen by automatic_conditioning.
  std::optional<Conditioning> conditioning;
  int batches = 20;
  Execution execution = Execution::parallel;
};

struct RatioResult {
  TubeEstimate numerator;
  TubeEstimate denominator;
  double ratio = 0.0;
  double ratio_se = 0.0;
  double predicted = 0.0;
  om::ActionResult action;
  double z_score = 0.0;
  /// Legs driven by the same noise (flat chart, f = 0, constant curve).
  bool shared_stream = false;
};

/// Tube probability of X around γ over the Brownian small-ball probability,
/// compared with exp(−S(γ)). T is the curve duration of the chart.
RatioResult estimate_ratio(const geometry::ChartPtr& chart, const om::DriftField& field, const RatioConfig& cfg);

struct RatioPoint {
  double delta = 0.0;
  double ratio = 0.0;
  double ratio_se = 0.0;
};

struct Extrapolation {
  double limit = 0.0;
  double limit_se = 0.0;
  double log_limit = 0.0;
  double a = 0.0;  // coefficient of √δ
  double b = 0.0;  // coefficient of δ
  /// Weighted residual sum of squares (0 with three points).
  double residual = 0.0;
  bool low_confidence = false;
  std::string note;
};

/// Weighted least squares of log r = c + a√δ + bδ; limit = e^c.
Extrapolation extrapolate_ratio(const std::vector<RatioPoint>& points);
Extrapolation extrapolate_ratio(const std::vector<RatioResult>& results);

/// Bootstrap SE (resampling whole batches, or individual paths for
/// rejection legs) of the ratio, for checking the delta-method SE.
double bootstrap_ratio_se(const RatioResult& r, int resamples, std::uint64_t seed);

void write_json(std::ostream& out, const RatioResult& r);
/// CSV header and one row per ratio cell.
void write_csv(std::ostream& out, const std::vector<RatioResult>& rows);

struct GirsanovWeightEstimate {
  double delta = 0.0;
  /// E[exp(M(T) + L(T)) | survive]
  double mean_weight = 0.0;
  double se = 0.0;
  stats::Moment M, L, L_tilde;
  /// Largest |L(T)| over surviving paths.
  double max_abs_L = 0.0;
  /// exp E[M + L | survive], the Jensen lower bound of mean_weight.
  double jensen_lower = 0.0;
  bool jensen_holds = false;
  /// p = (1 − 2√δ)^{-1}; infinite for δ ≥ 1/4.
  double p_holder = 0.0;
  /// E[exp(M_p + p L) | survive]^{1/p}, with M_p the p-exponential martingale.
  double holder_weight = 0.0;
  std::size_t n_survive = 0;
};

/// Conditional Girsanov weight from the M, L, L̃ bookkeeping of a coupled
/// ensemble. Throws EstimationError below 100 surviving rows.
GirsanovWeightEstimate estimate_girsanov_weight(const coupling::CoupledEnsemble& ensemble);

struct MomentRow {
  double delta = 0.0;
  double c = 0.0;
  double dt = 0.0;  // effective step
  /// E[exp((c/√δ)|U(T) − Ũ(T)|) | survive]
  double mean = 0.0;
  double se = 0.0;
  double log_p = 0.0;
  std::size_t n_survive = 0;
};

struct MomentTable {
  std::vector<MomentRow> rows;
  double max_mean = 0.0;
  /// No step to a smaller δ raises the estimate by more than 3 combined SE.
  bool bounded = false;
};

/// Coupled ensembles at each δ (base supplies T, dt, seed, ...), with dt
/// lowered to δ²/50 where base.dt is coarser. δ values are processed in the given order; the growth check follows that order.
MomentTable conditional_moment_experiment(const geometry::ChartPtr& chart, const om::DriftField& field,
                                          const std::vector<double>& deltas, double c,
                                          const coupling::CouplingConfig& base, const EnsembleOptions& opt);

void write_json(std::ostream& out, const GirsanovWeightEstimate& w);
void write_csv(std::ostream& out, const MomentTable& table);

}  // namespace omtube::mc
