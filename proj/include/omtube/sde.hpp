#pragma once

#include "omtube/geometry.hpp"
#include "omtube/om.hpp"
#include "omtube/rng.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace omtube::sde {

using geometry::ChartPtr;
using geometry::CurveSpec;
using om::DriftField;

enum class Scheme { euler_maruyama, milstein_diagonal };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct IntegratorConfig {
  double T = 1.0;
  /// Requested step; the effective step is T / steps() ≤ dt.
  double dt = 1e-4;
  Scheme scheme = Scheme::euler_maruyama;
  /// Tube radius; infinity disables exit detection.
  double delta = std::numeric_limits<double>::infinity();
  bool bridge_correction = false;
  std::uint64_t seed = 1;
  std::uint64_t path_index = 0;
  Stream stream = Stream::primary;
  /// Accept dt > δ²/50 (reported as a warning instead of an error).
  bool allow_coarse_dt = false;
  /// Stop integrating at the first exit.
  bool stop_at_exit = true;

  int steps() const;
  double step() const { return T / steps(); }
  bool has_tube() const { return std::isfinite(delta); }
  /// Throws std::invalid_argument on invalid settings; returns warnings.
  std::vector<std::string> validate(const geometry::MetricChart* chart = nullptr) const;
};

struct PathSample {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> increments;  // increments[k] drives states[k] -> states[k+1]
  std::vector<double> radial;
  bool exited = false;
  std::optional<double> exit_time;
  double log_weight = 0.0;
  std::uint64_t path_index = 0;
};

enum class Process { X, Y, BM };

std::string to_string(Process p);

/// Coefficients and one-step update of a chart diffusion:
///   X:  dX = σ dB + (a + f − γ̇) dt
///   Y:  dY = σ dB + c dt
///   BM: dB
/// Immutable; safe to share across workers.
class Dynamics {
 public:
  Dynamics(Process process, ChartPtr chart, DriftField field, CurveSpec curve, Scheme scheme = Scheme::euler_maruyama);
  static Dynamics brownian(int dim, Scheme scheme = Scheme::euler_maruyama);

  Process process() const { return process_; }
  int dim() const { return dim_; }
  const geometry::MetricChart& chart() const { return *chart_; }
  const ChartPtr& chart_ptr() const { return chart_; }
  const DriftField& field() const { return field_; }
  const CurveSpec& curve() const { return curve_; }
  Scheme scheme() const { return scheme_; }
  /// σ = I and zero drift: the update is x += dB exactly.
  bool trivial() const { return trivial_; }

  Vec drift(double t, const Vec& x) const;
  Mat sigma(double t, const Vec& x) const;
  /// x ← x + σ(t,x) dB + drift(t,x) dt (+ diagonal Milstein correction).
  void step(double t, Vec& x, const Vec& dB, double dt) const;

 private:
  Process process_;
  int dim_;
  ChartPtr chart_;
  DriftField field_;
  CurveSpec curve_;
  Scheme scheme_;
  bool trivial_ = false;
  bool drift_free_ = false;  // no f − γ̇ term
  const geometry::IsotropicChart* isotropic_ = nullptr;
};

/// d independent N(0, dt) variates for (seed, stream, path, step).
void draw_increment(std::uint64_t seed, Stream stream, std::uint64_t path, std::uint64_t step, double sqrt_dt, Vec& dB);

/// Probability that a Brownian bridge between radial values r0 and r1 over
/// dt touches δ (1-d barrier formula applied to the radial component).
double bridge_exit_probability(double r0, double r1, double delta, double dt);

/// Exit decision for one step; `uniform` is used only with bridge correction.
bool tube_exit_check(double r0, double r1, double delta, double dt, bool bridge_correction, double uniform);

/// Uniform variate for the bridge test of (seed, path, step). The driving
/// stream is mixed into the key so legs on different streams stay independent.
double bridge_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step, Stream stream = Stream::primary);

/// Exit test for one step of path `path` under cfg (delta, bridge flag,
/// seed, stream). The bridge uniform is only drawn when the crossing
/// probability is at least 2^-53, below which no uniform can fall under it
/// except exactly 0.
bool step_exits(const IntegratorConfig& cfg, std::uint64_t path, std::uint64_t step, double r0, double r1, double dt);

PathSample simulate(const Dynamics& dynamics, const IntegratorConfig& cfg);
PathSample simulate_X(const ChartPtr& chart, const DriftField& field, const CurveSpec& curve, const IntegratorConfig& cfg);
PathSample simulate_Y(const ChartPtr& chart, const CurveSpec& curve, const IntegratorConfig& cfg);
PathSample simulate_bm(int dim, const IntegratorConfig& cfg);
/// Bessel(d) as |BM|: states hold the 1-vector |B(t)|.
PathSample simulate_bessel(int dim, const IntegratorConfig& cfg);

/// One path per line: {"path_index", "times", "states", "exited", "exit_time"}.
/// Writes at most max_paths lines and returns the number written.
std::size_t write_ndjson(std::ostream& out, const std::vector<PathSample>& paths, std::size_t max_paths = 1000);

}  // namespace omtube::sde
