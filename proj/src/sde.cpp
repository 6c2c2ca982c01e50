#include "omtube/sde.hpp"

#include <json.hpp>

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace omtube::sde {

std::string to_string(Scheme s) {
  return s == Scheme::euler_maruyama ? "euler_maruyama" : "milstein_diagonal";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "euler_maruyama" || name == "euler") return Scheme::euler_maruyama;
  if (name == "milstein_diagonal" || name == "milstein") return Scheme::milstein_diagonal;
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

std::string to_string(Process p) {
  switch (p) {
    case Process::X: return "X";
    case Process::Y: return "Y";
    case Process::BM: return "BM";
  }
  return "?";
}

int IntegratorConfig::steps() const {
  const double n = std::ceil(T / dt - 1e-9);
  if (!(n >= 1.0) || n > 2e9) throw std::invalid_argument("T / dt out of range");
  return static_cast<int>(n);
}

std::vector<std::string> IntegratorConfig::validate(const geometry::MetricChart* chart) const {
  std::vector<std::string> warnings;
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("T must be positive and finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive and finite");
  if (dt > T) throw std::invalid_argument("dt must not exceed T");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (has_tube()) {
    if (chart && delta >= chart->tube_radius()) {
      std::ostringstream os;
      os << "delta " << delta << " must be below the chart tube_radius " << chart->tube_radius();
      throw std::invalid_argument(os.str());
    }
    if (step() > delta * delta / 50.0) {
      std::ostringstream os;
      os << "dt " << step() << " exceeds delta^2/50 = " << delta * delta / 50.0;
      if (!allow_coarse_dt) throw std::invalid_argument(os.str() + " (set allow_coarse_dt to override)");
      warnings.push_back(os.str());
    }
  }
  return warnings;
}

// ---------------------------------------------------------------------------

Dynamics::Dynamics(Process process, ChartPtr chart, DriftField field, CurveSpec curve, Scheme scheme)
    : process_(process),
      dim_(chart ? chart->dim() : field.dim()),
      chart_(std::move(chart)),
      field_(std::move(field)),
      curve_(std::move(curve)),
      scheme_(scheme) {
  if (process_ != Process::BM && !chart_) throw std::invalid_argument("Dynamics: X and Y need a chart");
  if (field_.dim() != dim_ || curve_.dim() != dim_) throw std::invalid_argument("Dynamics: dimension mismatch");
  if (chart_) isotropic_ = dynamic_cast<const geometry::IsotropicChart*>(chart_.get());
  drift_free_ = process_ != Process::X || (field_.is_zero() && curve_.is_constant());
  const bool flat = !chart_ || chart_->flat();
  switch (process_) {
    case Process::BM: trivial_ = true; break;
    case Process::Y: trivial_ = flat; break;
    case Process::X: trivial_ = flat && field_.is_zero() && curve_.is_constant(); break;
  }
}

Dynamics Dynamics::brownian(int dim, Scheme scheme) {
  return Dynamics(Process::BM, nullptr, DriftField::zero(dim), CurveSpec::constant(dim, 1.0, 1), scheme);
}

Vec Dynamics::drift(double t, const Vec& x) const {
  if (trivial_) return Vec::Zero(dim_);
  if (process_ == Process::Y) return chart_->besselization_drift(t, x);
  return chart_->coriolis_drift(t, x) + field_(t, x) - curve_.velocity(t);
}

Mat Dynamics::sigma(double t, const Vec& x) const {
  if (trivial_ || chart_->flat()) return Mat::Identity(dim_, dim_);
  return chart_->sigma(t, x);
}

void Dynamics::step(double t, Vec& x, const Vec& dB, double dt) const {
  if (trivial_) {
    x += dB;
    return;
  }
  if (chart_->flat()) {
    // only X with a drift reaches here
    x += dB + dt * (field_(t, x) - curve_.velocity(t));
    return;
  }
  if (isotropic_ && scheme_ == Scheme::euler_maruyama) {
    const double r = x.norm();
    if (r == 0.0) {
      x += dB;
      if (!drift_free_) x += dt * (field_(t, x) - curve_.velocity(t));
      return;
    }
    double rm1, cor;
    isotropic_->radial_terms(r, rm1, cor);
    const double ud = x.dot(dB) / r;
    const double radial = process_ == Process::Y ? -(dim_ - 1) * rm1 * (rm1 + 2.0) / (2.0 * r) : cor;
    // σ dB = dB + (ρ − 1)(dB − u⟨u, dB⟩); both drifts are radial
    const double cx = dt * radial / r - rm1 * ud / r;
    if (process_ == Process::X && !drift_free_) {
      const Vec extra = dt * (field_(t, x) - curve_.velocity(t));
      x += (1.0 + rm1) * dB + cx * x + extra;
    } else {
      x += (1.0 + rm1) * dB + cx * x;
    }
    return;
  }
  const Mat s = sigma(t, x);
  Vec next = x + s * dB + dt * drift(t, x);
  if (scheme_ == Scheme::milstein_diagonal) {
    const double h = 1e-5;
    for (int i = 0; i < dim_; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double ds = (sigma(t, xp)(i, i) - sigma(t, xm)(i, i)) / (2.0 * h);
      next[i] += 0.5 * s(i, i) * ds * (dB[i] * dB[i] - dt);
    }
  }
  x = next;
}

// ---------------------------------------------------------------------------

void draw_increment(std::uint64_t seed, Stream stream, std::uint64_t path, std::uint64_t step, double sqrt_dt, Vec& dB) {
  CounterRng rng(seed, stream, path, step);
  for (int i = 0; i < dB.size(); ++i) dB[i] = sqrt_dt * rng.normal();
}

double bridge_exit_probability(double r0, double r1, double delta, double dt) {
  if (r0 >= delta || r1 >= delta) return 1.0;
  return std::exp(-2.0 * (delta - r0) * (delta - r1) / dt);
}

bool tube_exit_check(double r0, double r1, double delta, double dt, bool bridge_correction, double uniform) {
  if (r1 >= delta) return true;
  if (!bridge_correction) return false;
  return uniform < bridge_exit_probability(r0, r1, delta, dt);
}

double bridge_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step, Stream stream) {
  CounterRng rng(seed, Stream::bridge, path ^ (static_cast<std::uint64_t>(stream) << 56), step);
  return rng.uniform();
}

bool step_exits(const IntegratorConfig& cfg, std::uint64_t path, std::uint64_t step, double r0, double r1, double dt) {
  if (r1 >= cfg.delta) return true;
  if (!cfg.bridge_correction) return false;
  const double p = bridge_exit_probability(r0, r1, cfg.delta, dt);
  if (p < 0x1p-53) return false;
  return bridge_uniform(cfg.seed, path, step, cfg.stream) < p;
}

PathSample simulate(const Dynamics& dynamics, const IntegratorConfig& cfg) {
  const geometry::MetricChart* chart = dynamics.process() == Process::BM ? nullptr : &dynamics.chart();
  cfg.validate(chart);
  const int d = dynamics.dim();
  const int n = cfg.steps();
  const double h = cfg.step();
  const double sqrt_h = std::sqrt(h);
  PathSample p;
  p.path_index = cfg.path_index;
  p.times.reserve(n + 1);
  p.states.reserve(n + 1);
  p.radial.reserve(n + 1);
  p.increments.reserve(n);
  Vec x = Vec::Zero(d);
  Vec dB(d);
  p.times.push_back(0.0);
  p.states.push_back(x);
  p.radial.push_back(0.0);
  for (int k = 0; k < n; ++k) {
    const double t = k * h;
    draw_increment(cfg.seed, cfg.stream, cfg.path_index, static_cast<std::uint64_t>(k), sqrt_h, dB);
    const double r0 = p.radial.back();
    dynamics.step(t, x, dB, h);
    const double r1 = x.norm();
    p.increments.push_back(dB);
    p.times.push_back((k + 1) * h);
    p.states.push_back(x);
    p.radial.push_back(r1);
    if (chart && !cfg.has_tube() && r1 >= chart->tube_radius()) {
      std::ostringstream os;
      os << "path " << cfg.path_index << " left the chart at t=" << (k + 1) * h;
      throw geometry::ChartDomainError(os.str());
    }
    if (cfg.has_tube() && !p.exited) {
      if (step_exits(cfg, cfg.path_index, static_cast<std::uint64_t>(k), r0, r1, h)) {
        p.exited = true;
        p.exit_time = (k + 1) * h;
        if (cfg.stop_at_exit) break;
      }
    }
    if (chart && r1 >= chart->tube_radius()) {
      std::ostringstream os;
      os << "path " << cfg.path_index << " left the chart at t=" << (k + 1) * h;
      throw geometry::ChartDomainError(os.str());
    }
  }
  return p;
}

PathSample simulate_X(const ChartPtr& chart, const DriftField& field, const CurveSpec& curve, const IntegratorConfig& cfg) {
  return simulate(Dynamics(Process::X, chart, field, curve, cfg.scheme), cfg);
}

PathSample simulate_Y(const ChartPtr& chart, const CurveSpec& curve, const IntegratorConfig& cfg) {
  return simulate(Dynamics(Process::Y, chart, DriftField::zero(chart->dim()), curve, cfg.scheme), cfg);
}

PathSample simulate_bm(int dim, const IntegratorConfig& cfg) { return simulate(Dynamics::brownian(dim, cfg.scheme), cfg); }

PathSample simulate_bessel(int dim, const IntegratorConfig& cfg) {
  PathSample p = simulate_bm(dim, cfg);
  for (std::size_t k = 0; k < p.states.size(); ++k) {
    Vec r(1);
    r[0] = p.radial[k];
    p.states[k] = r;
  }
  return p;
}

std::size_t write_ndjson(std::ostream& out, const std::vector<PathSample>& paths, std::size_t max_paths) {
  std::size_t written = 0;
  for (const auto& p : paths) {
    if (written >= max_paths) break;
    nlohmann::json j;
    j["path_index"] = p.path_index;
    j["times"] = p.times;
    auto states = nlohmann::json::array();
    for (const auto& s : p.states) states.push_back(std::vector<double>(s.data(), s.data() + s.size()));
    j["states"] = std::move(states);
    j["exited"] = p.exited;
    j["exit_time"] = p.exit_time ? nlohmann::json(*p.exit_time) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
    ++written;
  }
  return written;
}

}  // namespace omtube::sde
