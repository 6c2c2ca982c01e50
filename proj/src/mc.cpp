#include "omtube/mc.hpp"

#include "omtube/json_io.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace omtube::mc {

namespace {

double bessel_zero(double nu, int k) {
  if (nu == -0.5) return (k - 0.5) * std::numbers::pi;
  if (nu == 0.5) return k * std::numbers::pi;
  return boost::math::cyl_bessel_j_zero(nu, k);
}

// Returns (log of the leading term, sum of all terms scaled by the leading exponential).
std::pair<double, double> small_ball_series(int dim, double delta, double T) {
  if (dim < 1) throw std::invalid_argument("small_ball: dim must be ≥ 1");
  if (!(delta > 0.0) || !(T > 0.0)) throw std::invalid_argument("small_ball: delta and T must be positive");
  const double nu = 0.5 * dim - 1.0;
  const double scale = T / (2.0 * delta * delta);
  const double log_norm = -(nu - 1.0) * std::log(2.0) - boost::math::lgamma(nu + 1.0);
  const double j1 = bessel_zero(nu, 1);
  const double lead = j1 * j1 * scale;
  double sum = 0.0;
  for (int k = 1; k <= 200000; ++k) {
    const double j = bessel_zero(nu, k);
    const double decay = j * j * scale - lead;
    if (decay > 745.0) break;
    const double coef = std::exp(log_norm) * std::pow(j, nu - 1.0) / boost::math::cyl_bessel_j(nu + 1.0, j);
    const double term = coef * std::exp(-decay);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum) && k > 2) break;
  }
  return {-lead, sum};
}

}  // namespace

double small_ball_probability(int dim, double delta, double T) {
  const auto [log_lead, sum] = small_ball_series(dim, delta, T);
  return std::clamp(std::exp(log_lead) * sum, 0.0, 1.0);
}

double log_small_ball_probability(int dim, double delta, double T) {
  const auto [log_lead, sum] = small_ball_series(dim, delta, T);
  return std::min(0.0, log_lead + std::log(sum));
}

Conditioning automatic_conditioning(int dim, double delta, double T) {
  return log_small_ball_probability(dim, delta, T) >= std::log(1e-3) ? Conditioning::rejection
                                                                      : Conditioning::resampling;
}

// ---------------------------------------------------------------------------

TubeKernel::TubeKernel(const sde::Dynamics& dynamics, const sde::IntegratorConfig& cfg)
    : dynamics_(&dynamics), cfg_(cfg), steps_(cfg.steps()), h_(cfg.step()), sqrt_h_(std::sqrt(h_)) {
  if (!cfg_.has_tube()) throw std::invalid_argument("TubeKernel: delta must be finite");
}

void TubeKernel::start(State& s, std::uint64_t) const {
  s.x = Vec::Zero(dynamics_->dim());
  s.r = 0.0;
  s.exited = false;
}

bool TubeKernel::advance(State& s, int step, std::uint64_t key) const {
  Vec dB(dynamics_->dim());
  sde::draw_increment(cfg_.seed, cfg_.stream, key, static_cast<std::uint64_t>(step), sqrt_h_, dB);
  const double r0 = s.r;
  dynamics_->step(step * h_, s.x, dB, h_);
  s.r = s.x.norm();
  if (!std::isfinite(s.r)) throw geometry::NumericError("non-finite state in tube simulation");
  s.exited = sde::step_exits(cfg_, key, static_cast<std::uint64_t>(step), r0, s.r, h_);
  return !s.exited;
}

TubeEstimate estimate_tube_prob(const sde::Dynamics& dynamics, const sde::IntegratorConfig& cfg,
                                const EnsembleOptions& opt) {
  if (opt.n_paths < 1000) throw std::invalid_argument("estimate_tube_prob: n_paths must be ≥ 1000");
  const geometry::MetricChart* chart = dynamics.process() == sde::Process::BM ? nullptr : &dynamics.chart();
  TubeEstimate e;
  e.warnings = cfg.validate(chart);
  const TubeKernel kernel(dynamics, cfg);
  const auto run = run_ensemble(kernel, opt);
  const auto& r = run.result;
  e.process = dynamics.process();
  e.conditioning = r.conditioning;
  e.p_hat = r.p_hat;
  e.se = r.se;
  e.log_p = r.log_p;
  e.rel_se = r.rel_se;
  e.n_paths = r.n_paths;
  e.n_survive = r.n_survive;
  e.delta = cfg.delta;
  e.dt = cfg.step();
  e.T = cfg.T;
  e.bridge_correction = cfg.bridge_correction;
  e.batch_log_p = r.batch_log_p;
  if (r.conditioning == Conditioning::rejection && r.n_survive < 100) {
    e.warnings.push_back("insufficient survivors: " + std::to_string(r.n_survive) + " < 100");
  }
  if (r.conditioning == Conditioning::resampling) {
    const auto dead = std::count_if(r.batch_log_p.begin(), r.batch_log_p.end(), [](double l) { return !std::isfinite(l); });
    if (dead > 0) e.warnings.push_back(std::to_string(dead) + " resampling batches died out");
  }
  return e;
}

RatioResult estimate_ratio(const geometry::ChartPtr& chart, const om::DriftField& field, const RatioConfig& cfg) {
  if (!chart) throw std::invalid_argument("estimate_ratio: null chart");
  const geometry::CurveSpec& curve = chart->curve();
  const int d = chart->dim();
  const double T = curve.duration();
  RatioResult out;
  out.shared_stream = chart->flat() && field.is_zero() && curve.is_constant();

  EnsembleOptions opt;
  opt.n_paths = cfg.n_paths;
  opt.conditioning = cfg.conditioning.value_or(automatic_conditioning(d, cfg.delta, T));
  opt.batches = cfg.batches;
  opt.execution = cfg.execution;

  sde::IntegratorConfig ic;
  ic.T = T;
  ic.dt = cfg.dt;
  ic.scheme = cfg.scheme;
  ic.delta = cfg.delta;
  ic.bridge_correction = cfg.bridge_correction;
  ic.seed = cfg.seed;
  ic.allow_coarse_dt = cfg.allow_coarse_dt;

  const sde::Dynamics numerator(sde::Process::X, chart, field, curve, cfg.scheme);
  ic.stream = Stream::primary;
  out.numerator = estimate_tube_prob(numerator, ic, opt);

  const sde::Dynamics denominator = sde::Dynamics::brownian(d, cfg.scheme);
  ic.stream = out.shared_stream ? Stream::primary : Stream::reference;
  out.denominator = estimate_tube_prob(denominator, ic, opt);

  if (out.numerator.n_survive == 0 || out.denominator.n_survive == 0) {
    std::ostringstream os;
    os << "no surviving paths (numerator " << out.numerator.n_survive << ", denominator "
       << out.denominator.n_survive << ") at delta=" << cfg.delta;
    throw EstimationError(os.str());
  }
  out.action = om::om_action(*chart, field, curve);
  out.predicted = std::exp(-out.action.value);
  out.ratio = std::exp(out.numerator.log_p - out.denominator.log_p);
  out.ratio_se = out.shared_stream ? 0.0 : out.ratio * std::hypot(out.numerator.rel_se, out.denominator.rel_se);
  if (out.ratio_se > 0.0) {
    out.z_score = (out.ratio - out.predicted) / out.ratio_se;
  } else {
    out.z_score = out.ratio == out.predicted ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), out.ratio - out.predicted);
  }
  return out;
}

// ---------------------------------------------------------------------------

Extrapolation extrapolate_ratio(const std::vector<RatioPoint>& points) {
  const auto n = static_cast<int>(points.size());
  if (n < 3) throw std::invalid_argument("extrapolate_ratio: need at least 3 delta values");
  bool any_zero_se = false, all_zero_se = true;
  for (const auto& p : points) {
    if (!(p.delta > 0.0) || !(p.ratio > 0.0) || !std::isfinite(p.ratio)) {
      throw std::invalid_argument("extrapolate_ratio: deltas and ratios must be positive and finite");
    }
    any_zero_se |= !(p.ratio_se > 0.0);
    all_zero_se &= !(p.ratio_se > 0.0);
  }
  const bool weighted = !any_zero_se;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n), w(n), sigma(n);
  for (int i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, 1) = std::sqrt(p.delta);
    X(i, 2) = p.delta;
    y(i) = std::log(p.ratio);
    sigma(i) = p.ratio_se / p.ratio;
    w(i) = weighted ? 1.0 / (sigma(i) * sigma(i)) : 1.0;
  }
  const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
  const Eigen::Matrix3d normal = XtW * X;
  const Eigen::Vector3d coef = normal.ldlt().solve(XtW * y);
  Extrapolation e;
  e.log_limit = coef(0);
  e.limit = std::exp(coef(0));
  e.a = coef(1);
  e.b = coef(2);
  const Eigen::VectorXd res = y - X * coef;
  e.residual = (res.array().square() * w.array()).sum();
  if (weighted) {
    const Eigen::Matrix3d cov = normal.inverse();
    e.limit_se = e.limit * std::sqrt(std::max(0.0, cov(0, 0)));
  }

  std::vector<std::string> notes;
  if (any_zero_se && !all_zero_se) notes.push_back("some points have zero SE; unweighted fit");
  if (weighted) {
    // SEs should not shrink as delta decreases; when they jump around and
    // the extrapolation amplifies them strongly the limit is fragile.
    std::vector<std::pair<double, double>> by_delta;
    for (int i = 0; i < n; ++i) by_delta.emplace_back(points[static_cast<std::size_t>(i)].delta, sigma(i));
    std::sort(by_delta.begin(), by_delta.end());
    bool monotone_up = true, monotone_down = true;
    for (std::size_t i = 1; i < by_delta.size(); ++i) {
      monotone_up &= by_delta[i].second >= by_delta[i - 1].second;
      monotone_down &= by_delta[i].second <= by_delta[i - 1].second;
    }
    const double min_sigma = sigma.minCoeff();
    const double amplification = (e.limit_se / e.limit) / min_sigma;
    if (!monotone_up && !monotone_down && amplification > 20.0) {
      notes.push_back("non-monotone SEs with amplification " + std::to_string(amplification));
    }
    if (n > 3 && stats::chi_square_cdf(e.residual, n - 3) > 0.99) notes.push_back("poor fit (chi-square p < 0.01)");
  }
  e.low_confidence = !notes.empty() && !all_zero_se;
  for (const auto& s : notes) e.note += (e.note.empty() ? "" : "; ") + s;
  return e;
}

Extrapolation extrapolate_ratio(const std::vector<RatioResult>& results) {
  std::vector<RatioPoint> points;
  for (const auto& r : results) points.push_back({r.numerator.delta, r.ratio, r.ratio_se});
  return extrapolate_ratio(points);
}

double bootstrap_ratio_se(const RatioResult& r, int resamples, std::uint64_t seed) {
  if (resamples < 2) throw std::invalid_argument("bootstrap_ratio_se: need at least 2 resamples");
  std::mt19937_64 gen(seed);
  auto draw = [&gen](const TubeEstimate& e) {
    if (e.conditioning == Conditioning::rejection) {
      std::binomial_distribution<std::size_t> bin(e.n_paths, e.p_hat);
      return std::log(static_cast<double>(bin(gen)) / static_cast<double>(e.n_paths));
    }
    const auto B = e.batch_log_p.size();
    std::uniform_int_distribution<std::size_t> pick(0, B - 1);
    double m = -std::numeric_limits<double>::infinity();
    for (double l : e.batch_log_p) m = std::max(m, l);
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i) s += std::exp(e.batch_log_p[pick(gen)] - m);
    return m + std::log(s / static_cast<double>(B));
  };
  std::vector<double> ratios(static_cast<std::size_t>(resamples));
  for (auto& x : ratios) x = std::exp(draw(r.numerator) - draw(r.denominator));
  return std::sqrt(stats::sample_variance(ratios));
}

void write_json(std::ostream& out, const RatioResult& r) { out << to_json(r).dump(2) << '\n'; }

void write_csv(std::ostream& out, const std::vector<RatioResult>& rows) {
  out << "delta,dt,T,paths,conditioning,num_p,num_se,num_survive,den_p,den_se,den_survive,ratio,ratio_se,predicted,z_score\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    out << r.numerator.delta << ',' << r.numerator.dt << ',' << r.numerator.T << ',' << r.numerator.n_paths << ','
        << to_string(r.numerator.conditioning) << ',' << r.numerator.p_hat << ',' << r.numerator.se << ','
        << r.numerator.n_survive << ',' << r.denominator.p_hat << ',' << r.denominator.se << ','
        << r.denominator.n_survive << ',' << r.ratio << ',' << r.ratio_se << ',' << r.predicted << ',' << r.z_score
        << '\n';
  }
  out.precision(old);
}

}  // namespace omtube::mc

namespace omtube::mc {

GirsanovWeightEstimate estimate_girsanov_weight(const coupling::CoupledEnsemble& ensemble) {
  using namespace coupling;
  const auto& res = ensemble.result;
  if (res.row_count() < 100) {
    throw EstimationError("estimate_girsanov_weight: " + std::to_string(res.row_count()) + " surviving paths (< 100)");
  }
  GirsanovWeightEstimate w;
  w.delta = ensemble.config.delta;
  w.n_survive = res.row_count();
  const auto weight = res.conditional_mean([](std::span<const double> r) { return std::exp(r[obs_M] + r[obs_L]); });
  w.mean_weight = weight.mean;
  w.se = weight.se;
  w.M = res.conditional_mean(obs_M);
  w.L = res.conditional_mean(obs_L);
  w.L_tilde = res.conditional_mean(obs_L_tilde);
  for (std::size_t i = 0; i < res.row_count(); ++i) w.max_abs_L = std::max(w.max_abs_L, std::abs(res.row(i)[obs_L]));
  w.jensen_lower = std::exp(res.conditional_mean([](std::span<const double> r) { return r[obs_M] + r[obs_L]; }).mean);
  // same convex weights on both sides, so only rounding can break it
  w.jensen_holds = w.jensen_lower <= w.mean_weight * (1.0 + 1e-12);
  const double q = 1.0 - 2.0 * std::sqrt(w.delta);
  w.p_holder = q > 0.0 ? 1.0 / q : std::numeric_limits<double>::infinity();
  if (std::isfinite(w.p_holder)) {
    const double p = w.p_holder;
    const auto m = res.conditional_mean([p](std::span<const double> r) {
      return std::exp(martingale_Mp(r[obs_ito], r[obs_bracket], p) + p * r[obs_L]);
    });
    w.holder_weight = std::pow(m.mean, 1.0 / p);
  } else {
    w.holder_weight = std::numeric_limits<double>::quiet_NaN();
  }
  return w;
}

MomentTable conditional_moment_experiment(const geometry::ChartPtr& chart, const om::DriftField& field,
                                          const std::vector<double>& deltas, double c,
                                          const coupling::CouplingConfig& base, const EnsembleOptions& opt) {
  if (deltas.empty()) throw std::invalid_argument("conditional_moment_experiment: empty delta list");
  MomentTable table;
  for (double delta : deltas) {
    coupling::CouplingConfig cfg = base;
    cfg.delta = delta;
    cfg.dt = std::min(base.dt, delta * delta / 50.0);
    const auto e = coupling::run_coupled(chart, field, cfg, opt);
    if (e.result.row_count() == 0) {
      throw EstimationError("conditional_moment_experiment: no survivors at delta=" + std::to_string(delta));
    }
    const double k = c / std::sqrt(delta);
    const auto m = e.result.conditional_mean(
        [k](std::span<const double> r) { return std::exp(k * r[coupling::obs_dev_T]); });
    table.rows.push_back({delta, c, e.dt, m.mean, m.se, e.result.log_p, e.result.row_count()});
  }
  table.bounded = true;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    table.max_mean = std::max(table.max_mean, table.rows[i].mean);
    if (i == 0) continue;
    const auto& a = table.rows[i - 1];
    const auto& b = table.rows[i];
    if (b.mean - a.mean > 3.0 * std::hypot(a.se, b.se)) table.bounded = false;
  }
  return table;
}

void write_json(std::ostream& out, const GirsanovWeightEstimate& w) { out << to_json(w).dump(2) << '\n'; }

void write_csv(std::ostream& out, const MomentTable& table) {
  out << "delta,c,dt,mean,se,log_p,survivors\n";
  const auto old = out.precision(17);
  for (const auto& r : table.rows) {
    out << r.delta << ',' << r.c << ',' << r.dt << ',' << r.mean << ',' << r.se << ',' << r.log_p << ','
        << r.n_survive << '\n';
  }
  out.precision(old);
}

}  // namespace omtube::mc
