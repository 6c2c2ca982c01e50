#include "omtube/coupling.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace omtube::coupling {

int JMaps::pair_index(int i, int alpha) const {
  // pairs (0,1), (0,2), ..., (0,d-1), (1,2), ... numbered from 1
  return 1 + i * d - i * (i + 1) / 2 + (alpha - i - 1);
}

Eigen::MatrixXd JMaps::columns(const Vec& u) const {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < d; ++i) m.col(i) = J[static_cast<std::size_t>(i)] * u;
  return m;
}

Eigen::VectorXd JMaps::contracted(const Vec& u) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < d; ++i) v += u[i] * (J[static_cast<std::size_t>(i)] * u);
  return v;
}

JMaps build_J(int d) {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("build_J: dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  JMaps m;
  m.d = d;
  m.n = noise_dim(d);
  m.J.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(m.n, d));
  for (int i = 0; i < d; ++i) {
    auto& J = m.J[static_cast<std::size_t>(i)];
    for (int a = 0; a < d; ++a) {
      if (i < a) J(m.pair_index(i, a), a) = 1.0;
      else if (i == a) J(0, a) = 1.0;
      else J(m.pair_index(a, i), a) = -1.0;
    }
  }
  return m;
}

Vec apply_J(const Vec& u, const NoiseVec& dW) {
  const int d = static_cast<int>(u.size());
  Vec dB(d);
  for (int i = 0; i < d; ++i) dB[i] = u[i] * dW[0];
  int idx = 1;
  for (int i = 0; i < d; ++i) {
    for (int a = i + 1; a < d; ++a, ++idx) {
      dB[i] += u[a] * dW[idx];
      dB[a] -= u[i] * dW[idx];
    }
  }
  return dB;
}

JMapCheck check_jmaps(int d, int trials, std::uint64_t seed) {
  const JMaps m = build_J(d);
  JMapCheck c;
  for (int i = 0; i < d; ++i) {
    const auto& J = m.J[static_cast<std::size_t>(i)];
    c.isometry = std::max(c.isometry, (J.transpose() * J - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
  }
  for (int k = 0; k < trials; ++k) {
    CounterRng rng(seed, Stream::test, static_cast<std::uint64_t>(k), 0);
    Vec u(d);
    for (int i = 0; i < d; ++i) u[i] = rng.normal();
    Eigen::VectorXd target = Eigen::VectorXd::Zero(m.n);
    target[0] = u.squaredNorm();
    c.contraction = std::max(c.contraction, (m.contracted(u) - target).cwiseAbs().maxCoeff());
    u.normalize();
    const Eigen::MatrixXd cols = m.columns(u);
    c.orthonormality =
        std::max(c.orthonormality, (cols.transpose() * cols - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
  }
  return c;
}

double H_of(const Mat& smi, double R, const Vec& U, const Vec& U_tilde) {
  return (smi * (U - U_tilde)).norm() / (R * R);
}

double G_of(const Mat& smi, double R) { return (smi * smi).trace() / (R * R * R * R); }

double H_of(const geometry::MetricChart& chart, double t, double R, const Vec& U, const Vec& U_tilde) {
  if (!(R > 0.0)) throw std::domain_error("H_of: R must be positive");
  return H_of(chart.sigma_minus_identity(t, R * U), R, U, U_tilde);
}

double G_of(const geometry::MetricChart& chart, double t, double R, const Vec& U) {
  if (!(R > 0.0)) throw std::domain_error("G_of: R must be positive");
  return G_of(chart.sigma_minus_identity(t, R * U), R);
}

Mat omega_matrix(const Vec& U, const Vec& Ut) {
  const int d = static_cast<int>(U.size());
  return U * Ut.transpose() - Ut * U.transpose() + U.dot(Ut) * Mat::Identity(d, d);
}

void levy_area_update(Mat& A, const Vec& y_old, const Vec& y_new) {
  const Vec mid = 0.5 * (y_old + y_new);
  const Vec dy = y_new - y_old;
  const int d = static_cast<int>(mid.size());
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double inc = mid[i] * dy[j] - mid[j] * dy[i];
      A(i, j) += inc;
      A(j, i) -= inc;
    }
  }
}

double inner_product_sde_step(double uu, double R, double H, double G, double dW1, double dt) {
  return uu + R * H * dW1 - 0.5 * R * R * G * uu * dt;
}

void merge(StepDiagnostics& a, const StepDiagnostics& b) {
  a.gap_max = std::max(a.gap_max, b.gap_max);
  a.gap_violations += b.gap_violations;
  a.H2_le_G_violations += b.H2_le_G_violations;
  a.evaluated_states += b.evaluated_states;
  a.G_max = std::max(a.G_max, b.G_max);
  a.radial_identity_max = std::max(a.radial_identity_max, b.radial_identity_max);
  a.dW0_identity_max = std::max(a.dW0_identity_max, b.dW0_identity_max);
  a.nu_bound_excess = std::max(a.nu_bound_excess, b.nu_bound_excess);
}

// ---------------------------------------------------------------------------

namespace {

// Σ_ij K_ij ΔA^{ij} over the full index range, K antisymmetric.
double contract_area(const Mat& K, const Vec& mid, const Vec& dy) {
  const int d = static_cast<int>(mid.size());
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) s += 2.0 * K(i, j) * (mid[i] * dy[j] - mid[j] * dy[i]);
  return s;
}

double closing_integral(const om::GirsanovForms& forms, double t, const Vec& y) {
  if (y.norm() == 0.0) return 0.0;
  const auto& gl = om::gauss_legendre(16);
  double s = 0.0;
  for (std::size_t q = 0; q < gl.nodes.size(); ++q) s += gl.weights[q] * forms.alpha(t, gl.nodes[q] * y).dot(y);
  return -s;
}

}  // namespace

CoupledKernel::CoupledKernel(ChartPtr chart, om::DriftField field, const CouplingConfig& cfg)
    : chart_(std::move(chart)),
      forms_(chart_, field, chart_->curve()),
      dynamics_(sde::Process::Y, chart_, om::DriftField::zero(chart_->dim()), chart_->curve()),
      cfg_(cfg),
      d_(chart_->dim()),
      n_(noise_dim(chart_->dim())) {
  exit_cfg_.T = cfg.T;
  exit_cfg_.dt = cfg.dt;
  exit_cfg_.delta = cfg.delta;
  exit_cfg_.bridge_correction = cfg.bridge_correction;
  exit_cfg_.seed = cfg.seed;
  exit_cfg_.stream = cfg.stream;
  exit_cfg_.allow_coarse_dt = cfg.allow_coarse_dt;
  exit_cfg_.validate(chart_.get());
  if (cfg.T > chart_->curve().duration() * (1.0 + 1e-12)) {
    throw std::invalid_argument("coupling: T exceeds the curve duration");
  }
  steps_ = exit_cfg_.steps();
  h_ = exit_cfg_.step();
  sqrt_h_ = std::sqrt(h_);
  isotropic_ = dynamic_cast<const geometry::IsotropicChart*>(chart_.get());
}

void CoupledKernel::start(State& s, std::uint64_t) const {
  s = State{};
  s.Y = Vec::Zero(d_);
  s.Y_tilde = Vec::Zero(d_);
  s.U = Vec::Zero(d_);
  s.U_tilde = Vec::Zero(d_);
  s.A = Mat::Zero(d_, d_);
}

bool CoupledKernel::advance(State& s, int step, std::uint64_t key) const {
  const double t = step * h_;
  const double tm = t + 0.5 * h_;
  CounterRng rng(cfg_.seed, cfg_.stream, key, static_cast<std::uint64_t>(step));
  const Vec y_old = s.Y;
  const double R_old = s.R;

  if (!s.launched) {
    // plain Gaussian launch step: σ(0) = I, c(0) = 0, U = Ũ
    Vec dB(d_);
    for (int i = 0; i < d_; ++i) dB[i] = sqrt_h_ * rng.normal();
    s.Y = dB;
    s.Y_tilde = dB;
    s.R = dB.norm();
    if (!(s.R > 0.0)) throw geometry::NumericError("coupling launch step has zero length");
    s.U = s.Y / s.R;
    s.U_tilde = s.U;
    s.launched = true;
    if (cfg_.track_stokes && !forms_.kernel_vanishes()) {
      const Vec mid = 0.5 * (y_old + s.Y);
      s.strat_line += forms_.alpha(tm, mid).dot(s.Y - y_old);
    }
  } else {
    NoiseVec dW(n_);
    for (int i = 0; i < n_; ++i) dW[i] = sqrt_h_ * rng.normal();
    const Vec& U = s.U;
    const Vec& Ut = s.U_tilde;
    const double R = s.R;
    const Vec dB = apply_J(U, dW);
    const Vec dBt = apply_J(Ut, dW);
    s.diag.dW0_identity_max =
        std::max({s.diag.dW0_identity_max, std::abs(U.dot(dB) - dW[0]), std::abs(Ut.dot(dBt) - dW[0])});

    // (σ − I) applied to U and Ũ, and tr((σ − I)²)
    Vec smi_U, smi_Ut;
    double tr2;
    if (isotropic_) {
      const double rm1 = isotropic_->transverse_sigma_minus_one(R);
      smi_U = rm1 * (U - U * U.squaredNorm());
      smi_Ut = rm1 * (Ut - U * U.dot(Ut));
      tr2 = (d_ - 1) * rm1 * rm1;
    } else {
      const Mat smi = chart_->sigma_minus_identity(t, s.Y);
      smi_U = smi * U;
      smi_Ut = smi * Ut;
      tr2 = (smi * smi).trace();
    }
    const double R2 = R * R;
    const double H = (smi_U - smi_Ut).norm() / R2;
    const double G = tr2 / (R2 * R2);
    ++s.diag.evaluated_states;
    if (H * H > G * (1.0 + 1e-12) + 1e-300) ++s.diag.H2_le_G_violations;
    s.diag.G_max = std::max(s.diag.G_max, G);
    s.diag.radial_identity_max = std::max(s.diag.radial_identity_max, smi_U.norm());

    const double scale = R2 * H;
    const double dW1 = scale > 1e-14 ? smi_Ut.dot(dB) / scale : sqrt_h_ * rng.normal();
    s.uu_pred = inner_product_sde_step(s.uu_pred, R, H, G, dW1, h_);

    if (!forms_.beta_vanishes()) {
      s.L += forms_.beta(t, U) * h_;
      s.L_tilde += forms_.beta(t, Ut) * h_;
    }
    s.nu += R2 * H * H * std::exp(s.G_int) * h_;
    s.G_int += R2 * G * h_;

    dynamics_.step(t, s.Y, dB, h_);
    s.Y_tilde += dBt;

    const Vec mid = 0.5 * (y_old + s.Y);
    const Vec dy = s.Y - y_old;
    if (!forms_.kernel_vanishes()) {
      const double a = contract_area(forms_.kernel(t, y_old), mid, dy);
      s.ito += a;
      s.bracket += a * a;
      if (cfg_.track_stokes) {
        s.strat_line += forms_.alpha(tm, mid).dot(dy);
        s.strat_area += contract_area(forms_.kernel(tm, mid), mid, dy);
      }
    }
    if (d_ >= 2) s.covariation += (mid[0] * dy[1] - mid[1] * dy[0]) * (s.Y.norm() - R_old);
    levy_area_update(s.A, y_old, s.Y);

    s.R = s.Y.norm();
    const double Rt = s.Y_tilde.norm();
    if (!std::isfinite(s.R) || !(s.R > 0.0) || !(Rt > 0.0)) throw geometry::NumericError("coupled state degenerate");
    s.U = s.Y / s.R;
    s.U_tilde = s.Y_tilde / Rt;
    s.uu = s.U.dot(s.U_tilde);
    s.Delta = (1.0 - s.uu) * std::exp(0.5 * s.G_int);
    s.sup_dev = std::max(s.sup_dev, (s.U - s.U_tilde).norm());
    s.diag.nu_bound_excess = std::max(s.diag.nu_bound_excess, s.nu - std::expm1(s.G_int));

    const double gap = std::abs(s.R - Rt);
    s.gap_max = std::max(s.gap_max, gap);
    s.diag.gap_max = std::max(s.diag.gap_max, gap);
    if (gap > tol_radial(h_, cfg_.delta)) {
      ++s.diag.gap_violations;
      if (cfg_.strict) {
        std::ostringstream os;
        os << "radial gap " << gap << " exceeds tol_radial " << tol_radial(h_, cfg_.delta) << " at t=" << t + h_;
        throw CouplingDriftError(os.str());
      }
    }
  }
  s.t = t + h_;
  s.exited = sde::step_exits(exit_cfg_, key, static_cast<std::uint64_t>(step), R_old, s.R, h_);
  return !s.exited;
}

double CoupledKernel::closing_segment(double t, const Vec& y) const { return closing_integral(forms_, t, y); }

void CoupledKernel::observe(const State& s, double* out) const {
  out[obs_M] = s.M();
  out[obs_ito] = s.ito;
  out[obs_bracket] = s.bracket;
  out[obs_L] = s.L;
  out[obs_L_tilde] = s.L_tilde;
  out[obs_dev_T] = (s.U - s.U_tilde).norm();
  out[obs_sup_dev] = s.sup_dev;
  out[obs_Delta] = s.Delta;
  out[obs_nu] = s.nu;
  out[obs_G_int] = s.G_int;
  out[obs_uu] = s.uu;
  out[obs_uu_pred] = s.uu_pred;
  out[obs_covariation] = s.covariation;
  out[obs_strat_line] = s.strat_line;
  out[obs_closing] = cfg_.track_stokes && !forms_.kernel_vanishes() ? closing_segment(s.t, s.Y) : 0.0;
  out[obs_strat_area] = s.strat_area;
  out[obs_gap_max] = s.gap_max;
  out[obs_R_T] = s.R;
}

CoupledEnsemble run_coupled(ChartPtr chart, om::DriftField field, const CouplingConfig& cfg,
                            const mc::EnsembleOptions& opt) {
  const CoupledKernel kernel(std::move(chart), std::move(field), cfg);
  auto run = mc::run_ensemble(kernel, opt);
  CoupledEnsemble e;
  e.result = std::move(run.result);
  e.diagnostics = run.stats;
  e.config = cfg;
  e.dt = kernel.step_size();
  return e;
}

// ---------------------------------------------------------------------------

DeltaTail delta_tail_estimate(const CoupledEnsemble& ensemble, const std::vector<double>& lambdas) {
  const auto& r = ensemble.result;
  if (r.row_count() < 100) {
    throw mc::EstimationError("delta_tail_estimate: " + std::to_string(r.row_count()) + " surviving paths < 100");
  }
  const double sd = std::sqrt(ensemble.config.delta);
  DeltaTail out;
  std::vector<double> x, y;
  double K = std::numeric_limits<double>::infinity();
  for (double lam : lambdas) {
    if (!(lam > 0.0)) throw std::invalid_argument("delta_tail_estimate: lambda must be positive");
    const auto m = r.conditional_mean([&](std::span<const double> row) { return row[obs_sup_dev] / sd > lam ? 1.0 : 0.0; });
    out.lambda.push_back(lam);
    out.p.push_back(m.mean);
    out.se.push_back(m.se);
    if (m.mean > 0.0) {
      x.push_back(lam * lam);
      y.push_back(std::log(m.mean));
      const double z = std::sqrt(2.0) * boost::math::erfc_inv(std::min(1.0, m.mean));  // 2 P[N > z] = p
      K = std::min(K, z / (lam * lam));
    }
  }
  out.K = std::isfinite(K) ? K : 0.0;
  for (double lam : out.lambda) out.bound.push_back(std::min(1.0, 2.0 * stats::normal_tail(out.K * lam * lam)));
  if (x.size() >= 2) {
    const auto fit = stats::fit_line(x, y);
    out.slope = fit.slope;
    double sxx = 0.0, mx = 0.0, rss = 0.0;
    for (double v : x) mx += v / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      const double e = y[i] - fit.intercept - fit.slope * x[i];
      rss += e * e;
    }
    out.slope_se = x.size() > 2 ? std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx) : 0.0;
  }
  return out;
}

StokesResult stokes_consistency(const std::vector<double>& times, const std::vector<Vec>& states,
                                const om::GirsanovForms& forms) {
  if (times.size() != states.size() || states.size() < 2) {
    throw std::invalid_argument("stokes_consistency: need matching times and states (≥ 2)");
  }
  StokesResult out;
  if (forms.kernel_vanishes()) return out;
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    const double tm = 0.5 * (times[k] + times[k + 1]);
    const Vec mid = 0.5 * (states[k] + states[k + 1]);
    const Vec dy = states[k + 1] - states[k];
    out.line += forms.alpha(tm, mid).dot(dy);
    out.area += contract_area(forms.kernel(tm, mid), mid, dy);
  }
  out.closing = closing_integral(forms, times.back(), states.back());
  return out;
}

void write_diagnostic_csv_header(std::ostream& out) {
  out << "delta,dt,paths,survivors,radial_gap_max,orthogonality_stat,H2_le_G_violations,tail_q50,tail_q90,tail_q99\n";
}

void write_diagnostic_csv_row(std::ostream& out, const CoupledEnsemble& e) {
  const auto& r = e.result;
  double orth = 0.0;
  std::vector<double> tail;
  if (r.row_count() > 1) {
    const auto m = r.conditional_mean(obs_covariation);
    orth = m.se > 0 ? m.mean / m.se : 0.0;
    const double sd = std::sqrt(e.config.delta);
    for (std::size_t i = 0; i < r.row_count(); ++i) tail.push_back(r.row(i)[obs_sup_dev] / sd);
    std::sort(tail.begin(), tail.end());
  }
  auto q = [&](double p) {
    if (tail.empty()) return 0.0;
    return tail[std::min(tail.size() - 1, static_cast<std::size_t>(p * static_cast<double>(tail.size())))];
  };
  const auto old = out.precision(17);
  out << e.config.delta << ',' << e.dt << ',' << r.n_paths << ',' << r.n_survive << ',' << e.diagnostics.gap_max << ','
      << orth << ',' << e.diagnostics.H2_le_G_violations << ',' << q(0.5) << ',' << q(0.9) << ',' << q(0.99) << '\n';
  out.precision(old);
}

}  // namespace omtube::coupling
