#pragma once

#include "omtube/ensemble.hpp"
#include "omtube/geometry.hpp"
#include "omtube/om.hpp"
#include "omtube/sde.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace omtube::coupling {

using geometry::ChartPtr;

class CouplingDriftError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Isometries J^i : R^d → R^n, n = 1 + d(d−1)/2, with basis e₀ (index 0)
/// and e_{iα} (i < α, lexicographic from index 1).
struct JMaps {
  int d = 0;
  int n = 0;
  std::vector<Eigen::MatrixXd> J;  // d matrices, each n × d

  /// Index of e_{iα} for 0-based i < α.
  int pair_index(int i, int alpha) const;
  /// Columns J^i u (n × d).
  Eigen::MatrixXd columns(const Vec& u) const;
  /// Σ_i u^i J^i u.
  Eigen::VectorXd contracted(const Vec& u) const;
};

JMaps build_J(int d);

/// Noise dimension for dimension d.
inline int noise_dim(int d) { return 1 + d * (d - 1) / 2; }

/// dB^i = ⟨J^i u, dW⟩, evaluated from the sparse structure:
/// u^i dW₀ + Σ_{α>i} u^α dW_{iα} − Σ_{α<i} u^α dW_{αi}.
Vec apply_J(const Vec& u, const NoiseVec& dW);

/// Maximum deviations of the three J-map properties over `trials` random
/// vectors: isometry, orthonormality of {J^i u} for unit u, and
/// Σ u^i J^i u = |u|² e₀.
struct JMapCheck {
  double isometry = 0.0;
  double orthonormality = 0.0;
  double contraction = 0.0;
  double max() const { return std::max({isometry, orthonormality, contraction}); }
};
JMapCheck check_jmaps(int d, int trials, std::uint64_t seed);

/// H = |(σ−I)(U−Ũ)| / R² and G = tr((σ−I)²) / R⁴ at Y = R U.
double H_of(const Mat& sigma_minus_identity, double R, const Vec& U, const Vec& U_tilde);
double G_of(const Mat& sigma_minus_identity, double R);
double H_of(const geometry::MetricChart& chart, double t, double R, const Vec& U, const Vec& U_tilde);
double G_of(const geometry::MetricChart& chart, double t, double R, const Vec& U);

/// ω = U⊗Ũ − Ũ⊗U + ⟨U,Ũ⟩ I, with (a⊗b)v = a⟨b,v⟩. Not used by the
/// simulation; exposed for the identities ωŨ = U and ωᵀ + ω = 2⟨U,Ũ⟩I.
Mat omega_matrix(const Vec& U, const Vec& U_tilde);

/// Stratonovich midpoint increment of the Lévy areas:
/// ΔA^{ij} = Ȳ^i ΔY^j − Ȳ^j ΔY^i.
void levy_area_update(Mat& A, const Vec& y_old, const Vec& y_new);

/// One Euler step of d⟨U,Ũ⟩ = R H dW₁ − ½ R² G ⟨U,Ũ⟩ dt.
double inner_product_sde_step(double uu, double R, double H, double G, double dW1, double dt);

/// M_p = p I − (p²/2) Q from the Itô integral I = Σ α_ij ΔA^{ij} and the
/// realized bracket Q = Σ (α_ij ΔA^{ij})².
inline double martingale_Mp(double ito, double bracket, double p) { return p * ito - 0.5 * p * p * bracket; }

/// Radial coincidence tolerance 50 √dt δ.
inline double tol_radial(double dt, double delta) { return 50.0 * std::sqrt(dt) * delta; }

struct CouplingConfig {
  double T = 0.5;
  double dt = 1e-5;
  double delta = 0.2;
  bool bridge_correction = false;
  std::uint64_t seed = 1;
  Stream stream = Stream::primary;
  bool allow_coarse_dt = false;
  /// Throw CouplingDriftError when the radial gap exceeds tol_radial.
  bool strict = false;
  /// Accumulate the Stratonovich line and area integrals of α.
  bool track_stokes = false;
};

/// Per-step diagnostics, reduced by max / sum so any schedule gives the
/// same totals. Each path carries its own copy; in resampling mode copies
/// of a survivor share its history, so counts are per recorded path.
struct StepDiagnostics {
  double gap_max = 0.0;
  std::size_t gap_violations = 0;
  std::size_t H2_le_G_violations = 0;
  std::size_t evaluated_states = 0;
  double G_max = 0.0;
  double radial_identity_max = 0.0;  // |(σ−I)U|
  double dW0_identity_max = 0.0;     // max |⟨U,dB⟩ − dW₀|, |⟨Ũ,dB̃⟩ − dW₀|
  double nu_bound_excess = -std::numeric_limits<double>::infinity();  // max ν − (e^{∫R²G} − 1)
};
void merge(StepDiagnostics& a, const StepDiagnostics& b);

/// Coupled pair (Y, Ỹ): Y follows the Besselized chart SDE driven by
/// dB = ⟨JU, dW⟩, Ỹ is Euclidean Brownian motion driven by dB̃ = ⟨JŨ, dW⟩.
struct CoupledState {
  Vec Y, Y_tilde;
  Vec U, U_tilde;
  double R = 0.0;  // |Y|
  double t = 0.0;
  Mat A;           // Lévy areas of Y
  double Delta = 0.0;
  double nu = 0.0;
  double G_int = 0.0;  // ∫ R² G ds
  double ito = 0.0;     // Σ α_ij(left) ΔA^{ij}
  double bracket = 0.0; // Σ (α_ij ΔA^{ij})²
  double L = 0.0;
  double L_tilde = 0.0;
  double uu = 1.0;       // ⟨U,Ũ⟩ simulated
  double uu_pred = 1.0;  // ⟨U,Ũ⟩ from the inner-product SDE
  double sup_dev = 0.0;  // sup |U − Ũ|
  double covariation = 0.0;  // Σ ΔA^{12} Δ|Y|
  double strat_line = 0.0;
  double strat_area = 0.0;
  double gap_max = 0.0;
  bool launched = false;
  bool exited = false;
  StepDiagnostics diag;

  double M() const { return martingale_Mp(ito, bracket, 1.0); }
  double Mp(double p) const { return martingale_Mp(ito, bracket, p); }
};

/// Column order of the observation rows produced by CoupledKernel.
enum Obs : int {
  obs_M = 0,
  obs_ito,
  obs_bracket,
  obs_L,
  obs_L_tilde,
  obs_dev_T,  // |U(T) − Ũ(T)|
  obs_sup_dev,
  obs_Delta,
  obs_nu,
  obs_G_int,
  obs_uu,
  obs_uu_pred,
  obs_covariation,
  obs_strat_line,
  obs_closing,
  obs_strat_area,
  obs_gap_max,
  obs_R_T,
  obs_count
};

class CoupledKernel {
 public:
  using State = CoupledState;
  using Stats = StepDiagnostics;

  CoupledKernel(ChartPtr chart, om::DriftField field, const CouplingConfig& cfg);

  int steps() const { return steps_; }
  int observables() const { return obs_count; }
  std::uint64_t seed() const { return cfg_.seed; }
  Stream stream() const { return cfg_.stream; }
  double step_size() const { return h_; }
  const CouplingConfig& config() const { return cfg_; }
  const om::GirsanovForms& forms() const { return forms_; }

  void start(State& s, std::uint64_t key) const;
  bool advance(State& s, int step, std::uint64_t key) const;
  void observe(const State& s, double* out) const;
  /// Folds the path's accumulated step diagnostics into `st`.
  void record(Stats& st, const State& s) const { coupling::merge(st, s.diag); }
  static void merge(Stats& a, const Stats& b) { coupling::merge(a, b); }

  /// Closing-segment integral −∫₀¹ α(T, sY)·Y ds.
  double closing_segment(double t, const Vec& y) const;

 private:
  ChartPtr chart_;
  om::GirsanovForms forms_;
  sde::Dynamics dynamics_;
  CouplingConfig cfg_;
  sde::IntegratorConfig exit_cfg_;
  const geometry::IsotropicChart* isotropic_ = nullptr;
  int d_, n_;
  int steps_;
  double h_, sqrt_h_;
};

/// Ensemble of coupled paths. Per-step diagnostics (gap, H² ≤ G, identities)
/// cover every evaluated state, including those of paths that later exit.
struct CoupledEnsemble {
  mc::EnsembleResult result;
  StepDiagnostics diagnostics;
  CouplingConfig config;
  double dt = 0.0;  // effective step
};

CoupledEnsemble run_coupled(ChartPtr chart, om::DriftField field, const CouplingConfig& cfg,
                            const mc::EnsembleOptions& opt);

/// Conditional tail P_δ(λ) = P[sup |U−Ũ|/√δ > λ | survive] on a λ grid,
/// with the Gaussian bound 2P[N > Kλ²] using the largest K consistent with
/// all nonzero tail estimates, and the slope of log P_δ vs λ².
struct DeltaTail {
  std::vector<double> lambda;
  std::vector<double> p;
  std::vector<double> se;
  std::vector<double> bound;
  double K = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
};
DeltaTail delta_tail_estimate(const CoupledEnsemble& ensemble, const std::vector<double>& lambdas);

/// Line and area forms of the Stokes identity along a chart path:
/// line = Σ α(t̄, Ȳ)·ΔY − ∫₀¹ α(T, sY_T)·Y_T ds, area = Σ α_ij(t̄, Ȳ) ΔA^{ij}.
struct StokesResult {
  double line = 0.0;
  double closing = 0.0;
  double area = 0.0;
  double residual() const { return line + closing - area; }
};
StokesResult stokes_consistency(const std::vector<double>& times, const std::vector<Vec>& states,
                                const om::GirsanovForms& forms);

/// One CSV row per ensemble: delta, dt, paths, survivors, radial_gap_max,
/// orthogonality_stat, H2_le_G_violations, delta-tail quantiles.
void write_diagnostic_csv_header(std::ostream& out);
void write_diagnostic_csv_row(std::ostream& out, const CoupledEnsemble& e);

}  // namespace omtube::coupling
