#include "omtube/cli.hpp"

#include "omtube/json_io.hpp"
#include "omtube/sde.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <list>
#include <optional>
#include <sstream>

#ifndef OMTUBE_VERSION
#define OMTUBE_VERSION "unknown"
#endif

namespace omtube::cli {

const char* version() { return OMTUBE_VERSION; }

namespace {

const std::vector<std::string> kSubcommands = {"jmap-check", "expansions", "smallball", "ratio",
                                               "couple",     "weight",     "moment"};

// Every configurable field except the subcommand, in file order.
template <class Config, class F>
void for_each_field(Config& c, F&& f) {
  f("model", c.model);
  f("dim", c.dim);
  f("radius", c.radius);
  f("curvature-scale", c.curvature_scale);
  f("warp-coefficients", c.warp_coefficients);
  f("warp-weights", c.warp_weights);
  f("curve", c.curve);
  f("curve-steps", c.curve_steps);
  f("field", c.field);
  f("T", c.T);
  f("delta", c.deltas);
  f("dt", c.dt);
  f("paths", c.paths);
  f("seed", c.seed);
  f("tube-radius", c.tube_radius);
  f("conditioning", c.conditioning);
  f("batches", c.batches);
  f("bridge", c.bridge);
  f("allow-coarse-dt", c.allow_coarse_dt);
  f("scheme", c.scheme);
  f("serial", c.serial);
  f("trials", c.trials);
  f("radii", c.radii);
  f("c", c.c);
  f("lambdas", c.lambdas);
  f("strict", c.strict);
  f("track-stokes", c.track_stokes);
  f("json", c.json_out);
  f("csv", c.csv_out);
  f("dump", c.dump);
  f("dump-paths", c.dump_paths);
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format_value(const std::string& s) { return '"' + s + '"'; }
std::string format_value(bool b) { return b ? "true" : "false"; }
std::string format_value(double x) { return format_double(x); }
template <class I>
  requires std::integral<I>
std::string format_value(I x) {
  return std::to_string(x);
}
// Lists travel as quoted comma-separated text so that an empty list
// survives the file round trip.
std::string format_value(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return '"' + s + '"';
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::vector<double> parse_numbers(const std::string& field, const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  for (const auto& tok : split(text, ',')) {
    double x = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    while (b < e && *b == ' ') ++b;
    const auto res = std::from_chars(b, e, x);
    if (res.ec != std::errc() || res.ptr != e || !std::isfinite(x)) {
      throw UsageError(field, "cannot parse number '" + tok + "' in '" + text + "'");
    }
    out.push_back(x);
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

Mat to_mat(const std::string& field, const std::vector<double>& v, int d) {
  if (static_cast<int>(v.size()) != d * d) {
    throw UsageError(field, "matrix needs " + std::to_string(d * d) + " entries, got " + std::to_string(v.size()));
  }
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = v[static_cast<std::size_t>(i * d + j)];
  return a;
}

std::pair<std::string, std::string> split_kind(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return {s, ""};
  return {s.substr(0, colon), s.substr(colon + 1)};
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw UsageError(field, message);
}

bool uses_tube(const std::string& sub) { return sub != "jmap-check" && sub != "expansions"; }
bool tube_subcommand(const std::string& sub) { return sub == "smallball" || sub == "ratio"; }

mc::EnsembleOptions ensemble_options(const RunConfig& c, std::optional<mc::Conditioning> conditioning) {
  mc::EnsembleOptions o;
  o.n_paths = c.paths;
  o.conditioning = conditioning.value_or(mc::Conditioning::resampling);
  o.batches = c.batches;
  o.execution = c.serial ? Execution::serial : Execution::parallel;
  return o;
}

std::optional<mc::Conditioning> explicit_conditioning(const RunConfig& c) {
  if (c.conditioning == "auto") return std::nullopt;
  return mc::conditioning_from_string(c.conditioning);
}

coupling::CouplingConfig coupling_config(const RunConfig& c, double delta) {
  coupling::CouplingConfig k;
  k.T = c.T;
  k.dt = c.dt;
  k.delta = delta;
  k.bridge_correction = c.bridge;
  k.seed = c.seed;
  k.allow_coarse_dt = c.allow_coarse_dt;
  k.strict = c.strict;
  k.track_stokes = c.track_stokes;
  return k;
}

nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  j["subcommand"] = c.subcommand;
  for_each_field(c, [&](const char* name, const auto& v) { j[name] = v; });
  return j;
}

struct Artifacts {
  const RunConfig& config;
  nlohmann::json doc;
  std::ostringstream csv;

  explicit Artifacts(const RunConfig& c) : config(c) {
    doc = {{"schema", 1}, {"version", version()}, {"subcommand", c.subcommand}, {"config", config_json(c)}};
    doc["results"] = nlohmann::json::array();
  }

  void write() const {
    if (!config.json_out.empty()) {
      std::ofstream f(config.json_out);
      if (!f) throw UsageError("json", "cannot open " + config.json_out);
      f << doc.dump(2) << '\n';
    }
    if (!config.csv_out.empty()) {
      std::ofstream f(config.csv_out);
      if (!f) throw UsageError("csv", "cannot open " + config.csv_out);
      f << csv.str();
    }
  }
};

void dump_paths(const RunConfig& c, const sde::Dynamics& dyn, double delta) {
  if (c.dump.empty() || c.dump_paths == 0) return;
  sde::IntegratorConfig ic;
  ic.T = c.T;
  ic.dt = c.dt;
  ic.delta = delta;
  ic.bridge_correction = c.bridge;
  ic.seed = c.seed;
  ic.allow_coarse_dt = true;
  ic.scheme = sde::scheme_from_string(c.scheme);
  std::vector<sde::PathSample> paths;
  for (std::size_t p = 0; p < c.dump_paths; ++p) {
    ic.path_index = p;
    paths.push_back(sde::simulate(dyn, ic));
  }
  std::ofstream f(c.dump);
  if (!f) throw UsageError("dump", "cannot open " + c.dump);
  sde::write_ndjson(f, paths, c.dump_paths);
}

geometry::ChartPtr make_chart(const RunConfig& c) {
  return geometry::fermi_chart(make_model(c), make_curve(c), resolved_tube_radius(c));
}

// ---------------------------------------------------------------------------

int run_jmap(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto check = coupling::check_jmaps(c.dim, c.trials, c.seed);
  art.doc["results"].push_back({{"dim", c.dim},
                                {"trials", c.trials},
                                {"isometry", check.isometry},
                                {"orthonormality", check.orthonormality},
                                {"contraction", check.contraction},
                                {"max", check.max()}});
  art.csv << "dim,trials,isometry,orthonormality,contraction\n"
          << c.dim << ',' << c.trials << ',' << check.isometry << ',' << check.orthonormality << ','
          << check.contraction << '\n';
  summary << "jmap-check dim=" << c.dim << " trials=" << c.trials << " max_deviation=" << check.max() << '\n';
  return check.max() < 1e-12 ? ok : check_failed;
}

int run_expansions(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto chart = make_chart(c);
  art.csv << "quantity,slope,exact\n";
  for (auto q : {geometry::ExpansionQuantity::sigma_minus_expansion, geometry::ExpansionQuantity::div_a_minus_limit,
                 geometry::ExpansionQuantity::div_c_minus_limit}) {
    const auto fit = geometry::expansion_order_check(*chart, q, c.radii, 0.0, 16, c.seed);
    art.doc["results"].push_back({{"quantity", geometry::to_string(q)},
                                  {"slope", fit.slope},
                                  {"exact", fit.exact},
                                  {"radii", fit.radii},
                                  {"residuals", fit.residuals}});
    art.csv << geometry::to_string(q) << ',' << fit.slope << ',' << fit.exact << '\n';
    summary << "expansions " << geometry::to_string(q) << " slope=" << fit.slope << (fit.exact ? " (exact)" : "")
            << '\n';
  }
  return ok;
}

int run_smallball(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto dyn = sde::Dynamics::brownian(c.dim, sde::scheme_from_string(c.scheme));
  art.csv << "delta,T,dt,paths,conditioning,p_hat,se,log_p,series,log_series,z\n";
  const auto old = art.csv.precision(17);
  for (double delta : c.deltas) {
    sde::IntegratorConfig ic;
    ic.T = c.T;
    ic.dt = c.dt;
    ic.delta = delta;
    ic.bridge_correction = c.bridge;
    ic.seed = c.seed;
    ic.allow_coarse_dt = c.allow_coarse_dt;
    ic.scheme = dyn.scheme();
    const auto cond = explicit_conditioning(c).value_or(mc::automatic_conditioning(c.dim, delta, c.T));
    const auto e = mc::estimate_tube_prob(dyn, ic, ensemble_options(c, cond));
    const double series = mc::small_ball_probability(c.dim, delta, c.T);
    const double log_series = mc::log_small_ball_probability(c.dim, delta, c.T);
    const double z = e.se > 0 ? (e.p_hat - series) / e.se : 0.0;
    auto j = to_json(e);
    j["series"] = series;
    j["log_series"] = log_series;
    j["z_score"] = z;
    art.doc["results"].push_back(j);
    art.csv << delta << ',' << c.T << ',' << e.dt << ',' << e.n_paths << ',' << mc::to_string(e.conditioning) << ','
            << e.p_hat << ',' << e.se << ',' << e.log_p << ',' << series << ',' << log_series << ',' << z << '\n';
    summary << "smallball d=" << c.dim << " delta=" << delta << " dt=" << e.dt << " mc=" << e.p_hat << " se=" << e.se
            << " series=" << series << " log_mc=" << e.log_p << " log_series=" << log_series << '\n';
    for (const auto& w : e.warnings) summary << "  warning: " << w << '\n';
  }
  art.csv.precision(old);
  dump_paths(c, dyn, c.deltas.front());
  return ok;
}

int run_ratio(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto chart = make_chart(c);
  const auto field = make_field(c);
  std::vector<mc::RatioResult> results;
  int status = ok;
  for (double delta : c.deltas) {
    mc::RatioConfig rc;
    rc.delta = delta;
    rc.dt = c.dt;
    rc.n_paths = c.paths;
    rc.seed = c.seed;
    rc.bridge_correction = c.bridge;
    rc.allow_coarse_dt = c.allow_coarse_dt;
    rc.scheme = sde::scheme_from_string(c.scheme);
    rc.conditioning = explicit_conditioning(c);
    rc.batches = c.batches;
    rc.execution = c.serial ? Execution::serial : Execution::parallel;
    try {
      results.push_back(mc::estimate_ratio(chart, field, rc));
    } catch (const mc::EstimationError& e) {
      art.doc["error"] = e.what();
      summary << "ratio delta=" << delta << " error: " << e.what() << '\n';
      status = estimation;
      break;
    }
    const auto& r = results.back();
    art.doc["results"].push_back(to_json(r));
    summary << "ratio delta=" << delta << " dt=" << r.numerator.dt << " ratio=" << r.ratio << " se=" << r.ratio_se
            << " predicted=" << r.predicted << " z=" << r.z_score << '\n';
    for (const auto& w : r.numerator.warnings) summary << "  numerator warning: " << w << '\n';
    for (const auto& w : r.denominator.warnings) summary << "  denominator warning: " << w << '\n';
  }
  mc::write_csv(art.csv, results);
  if (results.size() >= 3) {
    const auto ex = mc::extrapolate_ratio(results);
    art.doc["extrapolation"] = to_json(ex);
    summary << "ratio extrapolated limit=" << ex.limit << " se=" << ex.limit_se << " predicted=" << results[0].predicted
            << (ex.low_confidence ? " (low confidence: " + ex.note + ")" : std::string()) << '\n';
  }
  dump_paths(c, sde::Dynamics(sde::Process::X, chart, field, chart->curve(), sde::scheme_from_string(c.scheme)),
             c.deltas.front());
  return status;
}

int run_couple(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto chart = make_chart(c);
  const auto field = make_field(c);
  coupling::write_diagnostic_csv_header(art.csv);
  for (double delta : c.deltas) {
    const auto e = coupling::run_coupled(chart, field, coupling_config(c, delta), ensemble_options(c, explicit_conditioning(c)));
    auto j = to_json(e);
    if (e.result.row_count() >= 100) j["delta_tail"] = to_json(coupling::delta_tail_estimate(e, c.lambdas));
    art.doc["results"].push_back(j);
    coupling::write_diagnostic_csv_row(art.csv, e);
    summary << "couple delta=" << delta << " dt=" << e.dt << " gap_max=" << e.diagnostics.gap_max
            << " tol=" << coupling::tol_radial(e.dt, delta) << " H2_le_G_violations=" << e.diagnostics.H2_le_G_violations
            << " survivors=" << e.result.n_survive << '\n';
  }
  dump_paths(c, sde::Dynamics(sde::Process::Y, chart, om::DriftField::zero(c.dim), chart->curve()), c.deltas.front());
  return ok;
}

int run_weight(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto chart = make_chart(c);
  const auto field = make_field(c);
  art.csv << "delta,dt,mean_weight,se,M,M_se,L,L_se,L_tilde,L_tilde_se,jensen_lower,p_holder,holder_weight,survivors\n";
  const auto old = art.csv.precision(17);
  for (double delta : c.deltas) {
    const auto e = coupling::run_coupled(chart, field, coupling_config(c, delta), ensemble_options(c, explicit_conditioning(c)));
    mc::GirsanovWeightEstimate w;
    try {
      w = mc::estimate_girsanov_weight(e);
    } catch (const mc::EstimationError& err) {
      art.doc["error"] = err.what();
      summary << "weight delta=" << delta << " error: " << err.what() << '\n';
      art.csv.precision(old);
      return estimation;
    }
    art.doc["results"].push_back(to_json(w));
    art.csv << delta << ',' << e.dt << ',' << w.mean_weight << ',' << w.se << ',' << w.M.mean << ',' << w.M.se << ','
            << w.L.mean << ',' << w.L.se << ',' << w.L_tilde.mean << ',' << w.L_tilde.se << ',' << w.jensen_lower << ','
            << w.p_holder << ',' << w.holder_weight << ',' << w.n_survive << '\n';
    summary << "weight delta=" << delta << " dt=" << e.dt << " mean_weight=" << w.mean_weight << " se=" << w.se
            << " jensen_lower=" << w.jensen_lower << " p=" << w.p_holder << '\n';
  }
  art.csv.precision(old);
  return ok;
}

int run_moment(const RunConfig& c, Artifacts& art, std::ostream& summary) {
  const auto chart = make_chart(c);
  const auto table = mc::conditional_moment_experiment(chart, make_field(c), c.deltas, c.c, coupling_config(c, c.deltas.front()),
                                                       ensemble_options(c, explicit_conditioning(c)));
  art.doc["results"] = to_json(table);
  mc::write_csv(art.csv, table);
  for (const auto& r : table.rows) {
    summary << "moment delta=" << r.delta << " c=" << r.c << " dt=" << r.dt << " mean=" << r.mean << " se=" << r.se
            << '\n';
  }
  summary << "moment bounded=" << (table.bounded ? "yes" : "no") << " max=" << table.max_mean << '\n';
  return ok;
}

}  // namespace

// ---------------------------------------------------------------------------

geometry::ManifoldModel make_model(const RunConfig& c) {
  using geometry::ManifoldModel;
  try {
    ManifoldModel m;
    switch (geometry::model_kind_from_string(c.model)) {
      case geometry::ModelKind::euclidean: m = ManifoldModel::euclidean(c.dim); break;
      case geometry::ModelKind::sphere: m = ManifoldModel::sphere(c.dim, c.radius); break;
      case geometry::ModelKind::hyperbolic: m = ManifoldModel::hyperbolic(c.dim, c.curvature_scale); break;
      case geometry::ModelKind::warped_diagonal: {
        geometry::WarpProfile p;
        p.coefficients = c.warp_coefficients;
        p.axis_weights = c.warp_weights;
        m = ManifoldModel::warped_diagonal(c.dim, p);
        break;
      }
    }
    m.validate();
    return m;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("model", e.what());
  }
}

geometry::CurveSpec make_curve(const RunConfig& c) {
  using geometry::CurveSpec;
  const auto [kind, args] = split_kind(c.curve);
  try {
    if (kind == "constant") {
      require(args.empty(), "curve", "constant takes no arguments");
      return CurveSpec::constant(c.dim, c.T, c.curve_steps);
    }
    if (kind == "line") {
      const auto v = parse_numbers("curve", args);
      require(static_cast<int>(v.size()) == c.dim, "curve", "line velocity needs " + std::to_string(c.dim) + " entries");
      return CurveSpec::line(to_vec(v), c.T, c.curve_steps);
    }
    if (kind == "table") {
      std::vector<double> times;
      std::vector<Vec> vels;
      for (const auto& knot : split(args, ';')) {
        const auto parts = split(knot, ':');
        require(parts.size() == 2, "curve", "table knots are t:v1,...,vd separated by ';'");
        const auto t = parse_numbers("curve", parts[0]);
        const auto v = parse_numbers("curve", parts[1]);
        require(t.size() == 1 && static_cast<int>(v.size()) == c.dim, "curve", "bad table knot '" + knot + "'");
        times.push_back(t[0]);
        vels.push_back(to_vec(v));
      }
      require(times.size() >= 2, "curve", "table needs at least two knots");
      require(std::abs(times.back() - c.T) < 1e-12, "curve", "last table knot must equal T");
      return CurveSpec::table(times, vels, c.curve_steps);
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("curve", e.what());
  }
  throw UsageError("curve", "unknown curve '" + c.curve + "' (constant | line:v | table:t:v;...)");
}

om::DriftField make_field(const RunConfig& c) {
  using om::DriftField;
  const auto [kind, args] = split_kind(c.field);
  try {
    if (kind == "zero") return DriftField::zero(c.dim);
    if (kind == "linear") return DriftField::linear(to_mat("field", parse_numbers("field", args), c.dim));
    if (kind == "rotational") {
      const auto p = parse_numbers("field", args);
      require(!p.empty() && p.size() <= 3, "field", "rotational:omega[,k[,m]]");
      return DriftField::rotational(c.dim, p[0], p.size() > 1 ? p[1] : 0.0, p.size() > 2 ? p[2] : 0.0);
    }
    if (kind == "table") {
      std::vector<double> times;
      std::vector<Mat> as;
      std::vector<Vec> bs;
      for (const auto& knot : split(args, ';')) {
        const auto parts = split(knot, '/');
        require(parts.size() == 3, "field", "table knots are t/a11,...,add/b1,...,bd separated by ';'");
        const auto t = parse_numbers("field", parts[0]);
        const auto b = parse_numbers("field", parts[2]);
        require(t.size() == 1 && static_cast<int>(b.size()) == c.dim, "field", "bad table knot '" + knot + "'");
        times.push_back(t[0]);
        as.push_back(to_mat("field", parse_numbers("field", parts[1]), c.dim));
        bs.push_back(to_vec(b));
      }
      return DriftField::table(times, as, bs);
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("field", e.what());
  }
  throw UsageError("field", "unknown field '" + c.field + "' (zero | linear:A | rotational:w[,k[,m]] | table:...)");
}

double resolved_tube_radius(const RunConfig& c) {
  if (c.tube_radius > 0.0) return c.tube_radius;
  const double bound = make_model(c).max_tube_radius();
  double need = 0.0;
  if (c.subcommand == "expansions") {
    for (double r : c.radii) need = std::max(need, 1.5 * r);
  } else {
    for (double d : c.deltas) need = std::max(need, 2.0 * d);
  }
  need = std::max(need, 0.1);
  return std::isfinite(bound) ? std::min(need, 0.95 * bound) : need;
}

void validate(const RunConfig& c) {
  require(std::find(kSubcommands.begin(), kSubcommands.end(), c.subcommand) != kSubcommands.end(), "subcommand",
          "unknown subcommand '" + c.subcommand + "'");
  require(c.dim >= 1 && c.dim <= 6, "dim", "must be in 1..6");
  require(c.T > 0.0 && std::isfinite(c.T), "T", "must be positive");
  require(c.dt > 0.0 && c.dt <= c.T, "dt", "must be positive and at most T");
  require(c.curve_steps >= 1, "curve-steps", "must be positive");
  require(c.radius > 0.0, "radius", "must be positive");
  require(c.curvature_scale > 0.0, "curvature-scale", "must be positive");
  require(c.tube_radius >= 0.0, "tube-radius", "must be non-negative (0 = automatic)");
  require(c.trials >= 1, "trials", "must be positive");
  require(c.conditioning == "auto" || c.conditioning == "rejection" || c.conditioning == "resampling", "conditioning",
          "must be auto, rejection or resampling");
  try {
    sde::scheme_from_string(c.scheme);
  } catch (const std::exception& e) {
    throw UsageError("scheme", e.what());
  }
  const auto model = make_model(c);
  make_curve(c);
  make_field(c);

  if (c.subcommand == "expansions") {
    require(c.radii.size() >= 2, "radii", "need at least two radii");
    for (double r : c.radii) require(r > 0.0, "radii", "must be positive");
  }
  if (uses_tube(c.subcommand)) {
    require(!c.deltas.empty(), "delta", "need at least one value");
    for (double d : c.deltas) require(d > 0.0 && std::isfinite(d), "delta", "must be positive");
    require(c.paths >= (tube_subcommand(c.subcommand) ? 1000u : 100u), "paths",
            tube_subcommand(c.subcommand) ? "must be at least 1000" : "must be at least 100");
    require(c.conditioning != "resampling" || c.batches >= 2, "batches", "resampling needs at least 2 batches");
    require(c.batches >= 1, "batches", "must be positive");
    if (c.subcommand != "moment" && !c.allow_coarse_dt) {
      for (double d : c.deltas) {
        require(c.dt <= d * d / 50.0, "dt",
                "exceeds delta^2/50 = " + format_double(d * d / 50.0) + " for delta=" + format_double(d) +
                    " (pass --allow-coarse-dt to override)");
      }
    }
    if (c.subcommand == "couple") {
      require(!c.lambdas.empty(), "lambdas", "need at least one value");
      for (double l : c.lambdas) require(l > 0.0, "lambdas", "must be positive");
    }
    const bool coupled = c.subcommand == "couple" || c.subcommand == "weight" || c.subcommand == "moment";
    require(!coupled || c.dim >= 2, "dim", "coupling needs dimension >= 2");
  }
  if (c.subcommand != "jmap-check" && c.subcommand != "smallball") {
    const double tube = resolved_tube_radius(c);
    const double bound = model.max_tube_radius();
    require(tube < bound, "tube-radius",
            format_double(tube) + " reaches the injectivity bound " + format_double(bound) + " of " + model.describe());
    if (uses_tube(c.subcommand)) {
      for (double d : c.deltas) {
        require(d < tube, "delta", format_double(d) + " must be below the tube radius " + format_double(tube));
      }
    }
  }
}

bool parse(int argc, const char* const* argv, RunConfig& out, std::ostream& help_out) {
  RunConfig cfg;
  CLI::App app{"Onsager-Machlup tube probabilities on Riemannian manifolds"};
  app.set_version_flag("--version", version());
  app.set_config("--config", "", "key = value file; flags override it");
  app.add_option("subcommand", cfg.subcommand, "jmap-check | expansions | smallball | ratio | couple | weight | moment")
      ->required();
  struct ListOption {
    const char* name;
    std::vector<double>* member;
    CLI::Option* option;
    std::string text;
  };
  std::list<ListOption> lists;
  for_each_field(cfg, [&](const char* name, auto& member) {
    using T = std::decay_t<decltype(member)>;
    const std::string flag = std::string("--") + name;
    if constexpr (std::is_same_v<T, bool>) {
      app.add_flag(flag + ",!--no-" + name, member);
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      auto& l = lists.emplace_back(ListOption{name, &member, nullptr, {}});
      l.option = app.add_option(flag, l.text, "comma-separated list");
    } else {
      app.add_option(flag, member);
    }
  });
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    help_out << app.help();
    return false;
  } catch (const CLI::CallForVersion&) {
    help_out << version() << '\n';
    return false;
  } catch (const CLI::ParseError& e) {
    throw UsageError("arguments", e.what());
  }
  for (const auto& l : lists) {
    if (l.option->count() > 0) *l.member = parse_numbers(l.name, l.text);
  }
  validate(cfg);
  out = cfg;
  return true;
}

std::string emit(const RunConfig& config) {
  std::ostringstream os;
  os << "subcommand = " << format_value(config.subcommand) << '\n';
  for_each_field(config, [&](const char* name, const auto& member) {
    os << name << " = " << format_value(member) << '\n';
  });
  return os.str();
}

int run(const RunConfig& config, std::ostream& summary) {
  Artifacts art(config);
  int status = ok;
  try {
    if (config.subcommand == "jmap-check") status = run_jmap(config, art, summary);
    else if (config.subcommand == "expansions") status = run_expansions(config, art, summary);
    else if (config.subcommand == "smallball") status = run_smallball(config, art, summary);
    else if (config.subcommand == "ratio") status = run_ratio(config, art, summary);
    else if (config.subcommand == "couple") status = run_couple(config, art, summary);
    else if (config.subcommand == "weight") status = run_weight(config, art, summary);
    else if (config.subcommand == "moment") status = run_moment(config, art, summary);
    else throw UsageError("subcommand", "unknown subcommand '" + config.subcommand + "'");
  } catch (const UsageError&) {
    throw;
  } catch (const geometry::ConstructionError& e) {
    throw UsageError("model", e.what());
  } catch (const geometry::ChartDomainError& e) {
    throw UsageError("tube-radius", e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(config.subcommand, e.what());
  } catch (const mc::EstimationError& e) {
    art.doc["error"] = e.what();
    summary << config.subcommand << " error: " << e.what() << '\n';
    status = estimation;
  } catch (const std::exception& e) {
    art.doc["error"] = e.what();
    summary << config.subcommand << " error: " << e.what() << '\n';
    status = failure;
  }
  art.write();
  return status;
}

}  // namespace omtube::cli
