#pragma once

#include "omtube/coupling.hpp"
#include "omtube/geometry.hpp"
#include "omtube/mc.hpp"
#include "omtube/om.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace omtube::cli {

/// Code version embedded in every artifact.
const char* version();

/// Invalid configuration; `field` names the offending option.
class UsageError : public std::invalid_argument {
 public:
  UsageError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Resolved run configuration. Descriptors are kept as text so that the
/// config round-trips exactly through emit/parse.
struct RunConfig {
  std::string subcommand;  // jmap-check, expansions, smallball, ratio, couple, weight, moment

  // model
  std::string model = "euclidean";  // euclidean, sphere, hyperbolic, warped_diagonal
  int dim = 2;
  double radius = 1.0;
  double curvature_scale = 1.0;
  std::vector<double> warp_coefficients{0.5};
  std::vector<double> warp_weights;

  // curve: constant | line:v1,...,vd | table:t0:v..;t1:v..
  std::string curve = "constant";
  int curve_steps = 64;
  // field: zero | linear:a11,...,add (row-major) | rotational:omega[,k[,m]] | table:t:a..:b..;...
  std::string field = "zero";

  double T = 1.0;
  std::vector<double> deltas{0.2};
  double dt = 1e-4;
  std::size_t paths = 100000;
  std::uint64_t seed = 1;
  /// Chart tube radius; 0 picks min(2 max δ, 0.95 × injectivity bound).
  double tube_radius = 0.0;
  std::string conditioning = "auto";  // auto, rejection, resampling
  int batches = 20;
  bool bridge = true;
  bool allow_coarse_dt = false;
  std::string scheme = "euler_maruyama";
  bool serial = false;

  // subcommand specifics
  int trials = 1000;                                  // jmap-check
  std::vector<double> radii{0.2, 0.1, 0.05, 0.025};   // expansions
  double c = 1.0;                                     // moment
  std::vector<double> lambdas{0.05, 0.1, 0.2, 0.4};   // couple
  bool strict = false;                                // couple
  bool track_stokes = false;                          // couple

  // outputs
  std::string json_out;
  std::string csv_out;
  std::string dump;
  std::size_t dump_paths = 100;

  bool operator==(const RunConfig&) const = default;
};

/// Parses flags (argv[0] is the program name); `--config FILE` supplies
/// key = value defaults that flags override. Returns false after printing
/// help. Throws UsageError on parse or validation failures.
bool parse(int argc, const char* const* argv, RunConfig& out, std::ostream& help_out);

/// Writes the config as a `key = value` file accepted by `--config`.
std::string emit(const RunConfig& config);

/// Checks every field before any simulation starts. Throws UsageError.
void validate(const RunConfig& config);

geometry::ManifoldModel make_model(const RunConfig& config);
geometry::CurveSpec make_curve(const RunConfig& config);
om::DriftField make_field(const RunConfig& config);
double resolved_tube_radius(const RunConfig& config);

enum ExitCode : int { ok = 0, failure = 1, usage = 2, estimation = 3, check_failed = 4 };

/// Runs the subcommand, writes artifacts and prints one summary line per
/// cell to `summary`. Returns an ExitCode. Estimation errors still write
/// the artifacts gathered so far.
int run(const RunConfig& config, std::ostream& summary);

}  // namespace omtube::cli
