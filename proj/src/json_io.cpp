#include "omtube/json_io.hpp"

#include <cmath>

namespace omtube {

nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

nlohmann::json to_json(const stats::Moment& m) { return {{"mean", finite_or_null(m.mean)}, {"se", finite_or_null(m.se)}}; }

nlohmann::json to_json(const mc::TubeEstimate& e) {
  auto batches = nlohmann::json::array();
  for (double l : e.batch_log_p) batches.push_back(finite_or_null(l));
  return {{"process", sde::to_string(e.process)},
          {"conditioning", to_string(e.conditioning)},
          {"p_hat", e.p_hat},
          {"se", e.se},
          {"log_p", finite_or_null(e.log_p)},
          {"rel_se", finite_or_null(e.rel_se)},
          {"n_paths", e.n_paths},
          {"n_survive", e.n_survive},
          {"delta", e.delta},
          {"dt", e.dt},
          {"T", e.T},
          {"bridge_correction", e.bridge_correction},
          {"batch_log_p", batches},
          {"warnings", e.warnings}};
}

nlohmann::json to_json(const mc::RatioResult& r) {
  return {{"numerator", to_json(r.numerator)},
          {"denominator", to_json(r.denominator)},
          {"ratio", finite_or_null(r.ratio)},
          {"ratio_se", finite_or_null(r.ratio_se)},
          {"predicted", r.predicted},
          {"z_score", finite_or_null(r.z_score)},
          {"shared_stream", r.shared_stream},
          {"action",
           {{"value", r.action.value},
            {"error_estimate", r.action.error_estimate},
            {"kinetic", r.action.integrated.kinetic},
            {"divergence", r.action.integrated.divergence},
            {"curvature", r.action.integrated.curvature}}}};
}

nlohmann::json to_json(const mc::Extrapolation& e) {
  return {{"limit", finite_or_null(e.limit)},
          {"limit_se", finite_or_null(e.limit_se)},
          {"log_limit", finite_or_null(e.log_limit)},
          {"a", e.a},
          {"b", e.b},
          {"residual", e.residual},
          {"low_confidence", e.low_confidence},
          {"note", e.note}};
}

nlohmann::json to_json(const mc::GirsanovWeightEstimate& w) {
  return {{"delta", w.delta},
          {"mean_weight", finite_or_null(w.mean_weight)},
          {"se", finite_or_null(w.se)},
          {"M", to_json(w.M)},
          {"L", to_json(w.L)},
          {"L_tilde", to_json(w.L_tilde)},
          {"max_abs_L", w.max_abs_L},
          {"jensen_lower", finite_or_null(w.jensen_lower)},
          {"jensen_holds", w.jensen_holds},
          {"p_holder", finite_or_null(w.p_holder)},
          {"holder_weight", finite_or_null(w.holder_weight)},
          {"n_survive", w.n_survive}};
}

nlohmann::json to_json(const mc::MomentTable& t) {
  auto rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"delta", r.delta},
                    {"c", r.c},
                    {"dt", r.dt},
                    {"mean", finite_or_null(r.mean)},
                    {"se", finite_or_null(r.se)},
                    {"log_p", finite_or_null(r.log_p)},
                    {"n_survive", r.n_survive}});
  }
  return {{"rows", rows}, {"max_mean", t.max_mean}, {"bounded", t.bounded}};
}

nlohmann::json to_json(const coupling::StepDiagnostics& d) {
  return {{"gap_max", d.gap_max},
          {"gap_violations", d.gap_violations},
          {"H2_le_G_violations", d.H2_le_G_violations},
          {"evaluated_states", d.evaluated_states},
          {"G_max", d.G_max},
          {"radial_identity_max", d.radial_identity_max},
          {"dW0_identity_max", d.dW0_identity_max},
          {"nu_bound_excess", finite_or_null(d.nu_bound_excess)}};
}

nlohmann::json to_json(const coupling::DeltaTail& t) {
  return {{"lambda", t.lambda}, {"p", t.p},         {"se", t.se},
          {"bound", t.bound},   {"K", finite_or_null(t.K)}, {"slope", finite_or_null(t.slope)},
          {"slope_se", finite_or_null(t.slope_se)}};
}

nlohmann::json to_json(const coupling::CoupledEnsemble& e) {
  using namespace coupling;
  const auto& r = e.result;
  nlohmann::json j = {{"delta", e.config.delta},
                      {"dt", e.dt},
                      {"T", e.config.T},
                      {"n_paths", r.n_paths},
                      {"n_survive", r.n_survive},
                      {"conditioning", mc::to_string(r.conditioning)},
                      {"p_hat", r.p_hat},
                      {"log_p", finite_or_null(r.log_p)},
                      {"tol_radial", tol_radial(e.dt, e.config.delta)},
                      {"diagnostics", to_json(e.diagnostics)}};
  if (r.row_count() > 0) {
    const std::pair<const char*, int> cols[] = {
        {"M", obs_M},           {"L", obs_L},         {"L_tilde", obs_L_tilde},     {"dev_T", obs_dev_T},
        {"sup_dev", obs_sup_dev}, {"Delta", obs_Delta}, {"nu", obs_nu},             {"G_int", obs_G_int},
        {"uu", obs_uu},         {"uu_pred", obs_uu_pred}, {"covariation", obs_covariation}, {"gap_max", obs_gap_max},
        {"R_T", obs_R_T}};
    nlohmann::json means;
    for (const auto& [name, col] : cols) means[name] = to_json(r.conditional_mean(col));
    j["conditional_means"] = means;
  }
  return j;
}

}  // namespace omtube
