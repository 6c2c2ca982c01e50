#pragma once

#include "omtube/coupling.hpp"
#include "omtube/mc.hpp"

#include <json.hpp>

namespace omtube {

/// JSON views of result types. Non-finite numbers become null.
nlohmann::json finite_or_null(double x);
nlohmann::json to_json(const stats::Moment& m);
nlohmann::json to_json(const mc::TubeEstimate& e);
nlohmann::json to_json(const mc::RatioResult& r);
nlohmann::json to_json(const mc::Extrapolation& e);
nlohmann::json to_json(const mc::GirsanovWeightEstimate& w);
nlohmann::json to_json(const mc::MomentTable& t);
nlohmann::json to_json(const coupling::StepDiagnostics& d);
nlohmann::json to_json(const coupling::DeltaTail& t);
/// Diagnostics plus conditional means of the coupled observables.
nlohmann::json to_json(const coupling::CoupledEnsemble& e);

}  // namespace omtube
