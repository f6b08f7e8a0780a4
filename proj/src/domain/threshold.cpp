#include "stepgate/domain/threshold.hpp"

#include "stepgate/common/error.hpp"
#include "stepgate/domain/names.hpp"

namespace stepgate {

void to_json(Json& j, const ThresholdPolicy& v) {
  Json per = Json::object();
  for (const auto& [t, tau] : v.per_type) per[std::string(to_string(t))] = tau;
  j = Json{{"slice_id", v.slice_id},         {"default_tau", v.default_tau},
           {"per_type", per},                {"precision_target", v.precision_target},
           {"calibrated_on", v.calibrated_on}, {"version", v.version}};
}

void from_json(const Json& j, ThresholdPolicy& v) {
  v.slice_id = j.at("slice_id").get<std::string>();
  v.default_tau = j.at("default_tau").get<double>();
  v.per_type.clear();
  if (auto it = j.find("per_type"); it != j.end())
    for (const auto& [name, tau] : it->items()) {
      auto t = parse_enum<ActionType>(name);
      if (!t) throw Error(ErrorCode::config_invalid, "unknown action type '" + name + "' in per_type");
      v.per_type[*t] = tau.get<double>();
    }
  v.precision_target = j.value("precision_target", 0.9);
  v.calibrated_on = j.value("calibrated_on", std::string());
  v.version = j.value("version", std::int64_t{0});
  auto in_range = [](double tau) { return tau >= 0.0 && tau <= kSentinelTau; };
  if (!in_range(v.default_tau)) throw Error(ErrorCode::config_invalid, "default_tau outside [0,1]");
  for (const auto& [t, tau] : v.per_type)
    if (!in_range(tau)) throw Error(ErrorCode::config_invalid, "per_type tau outside [0,1]");
}

}  // namespace stepgate
