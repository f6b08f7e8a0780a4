#pragma once

#include <cfloat>
#include <cstdint>
#include <map>
#include <string>

#include "stepgate/domain/codec.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate {

// Threshold that no score in [0,1] reaches: every critical action defers.
inline constexpr double kSentinelTau = 1.0 + DBL_EPSILON;

// Gate thresholds of one slice, optionally stratified by action type.
struct ThresholdPolicy {
  std::string slice_id;
  double default_tau = kSentinelTau;
  std::map<ActionType, double> per_type;
  double precision_target = 0.9;
  std::string calibrated_on;
  std::int64_t version = 0;

  double tau_for(ActionType t) const {
    auto it = per_type.find(t);
    return it == per_type.end() ? default_tau : it->second;
  }

  bool operator==(const ThresholdPolicy&) const = default;
};

void to_json(Json& j, const ThresholdPolicy& v);
void from_json(const Json& j, ThresholdPolicy& v);

}  // namespace stepgate
