#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepgate/domain/codec.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate {

struct GuardrailBounds {
  double critical_precision_floor = 0.85;
  double finalization_rejection_cap = 0.15;
  double corrective_intervention_cap = 0.20;
  double validation_failure_cap = 0.05;
  // External business KPI feeds (returns, CSAT complaints, ...), each a rate with a cap.
  std::map<std::string, double> kpi_caps;

  bool operator==(const GuardrailBounds&) const = default;
};

struct GuardrailConfig {
  std::size_t window_sessions = 200;
  GuardrailBounds defaults;
  std::map<std::string, GuardrailBounds> overrides;

  const GuardrailBounds& bounds_for(const std::string& slice_id) const {
    auto it = overrides.find(slice_id);
    return it == overrides.end() ? defaults : it->second;
  }
};

// Rolling metrics of one slice. Absent values mean "no evidence in the window"
// and never trip a rule.
struct SliceWindowMetrics {
  std::string slice_id;
  std::size_t sessions = 0;
  std::size_t finalization_reviews = 0;
  std::optional<double> critical_precision;
  std::optional<double> finalization_rejection_rate;
  std::optional<double> corrective_intervention_rate;
  std::optional<double> validation_failure_rate;
  std::map<std::string, double> kpis;

  bool operator==(const SliceWindowMetrics&) const = default;
};

// Computes the guardrail signals from the closed sessions of one slice (the
// caller passes the last W). Critical precision is the accept share of
// reviewed critical proposals that had already cleared the threshold
// (finalization reviews), the only executed-quality signal with ground truth.
// Corrective intervention counts finalization reviews followed by at least one
// operator action.
SliceWindowMetrics slice_window_metrics(const std::string& slice_id,
                                        std::span<const std::vector<SessionEvent>> sessions);

struct GuardrailStatus {
  std::string slice_id;
  SliceWindowMetrics metrics;
  bool tripped = false;
  std::optional<std::string> tripped_rule;
  double value = 0.0;
  double bound = 0.0;
  TimestampMs tripped_at = 0;

  bool operator==(const GuardrailStatus&) const = default;
};

// Rules are checked in a fixed order; the first violation is reported.
GuardrailStatus evaluate_guardrails(const SliceWindowMetrics& metrics, const GuardrailConfig& config, TimestampMs now);

void to_json(Json& j, const GuardrailBounds& v);
void from_json(const Json& j, GuardrailBounds& v);
void to_json(Json& j, const GuardrailConfig& v);
void from_json(const Json& j, GuardrailConfig& v);
void to_json(Json& j, const SliceWindowMetrics& v);
void to_json(Json& j, const GuardrailStatus& v);

}  // namespace stepgate
