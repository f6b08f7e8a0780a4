#include "stepgate/calib/guardrails.hpp"

#include "stepgate/common/error.hpp"

namespace stepgate {

SliceWindowMetrics slice_window_metrics(const std::string& slice_id,
                                        std::span<const std::vector<SessionEvent>> sessions) {
  SliceWindowMetrics m;
  m.slice_id = slice_id;
  std::size_t fin_accept = 0, fin_reject = 0, fin_corrected = 0;
  for (const auto& log : sessions) {
    ++m.sessions;
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (log[i].kind != EventKind::deferral) continue;
      const auto& d = log[i].as<Deferral>();
      if (d.reason != DeferralReason::finalization_gate || !d.proposal_seq) continue;
      ++m.finalization_reviews;
      // The review spans until the policy's next turn or the end of the session.
      bool corrected = false;
      for (std::size_t k = i + 1; k < log.size() && log[k].kind != EventKind::policy_proposal; ++k) {
        const auto& e = log[k];
        if (e.kind == EventKind::operator_feedback && e.as<FeedbackRecord>().proposal_seq == *d.proposal_seq)
          (e.as<FeedbackRecord>().verdict == Verdict::accept ? fin_accept : fin_reject)++;
        if (e.kind == EventKind::action_executed && e.as<ActionRecord>().actor == Actor::operator_) corrected = true;
      }
      fin_corrected += corrected;
    }
  }
  const std::size_t decided = fin_accept + fin_reject;
  if (decided > 0) {
    m.critical_precision = double(fin_accept) / double(decided);
    m.finalization_rejection_rate = double(fin_reject) / double(decided);
  }
  if (m.finalization_reviews > 0) m.corrective_intervention_rate = double(fin_corrected) / double(m.finalization_reviews);
  return m;
}

GuardrailStatus evaluate_guardrails(const SliceWindowMetrics& metrics, const GuardrailConfig& config, TimestampMs now) {
  GuardrailStatus st;
  st.slice_id = metrics.slice_id;
  st.metrics = metrics;
  const auto& b = config.bounds_for(metrics.slice_id);
  auto trip = [&](const char* rule, double value, double bound) {
    st.tripped = true;
    st.tripped_rule = rule;
    st.value = value;
    st.bound = bound;
    st.tripped_at = now;
  };
  if (metrics.critical_precision && *metrics.critical_precision < b.critical_precision_floor)
    trip("critical_precision_floor", *metrics.critical_precision, b.critical_precision_floor);
  else if (metrics.finalization_rejection_rate && *metrics.finalization_rejection_rate > b.finalization_rejection_cap)
    trip("finalization_rejection_cap", *metrics.finalization_rejection_rate, b.finalization_rejection_cap);
  else if (metrics.corrective_intervention_rate &&
           *metrics.corrective_intervention_rate > b.corrective_intervention_cap)
    trip("corrective_intervention_cap", *metrics.corrective_intervention_rate, b.corrective_intervention_cap);
  else if (metrics.validation_failure_rate && *metrics.validation_failure_rate > b.validation_failure_cap)
    trip("validation_failure_cap", *metrics.validation_failure_rate, b.validation_failure_cap);
  else
    for (const auto& [kpi, cap] : b.kpi_caps) {
      auto it = metrics.kpis.find(kpi);
      if (it != metrics.kpis.end() && it->second > cap) {
        trip(("kpi:" + kpi).c_str(), it->second, cap);
        break;
      }
    }
  return st;
}

namespace {

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::config_invalid, std::string(what) + " must lie in [0,1]");
}

}  // namespace

void to_json(Json& j, const GuardrailBounds& v) {
  j = Json{{"critical_precision_floor", v.critical_precision_floor},
           {"finalization_rejection_cap", v.finalization_rejection_cap},
           {"corrective_intervention_cap", v.corrective_intervention_cap},
           {"validation_failure_cap", v.validation_failure_cap},
           {"kpi_caps", v.kpi_caps}};
}

void from_json(const Json& j, GuardrailBounds& v) {
  const GuardrailBounds d;
  v.critical_precision_floor = j.value("critical_precision_floor", d.critical_precision_floor);
  v.finalization_rejection_cap = j.value("finalization_rejection_cap", d.finalization_rejection_cap);
  v.corrective_intervention_cap = j.value("corrective_intervention_cap", d.corrective_intervention_cap);
  v.validation_failure_cap = j.value("validation_failure_cap", d.validation_failure_cap);
  v.kpi_caps = j.value("kpi_caps", std::map<std::string, double>{});
  check_unit(v.critical_precision_floor, "critical_precision_floor");
  check_unit(v.finalization_rejection_cap, "finalization_rejection_cap");
  check_unit(v.corrective_intervention_cap, "corrective_intervention_cap");
  check_unit(v.validation_failure_cap, "validation_failure_cap");
  for (const auto& [k, cap] : v.kpi_caps) check_unit(cap, "kpi cap");
}

void to_json(Json& j, const GuardrailConfig& v) {
  j = Json{{"window_sessions", v.window_sessions}, {"defaults", v.defaults}, {"overrides", v.overrides}};
}

void from_json(const Json& j, GuardrailConfig& v) {
  v.window_sessions = j.value("window_sessions", std::size_t{200});
  if (v.window_sessions == 0) throw Error(ErrorCode::config_invalid, "window_sessions must be positive");
  v.defaults = j.value("defaults", GuardrailBounds{});
  v.overrides.clear();
  if (auto it = j.find("overrides"); it != j.end())
    for (const auto& [slice, b] : it->items()) v.overrides[slice] = b.get<GuardrailBounds>();
}

void to_json(Json& j, const SliceWindowMetrics& v) {
  j = Json{{"slice_id", v.slice_id}, {"sessions", v.sessions}, {"finalization_reviews", v.finalization_reviews},
           {"kpis", v.kpis}};
  auto put = [&](const char* k, const std::optional<double>& x) { j[k] = x ? Json(*x) : Json(nullptr); };
  put("critical_precision", v.critical_precision);
  put("finalization_rejection_rate", v.finalization_rejection_rate);
  put("corrective_intervention_rate", v.corrective_intervention_rate);
  put("validation_failure_rate", v.validation_failure_rate);
}

void to_json(Json& j, const GuardrailStatus& v) {
  j = Json{{"slice_id", v.slice_id}, {"metrics", v.metrics}, {"tripped", v.tripped}};
  if (v.tripped) {
    j["tripped_rule"] = *v.tripped_rule;
    j["value"] = v.value;
    j["bound"] = v.bound;
    j["tripped_at"] = v.tripped_at;
  }
}

}  // namespace stepgate
