#include "stepgate/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "stepgate/common/error.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/kernels/kernels.hpp"

namespace stepgate {

MatchVerdict match_actions(const ActionRecord& predicted, const ActionRecord& gold, double fuzzy_threshold) {
  MatchVerdict v;
  v.tool_match = predicted.action_type == gold.action_type;
  if (!v.tool_match) return v;
  if (gold.action_type == ActionType::send_text_to_chat) {
    v.similarity = kernels::similarity(predicted.payload.value_or(""), gold.payload.value_or(""));
    v.action_match = *v.similarity >= fuzzy_threshold;
  } else {
    v.action_match = predicted.target_control_id == gold.target_control_id && predicted.payload == gold.payload;
  }
  return v;
}

namespace {

struct Tally {
  std::size_t n = 0, tool = 0, action = 0;
  void add(const MatchVerdict& v) {
    ++n;
    tool += v.tool_match;
    action += v.action_match;
  }
  AccuracyCell cell() const {
    return {n, n ? double(tool) / double(n) : 0.0, n ? double(action) / double(n) : 0.0};
  }
};

}  // namespace

AccuracyReport accuracy_report(std::span<const PredictionPair> pairs, double fuzzy_threshold) {
  if (pairs.empty()) throw Error(ErrorCode::empty_input, "accuracy_report needs at least one pair");
  Tally all;
  std::map<ActionType, Tally> by_type;
  std::map<Provenance, Tally> by_prov;
  for (const auto& p : pairs) {
    const auto v = match_actions(p.predicted, p.gold, fuzzy_threshold);
    all.add(v);
    by_type[p.gold.action_type].add(v);
    by_prov[p.provenance].add(v);
  }
  AccuracyReport r;
  r.overall = all.cell();
  for (const auto& [t, tally] : by_type) r.per_type[t] = tally.cell();
  // Both provenance columns are always reported.
  for (auto prov : {Provenance::predefined, Provenance::rejected}) r.per_provenance[prov] = by_prov[prov].cell();
  return r;
}

std::vector<ReviewedProposal> collect_feedback(const SessionLog& log) {
  std::vector<ReviewedProposal> out;
  std::string slice, customer;
  Stage stage = Stage::logging;
  std::map<std::int64_t, ReviewedProposal> open;
  for (const auto& e : log) {
    switch (e.kind) {
      case EventKind::session_opened: {
        const auto& o = e.as<SessionOpened>();
        slice = o.slice_id;
        customer = o.customer_id;
        stage = o.stage;
        break;
      }
      case EventKind::stage_transition: stage = e.as<StageTransition>().to; break;
      case EventKind::policy_proposal: {
        ReviewedProposal r;
        r.session_id = e.session_id;
        r.slice_id = slice;
        r.customer_id = customer;
        r.stage = stage;
        r.proposal_seq = e.event_seq;
        r.proposal = e.as<PolicyProposal>();
        open[e.event_seq] = std::move(r);
        break;
      }
      case EventKind::critic_score:
        if (!open.empty()) open.rbegin()->second.score = e.as<CriticScore>();
        break;
      case EventKind::deferral: {
        const auto& d = e.as<Deferral>();
        if (d.proposal_seq)
          if (auto it = open.find(*d.proposal_seq); it != open.end()) it->second.review_reason = d.reason;
        break;
      }
      case EventKind::operator_feedback: {
        const auto& f = e.as<FeedbackRecord>();
        auto it = open.find(f.proposal_seq);
        if (it == open.end()) break;
        it->second.feedback = f;
        it->second.ts = e.ts;
        out.push_back(std::move(it->second));
        open.erase(it);
        break;
      }
      default: break;
    }
  }
  return out;
}

std::vector<ReviewedProposal> collect_feedback(std::span<const SessionLog> logs) {
  std::vector<ReviewedProposal> out;
  for (const auto& log : logs) {
    auto part = collect_feedback(log);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::map<ActionType, RateCell> acceptance_rate(std::span<const ReviewedProposal> feedback) {
  if (feedback.empty()) throw Error(ErrorCode::empty_input, "acceptance_rate needs feedback");
  std::map<ActionType, RateCell> out;
  for (const auto& f : feedback) {
    auto& c = out[f.proposal.action.action_type];
    (f.feedback.verdict == Verdict::accept ? c.accepts : c.rejects)++;
  }
  for (auto& [t, c] : out) c.rate = double(c.accepts) / double(c.accepts + c.rejects);
  return out;
}

bool is_automated(const SessionLog& log) {
  for (const auto& e : log) {
    switch (e.kind) {
      case EventKind::session_opened:
        if (e.as<SessionOpened>().stage == Stage::logging) return false;
        break;
      case EventKind::operator_message:
      case EventKind::operator_feedback:
      case EventKind::deferral: return false;
      case EventKind::action_executed:
        if (e.as<ActionRecord>().actor == Actor::operator_) return false;
        break;
      default: break;
    }
  }
  return true;
}

AutomationReport automation_rate(std::span<const SessionLog> sessions, TimestampMs reply_timeout_ms,
                                 TimestampMs as_of) {
  AutomationReport r;
  for (const auto& log : sessions) {
    if (log.empty()) continue;
    bool closed = false, awaiting = false;
    TimestampMs awaiting_since = 0;
    for (const auto& e : log) {
      if (e.kind == EventKind::session_closed) closed = true;
      if (e.kind == EventKind::handback && e.as<Handback>().to == ControlHolder::awaiting_customer) {
        awaiting = true;
        awaiting_since = e.ts;
      }
      if (e.kind == EventKind::customer_message) awaiting = false;
    }
    const bool timed_out = awaiting && as_of - awaiting_since > reply_timeout_ms;
    if (!closed && !timed_out) {
      ++r.pending;
      continue;
    }
    ++r.sessions;
    r.automated += is_automated(log);
  }
  r.rate = r.sessions ? double(r.automated) / double(r.sessions) : 0.0;
  return r;
}

TimestampMs operator_active_ms(const SessionLog& log) {
  TimestampMs total = 0;
  std::optional<TimestampMs> since;
  TimestampMs last = 0;
  auto close_span = [&](TimestampMs end) {
    if (!since) return;
    if (end < *since) throw Error(ErrorCode::clock_skew, "operator span ends before it starts");
    total += end - *since;
    since.reset();
  };
  for (const auto& e : log) {
    if (since && e.ts < last) throw Error(ErrorCode::clock_skew, e.session_id + ": timestamps go backwards");
    last = e.ts;
    switch (e.kind) {
      case EventKind::session_opened:
        if (e.as<SessionOpened>().stage == Stage::logging) since = e.ts;
        break;
      case EventKind::deferral:
        if (!since) since = e.ts;
        break;
      case EventKind::handback:
        if (e.as<Handback>().to == ControlHolder::policy) close_span(e.ts);
        break;
      case EventKind::action_executed:
        // An accepted review hands the turn back to the policy.
        if (e.as<ActionRecord>().actor == Actor::policy) close_span(e.ts);
        break;
      case EventKind::session_closed: close_span(e.ts); break;
      default: break;
    }
  }
  close_span(last);
  return total;
}

std::map<std::string, double> aat_per_customer(std::span<const SessionLog> sessions) {
  std::map<std::string, double> out;
  for (const auto& log : sessions) {
    if (log.empty() || log.front().kind != EventKind::session_opened) continue;
    out[log.front().as<SessionOpened>().customer_id] += double(operator_active_ms(log)) / 1000.0;
  }
  return out;
}

double aat(std::span<const SessionLog> sessions) {
  const auto per = aat_per_customer(sessions);
  if (per.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [c, v] : per) sum += v;
  return sum / double(per.size());
}

namespace {

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / double(xs.size());
}

// Linear interpolation between order statistics (type 7).
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double h = (double(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

ExperimentResult ab_analyze(const std::map<std::string, double>& control,
                            const std::map<std::string, double>& treatment, const AbOptions& options) {
  if (options.resamples < 1000) throw Error(ErrorCode::config_invalid, "A/B analysis needs at least 1000 resamples");
  if (control.empty() || treatment.empty()) throw Error(ErrorCode::empty_input, "both A/B groups need customers");
  for (const auto& [c, v] : control)
    if (treatment.count(c)) throw Error(ErrorCode::group_overlap, "customer " + c + " is in both groups");

  std::vector<double> xc, xt;
  for (const auto& [c, v] : control) xc.push_back(v);
  for (const auto& [c, v] : treatment) xt.push_back(v);

  ExperimentResult r;
  r.n_control = xc.size();
  r.n_treatment = xt.size();
  r.aat_control = mean_of(xc);
  r.aat_treatment = mean_of(xt);
  r.delta_relative = r.aat_control == 0.0 ? 0.0 : (r.aat_treatment - r.aat_control) / r.aat_control;
  r.resamples = options.resamples;

  auto deltas = options.parallel ? kernels::bootstrap_relative_delta(xc, xt, options.resamples, options.seed)
                                 : kernels::bootstrap_relative_delta_serial(xc, xt, options.resamples, options.seed);
  std::sort(deltas.begin(), deltas.end());
  r.ci_low = quantile(deltas, 0.025);
  r.ci_high = quantile(deltas, 0.975);
  const auto le = static_cast<double>(std::upper_bound(deltas.begin(), deltas.end(), 0.0) - deltas.begin());
  const auto ge = static_cast<double>(deltas.end() - std::lower_bound(deltas.begin(), deltas.end(), 0.0));
  r.p_value = std::min(1.0, 2.0 * (std::min(le, ge) + 1.0) / (double(deltas.size()) + 1.0));
  return r;
}

ExperimentResult ab_analyze(std::span<const SessionLog> control, std::span<const SessionLog> treatment,
                            const AbOptions& options, std::span<const SessionLog> pre_control,
                            std::span<const SessionLog> pre_treatment) {
  auto r = ab_analyze(aat_per_customer(control), aat_per_customer(treatment), options);
  if (!pre_control.empty() || !pre_treatment.empty())
    r.pre_period = BalanceCheck{pre_control.size(), pre_treatment.size(), aat(pre_control), aat(pre_treatment)};
  return r;
}

int percent_rounded(double relative) { return static_cast<int>(std::lround(relative * 100.0)); }

std::string_view to_string(RejectionBucket v) {
  switch (v) {
    case RejectionBucket::C1: return "C1";
    case RejectionBucket::C2: return "C2";
    case RejectionBucket::C3: return "C3";
    case RejectionBucket::C4: return "C4";
    case RejectionBucket::C5: return "C5";
    case RejectionBucket::C6: return "C6";
    case RejectionBucket::C7: return "C7";
    case RejectionBucket::other: return "other";
  }
  return "?";
}

std::string_view to_string(HighLevelCategory v) {
  switch (v) {
    case HighLevelCategory::acceptable_but_rejected: return "acceptable_but_rejected";
    case HighLevelCategory::environment_limitation: return "environment_limitation";
    case HighLevelCategory::model_error: return "model_error";
    case HighLevelCategory::other: return "other";
  }
  return "?";
}

bool TemplateRegistry::matches(const std::string& text) const {
  for (const auto& t : templates)
    if (kernels::similarity(text, t) >= match_threshold) return true;
  return false;
}

namespace {

bool is_ui(ActionType t) {
  const auto c = category_of(t);
  return c == ActionCategory::navigation || c == ActionCategory::selection_form_filling;
}

}  // namespace

RejectionBucket bucket_rejection(const ActionRecord& proposal, const std::optional<ActionRecord>& correction,
                                 const TemplateRegistry& templates, double theta, const CriticalityMap& criticality) {
  if (!correction) return RejectionBucket::other;
  const auto& fix = *correction;
  const bool p_text = proposal.action_type == ActionType::send_text_to_chat;
  const bool f_text = fix.action_type == ActionType::send_text_to_chat;
  if (criticality.is_finalizing(proposal.action_type) && !criticality.is_finalizing(fix.action_type))
    return RejectionBucket::C3;
  if (proposal.action_type == ActionType::click_control && f_text) return RejectionBucket::C7;
  if (p_text && f_text) {
    const double s = kernels::similarity(proposal.payload.value_or(""), fix.payload.value_or(""));
    return s >= theta ? RejectionBucket::C5 : RejectionBucket::C4;
  }
  if (p_text && !f_text)
    return templates.matches(proposal.payload.value_or("")) ? RejectionBucket::C1 : RejectionBucket::C2;
  if (is_ui(proposal.action_type) && is_ui(fix.action_type) && proposal.target_control_id != fix.target_control_id)
    return RejectionBucket::C6;
  return RejectionBucket::other;
}

HighLevelCategory high_level_of(RejectionBucket b) {
  if (b == RejectionBucket::C5) return HighLevelCategory::acceptable_but_rejected;
  if (b == RejectionBucket::other) return HighLevelCategory::other;
  return HighLevelCategory::model_error;
}

BucketReport bucket_report(std::span<const ReviewedProposal> rejected, const TemplateRegistry& templates, double theta,
                           const std::map<std::string, HighLevelCategory>& overrides) {
  BucketReport r;
  for (const auto& f : rejected) {
    if (f.feedback.verdict != Verdict::reject) continue;
    const auto b = bucket_rejection(f.proposal.action, f.feedback.corrective_action, templates, theta);
    ++r.total;
    ++r.counts[b];
    auto it = overrides.find(f.session_id + "#" + std::to_string(f.proposal_seq));
    ++r.high_level[it == overrides.end() ? high_level_of(b) : it->second];
  }
  if (r.total == 0) return r;

  // Largest remainder over tenths of a percent so the rounded column sums to 100.0.
  std::vector<std::pair<RejectionBucket, double>> rem;
  long assigned = 0;
  std::map<RejectionBucket, long> tenths;
  for (const auto& [b, c] : r.counts) {
    const double exact = 1000.0 * double(c) / double(r.total);
    r.percent[b] = exact / 10.0;
    tenths[b] = static_cast<long>(std::floor(exact));
    assigned += tenths[b];
    rem.emplace_back(b, exact - std::floor(exact));
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; assigned < 1000; ++i, ++assigned) ++tenths[rem[i % rem.size()].first];
  for (const auto& [b, t] : tenths) r.percent_1dp[b] = double(t) / 10.0;
  return r;
}

void to_json(Json& j, const MatchVerdict& v) {
  j = Json{{"tool_match", v.tool_match}, {"action_match", v.action_match}};
  if (v.similarity) j["similarity"] = *v.similarity;
}

namespace {

Json cell_json(const AccuracyCell& c) { return Json{{"n", c.n}, {"tool_acc", c.tool_acc}, {"action_acc", c.action_acc}}; }

}  // namespace

void to_json(Json& j, const AccuracyReport& v) {
  j = Json{{"overall", cell_json(v.overall)}};
  Json per = Json::object(), prov = Json::object();
  for (const auto& [t, c] : v.per_type) per[std::string(to_string(t))] = cell_json(c);
  for (const auto& [p, c] : v.per_provenance) prov[std::string(to_string(p))] = cell_json(c);
  j["per_type"] = per;
  j["per_provenance"] = prov;
}

void to_json(Json& j, const RateCell& v) { j = Json{{"accepts", v.accepts}, {"rejects", v.rejects}, {"rate", v.rate}}; }

Json acceptance_json(const std::map<ActionType, RateCell>& rates) {
  Json j = Json::object();
  for (const auto& [t, c] : rates) j[std::string(to_string(t))] = c;
  return j;
}

void to_json(Json& j, const AutomationReport& v) {
  j = Json{{"sessions", v.sessions}, {"automated", v.automated}, {"pending", v.pending}, {"rate", v.rate}};
}

void to_json(Json& j, const ExperimentResult& v) {
  j = Json{{"n_control", v.n_control},
           {"n_treatment", v.n_treatment},
           {"aat_control", v.aat_control},
           {"aat_treatment", v.aat_treatment},
           {"delta_relative", v.delta_relative},
           {"delta_percent", percent_rounded(v.delta_relative)},
           {"ci_low", v.ci_low},
           {"ci_high", v.ci_high},
           {"p_value", v.p_value},
           {"method", v.method},
           {"resamples", v.resamples}};
  if (v.pre_period)
    j["pre_period"] = Json{{"sessions_control", v.pre_period->sessions_control},
                           {"sessions_treatment", v.pre_period->sessions_treatment},
                           {"aat_control", v.pre_period->aat_control},
                           {"aat_treatment", v.pre_period->aat_treatment}};
}

void to_json(Json& j, const BucketReport& v) {
  Json counts = Json::object(), pct = Json::object(), pct1 = Json::object(), hl = Json::object();
  for (const auto& [b, c] : v.counts) counts[std::string(to_string(b))] = c;
  for (const auto& [b, p] : v.percent) pct[std::string(to_string(b))] = p;
  for (const auto& [b, p] : v.percent_1dp) pct1[std::string(to_string(b))] = p;
  for (const auto& [h, c] : v.high_level) hl[std::string(to_string(h))] = c;
  j = Json{{"total", v.total}, {"counts", counts}, {"percent", pct}, {"percent_1dp", pct1}, {"high_level", hl}};
}

void to_json(Json& j, const ReviewedProposal& v) {
  j = Json{{"session_id", v.session_id},
           {"slice_id", v.slice_id},
           {"customer_id", v.customer_id},
           {"stage", to_string(v.stage)},
           {"proposal_seq", v.proposal_seq},
           {"proposal", v.proposal},
           {"review_reason", to_string(v.review_reason)},
           {"feedback", v.feedback},
           {"ts", v.ts}};
  if (v.score) j["score"] = *v.score;
}

Json metric_summary(std::span<const SessionLog> logs, TimestampMs reply_timeout_ms, TimestampMs as_of) {
  Json j;
  j["sessions"] = logs.size();
  j["automation"] = automation_rate(logs, reply_timeout_ms, as_of);
  j["aat_s"] = aat(logs);
  const auto feedback = collect_feedback(logs);
  j["acceptance"] = feedback.empty() ? Json::object() : acceptance_json(acceptance_rate(feedback));
  return j;
}

}  // namespace stepgate
