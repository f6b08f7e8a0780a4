#pragma once

// Offline and online metrics over event logs: action matching, accuracy,
// acceptance and automation rates, operator active time, A/B analysis and
// rejection bucketing. All functions are pure aggregations.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stepgate/domain/codec.hpp"
#include "stepgate/domain/criticality.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate {

using SessionLog = std::vector<SessionEvent>;

inline constexpr double kDefaultFuzzyThreshold = 0.8;

// ---- action matching ---------------------------------------------------

struct MatchVerdict {
  bool tool_match = false;
  bool action_match = false;
  std::optional<double> similarity;  // text actions only

  bool operator==(const MatchVerdict&) const = default;
};

MatchVerdict match_actions(const ActionRecord& predicted, const ActionRecord& gold,
                           double fuzzy_threshold = kDefaultFuzzyThreshold);

struct PredictionPair {
  ActionRecord predicted;
  ActionRecord gold;
  Provenance provenance = Provenance::predefined;
};

struct AccuracyCell {
  std::size_t n = 0;
  double tool_acc = 0.0;
  double action_acc = 0.0;
};

struct AccuracyReport {
  AccuracyCell overall;
  std::map<ActionType, AccuracyCell> per_type;  // stratified by the gold action type
  std::map<Provenance, AccuracyCell> per_provenance;
};

// Throws EmptyInput.
AccuracyReport accuracy_report(std::span<const PredictionPair> pairs, double fuzzy_threshold = kDefaultFuzzyThreshold);

// ---- feedback extraction -----------------------------------------------

// An operator verdict joined with the proposal it judged.
struct ReviewedProposal {
  std::string session_id;
  std::string slice_id;
  std::string customer_id;
  Stage stage = Stage::copilot;
  std::int64_t proposal_seq = 0;
  PolicyProposal proposal;
  std::optional<CriticScore> score;
  DeferralReason review_reason = DeferralReason::copilot_review;
  FeedbackRecord feedback;
  TimestampMs ts = 0;
};

std::vector<ReviewedProposal> collect_feedback(const SessionLog& log);
std::vector<ReviewedProposal> collect_feedback(std::span<const SessionLog> logs);

// ---- acceptance rate ---------------------------------------------------

struct RateCell {
  std::size_t accepts = 0;
  std::size_t rejects = 0;
  double rate = 0.0;
};

// accepts / (accepts + rejects) per proposed action type. Tools without
// feedback are absent. Throws EmptyInput.
std::map<ActionType, RateCell> acceptance_rate(std::span<const ReviewedProposal> feedback);

// ---- automation rate ---------------------------------------------------

struct AutomationReport {
  std::size_t sessions = 0;   // decided sessions (the denominator)
  std::size_t automated = 0;
  std::size_t pending = 0;    // still open, or awaiting within the timeout
  double rate = 0.0;
};

// A session is automated iff it has no operator-actor event and no deferral.
// Sessions awaiting the customer count once the timeout T has elapsed at
// `as_of` without a reply; open sessions are pending and excluded.
bool is_automated(const SessionLog& log);
AutomationReport automation_rate(std::span<const SessionLog> sessions, TimestampMs reply_timeout_ms,
                                 TimestampMs as_of);

// ---- operator active time ----------------------------------------------

// Operator-active milliseconds in one session: spans while the operator holds
// control (from a deferral or a logging-stage open, until handback or close).
// Throws ClockSkew on a span that ends before it starts.
TimestampMs operator_active_ms(const SessionLog& log);

// Per-customer operator seconds (sum over the customer's sessions).
std::map<std::string, double> aat_per_customer(std::span<const SessionLog> sessions);

// Mean of aat_per_customer; 0 for no sessions.
double aat(std::span<const SessionLog> sessions);

// ---- A/B analysis ------------------------------------------------------

struct BalanceCheck {
  std::size_t sessions_control = 0;
  std::size_t sessions_treatment = 0;
  double aat_control = 0.0;
  double aat_treatment = 0.0;
};

struct ExperimentResult {
  std::size_t n_control = 0;  // customers
  std::size_t n_treatment = 0;
  double aat_control = 0.0;
  double aat_treatment = 0.0;
  double delta_relative = 0.0;  // (treatment - control) / control
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  std::string method = "customer_percentile_bootstrap";
  std::size_t resamples = 0;
  std::optional<BalanceCheck> pre_period;
};

struct AbOptions {
  std::size_t resamples = 2000;
  std::uint64_t seed = 1;
  bool parallel = true;
};

// Per-customer values form the bootstrap unit. Throws GroupOverlap and
// ConfigInvalid (fewer than 1000 resamples, empty group).
ExperimentResult ab_analyze(const std::map<std::string, double>& control, const std::map<std::string, double>& treatment,
                            const AbOptions& options);
ExperimentResult ab_analyze(std::span<const SessionLog> control, std::span<const SessionLog> treatment,
                            const AbOptions& options, std::span<const SessionLog> pre_control = {},
                            std::span<const SessionLog> pre_treatment = {});

// Relative delta as an integer percent, rounded half away from zero.
int percent_rounded(double relative);

// ---- rejection buckets -------------------------------------------------

enum class RejectionBucket { C1, C2, C3, C4, C5, C6, C7, other };
enum class HighLevelCategory { acceptable_but_rejected, environment_limitation, model_error, other };

std::string_view to_string(RejectionBucket v);
std::string_view to_string(HighLevelCategory v);

struct TemplateRegistry {
  std::vector<std::string> templates;
  // Proposal text counts as templated when similar to a template at or above this.
  double match_threshold = 0.9;

  bool matches(const std::string& text) const;
};

// Rule cascade, first match wins: C3, C7, C5, C4, C1, C2, C6, other.
// Records without a corrective action fall through to `other`.
RejectionBucket bucket_rejection(const ActionRecord& proposal, const std::optional<ActionRecord>& correction,
                                 const TemplateRegistry& templates, double theta = kDefaultFuzzyThreshold,
                                 const CriticalityMap& criticality = CriticalityMap::defaults());

HighLevelCategory high_level_of(RejectionBucket b);

struct BucketReport {
  std::size_t total = 0;
  std::map<RejectionBucket, std::size_t> counts;
  std::map<RejectionBucket, double> percent;        // exact shares * 100
  std::map<RejectionBucket, double> percent_1dp;    // largest remainder, sums to 100.0 exactly
  std::map<HighLevelCategory, std::size_t> high_level;
};

// `overrides` maps "session_id#proposal_seq" to an annotated high-level category.
BucketReport bucket_report(std::span<const ReviewedProposal> rejected, const TemplateRegistry& templates,
                           double theta = kDefaultFuzzyThreshold,
                           const std::map<std::string, HighLevelCategory>& overrides = {});

// ---- JSON --------------------------------------------------------------

void to_json(Json& j, const MatchVerdict& v);
void to_json(Json& j, const AccuracyReport& v);
void to_json(Json& j, const RateCell& v);
void to_json(Json& j, const AutomationReport& v);
void to_json(Json& j, const ExperimentResult& v);
void to_json(Json& j, const BucketReport& v);
void to_json(Json& j, const ReviewedProposal& v);
Json acceptance_json(const std::map<ActionType, RateCell>& rates);

// Sessions, automation rate, AAT and per-tool acceptance over a set of logs.
// The service dashboard and the CLI report both use this.
Json metric_summary(std::span<const SessionLog> logs, TimestampMs reply_timeout_ms, TimestampMs as_of);

}  // namespace stepgate
