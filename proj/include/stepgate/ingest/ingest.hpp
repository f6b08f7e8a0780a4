#pragma once

// Raw session logs to SessionEvents, model-ready dialog samples, and the daily
// validation report.

#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stepgate/common/error.hpp"
#include "stepgate/domain/codec.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate::ingest {

enum class RawType { snapshot, event };

// One line of a raw log. Snapshots carry markup; events carry a kind and a
// string attribute map (see docs/schema.md for the recognised kinds).
struct RawLogLine {
  RawType type = RawType::event;
  std::string session_id;
  std::int64_t seq = 0;
  TimestampMs ts = 0;
  std::string markup;
  std::string kind;
  std::map<std::string, std::string> attributes;

  bool operator==(const RawLogLine&) const = default;
};

void to_json(Json& j, const RawLogLine& v);
void from_json(const Json& j, RawLogLine& v);

// Reads JSONL; blank lines are skipped. Throws Error(malformed_event) with the
// 1-based line number on undecodable input.
std::vector<RawLogLine> read_raw_log(std::istream& in);

struct ParseIssue {
  ErrorCode code = ErrorCode::malformed_event;
  std::int64_t seq = 0;
  std::string detail;
  std::string tag;  // element name for unknown_element

  bool operator==(const ParseIssue&) const = default;
};

struct ParsedSession {
  std::string session_id;
  std::vector<SessionEvent> events;  // dense event_seq from 0, replayable
  std::vector<ParseIssue> issues;    // lines that were skipped and why
  std::vector<std::int64_t> raw_seqs;
};

// Groups lines by session and converts each in seq order. Lines that fail to
// parse are skipped and recorded as issues so validation can count them.
std::vector<ParsedSession> parse_sessions(std::span<const RawLogLine> lines);

// Strict variant: the first problem is thrown (MarkupError for markup,
// Error(duplicate_seq), Error(malformed_event) otherwise). Output is ordered by
// (session_id, event_seq).
std::vector<SessionEvent> parse_raw_log(std::span<const RawLogLine> lines);

// Projection after the events with event_seq <= upto.
SessionState build_state(std::span<const SessionEvent> events, std::int64_t upto);

enum class TurnKind { customer_message, operator_action, ui_snapshot };

struct DialogTurn {
  TurnKind kind = TurnKind::customer_message;
  std::int64_t event_seq = 0;
  std::variant<ChatMessage, ActionRecord, UiSnapshot> body;

  bool operator==(const DialogTurn&) const = default;
};

struct DialogSample {
  std::string sample_id;  // "<session_id>#<event_seq of the target>"
  std::string session_id;
  std::vector<DialogTurn> turns;
  ActionRecord target;
  Provenance provenance = Provenance::predefined;
  std::size_t truncated = 0;  // oldest turns dropped to fit the budget

  bool operator==(const DialogSample&) const = default;
};

void to_json(Json& j, const DialogTurn& v);
void from_json(const Json& j, DialogTurn& v);
void to_json(Json& j, const DialogSample& v);
void from_json(const Json& j, DialogSample& v);

std::string sample_id(const std::string& session_id, std::int64_t event_seq);

struct DialogOptions {
  std::size_t max_turns = 256;
};

struct TruncationNote {
  std::string sample_id;
  std::size_t dropped = 0;
};

struct DialogBuild {
  std::vector<DialogSample> samples;
  std::vector<TruncationNote> truncations;
};

// Chronological context turns for every event strictly before event_seq
// `before`, truncated from the oldest end to the budget.
std::vector<DialogTurn> context_before(std::span<const SessionEvent> events, std::int64_t before,
                                       const DialogOptions& options, std::size_t* dropped = nullptr);

// One sample per operator action_executed. Throws Error(no_actions) when the
// session has none.
DialogBuild build_dialog_samples(std::span<const SessionEvent> events, const DialogOptions& options = {});

inline const char* const kRuleNoUnknownElement = "no_unknown_element";
inline const char* const kRuleNoMalformedMarkup = "no_malformed_markup";
inline const char* const kRuleActionTargetExists = "action_target_exists";
inline const char* const kRuleSeqDense = "seq_dense";
inline const char* const kRuleEventsWellFormed = "events_well_formed";

std::vector<std::string> known_rules();
bool session_passes(const std::string& rule, const ParsedSession& session);

struct ValidationConfig {
  std::vector<std::string> rules = known_rules();
  double default_threshold = 0.05;
  std::map<std::string, double> thresholds;

  double threshold_for(const std::string& rule) const;
};

struct RuleStats {
  std::size_t sessions_checked = 0;
  std::size_t sessions_failed = 0;
  double failure_rate = 0.0;
};

struct ValidationReport {
  std::string date;
  std::map<std::string, RuleStats> rules;
  double overall_failure_rate = 0.0;
  std::vector<std::string> alerts;
};

// Never aborts on bad sessions; they count as failures. Unknown rule names
// throw Error(config_invalid).
ValidationReport validate_daily(std::span<const ParsedSession> sessions, const ValidationConfig& config,
                                const std::string& date);

Json to_json(const ValidationReport& report);
ValidationConfig validation_config_from_json(const Json& j);

// UTC calendar date "YYYY-MM-DD" of a millisecond timestamp.
std::string utc_date(TimestampMs ts);

}  // namespace stepgate::ingest
