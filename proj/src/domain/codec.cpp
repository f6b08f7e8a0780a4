#include "stepgate/domain/codec.hpp"

#include "stepgate/common/error.hpp"
#include "stepgate/common/hash.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/domain/state.hpp"

namespace stepgate {
namespace {

template <typename Enum>
Enum decode_enum(const Json& j, const char* field) {
  if (!j.is_string()) throw Error(ErrorCode::malformed_event, std::string(field) + " must be a string");
  auto parsed = parse_enum<Enum>(j.get<std::string>());
  if (!parsed) throw Error(ErrorCode::malformed_event, std::string("unknown ") + field + " '" + j.get<std::string>() + "'");
  return *parsed;
}

const Json& required(const Json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw Error(ErrorCode::malformed_event, std::string("missing field ") + field);
  return *it;
}

template <typename T>
void put_optional(Json& j, const char* field, const std::optional<T>& v) {
  if (v) j[field] = *v;
}

template <typename T>
void get_optional(const Json& j, const char* field, std::optional<T>& out) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) {
    out.reset();
  } else {
    out = it->get<T>();
  }
}

}  // namespace

template <typename Enum>
Enum enum_from_json(const Json& j, const char* field) {
  return decode_enum<Enum>(j, field);
}

template ActionType enum_from_json<ActionType>(const Json&, const char*);
template Stage enum_from_json<Stage>(const Json&, const char*);
template Verdict enum_from_json<Verdict>(const Json&, const char*);
template Actor enum_from_json<Actor>(const Json&, const char*);
template EventKind enum_from_json<EventKind>(const Json&, const char*);
template ControlHolder enum_from_json<ControlHolder>(const Json&, const char*);
template Author enum_from_json<Author>(const Json&, const char*);
template ControlKind enum_from_json<ControlKind>(const Json&, const char*);

void to_json(Json& j, const ChatMessage& v) {
  j = Json{{"author", to_string(v.author)}, {"text", v.text}, {"timestamp", v.timestamp}, {"message_id", v.message_id}};
}

void from_json(const Json& j, ChatMessage& v) {
  v.author = decode_enum<Author>(required(j, "author"), "author");
  v.text = required(j, "text").get<std::string>();
  v.timestamp = required(j, "timestamp").get<TimestampMs>();
  v.message_id = required(j, "message_id").get<std::string>();
}

void to_json(Json& j, const UiControl& v) {
  j = Json{{"control_id", v.control_id}, {"kind", to_string(v.kind)}, {"label", v.label}};
  put_optional(j, "value", v.value);
  put_optional(j, "options", v.options);
}

void from_json(const Json& j, UiControl& v) {
  v.control_id = required(j, "control_id").get<std::string>();
  v.kind = decode_enum<ControlKind>(required(j, "kind"), "kind");
  v.label = j.value("label", std::string{});
  get_optional(j, "value", v.value);
  get_optional(j, "options", v.options);
}

void to_json(Json& j, const UiSnapshot& v) {
  j = Json{{"screen_id", v.screen_id},
           {"controls", v.controls},
           {"customer_profile", v.customer_profile},
           {"global_announcements", v.global_announcements},
           {"snapshot_seq", v.snapshot_seq}};
  put_optional(j, "active_scenario", v.active_scenario);
}

void from_json(const Json& j, UiSnapshot& v) {
  v.screen_id = required(j, "screen_id").get<std::string>();
  v.controls = j.value("controls", std::vector<UiControl>{});
  get_optional(j, "active_scenario", v.active_scenario);
  v.customer_profile = j.value("customer_profile", std::map<std::string, std::string>{});
  v.global_announcements = j.value("global_announcements", std::vector<std::string>{});
  v.snapshot_seq = required(j, "snapshot_seq").get<std::int64_t>();
}

void to_json(Json& j, const ActionRecord& v) {
  j = Json{{"action_type", to_string(v.action_type)}, {"actor", to_string(v.actor)}, {"timestamp", v.timestamp}};
  put_optional(j, "target_control_id", v.target_control_id);
  put_optional(j, "payload", v.payload);
}

void from_json(const Json& j, ActionRecord& v) {
  v.action_type = decode_enum<ActionType>(required(j, "action_type"), "action_type");
  get_optional(j, "target_control_id", v.target_control_id);
  get_optional(j, "payload", v.payload);
  v.actor = decode_enum<Actor>(required(j, "actor"), "actor");
  v.timestamp = j.value("timestamp", TimestampMs{0});
}

void to_json(Json& j, const FeedbackRecord& v) {
  j = Json{{"session_id", v.session_id}, {"proposal_seq", v.proposal_seq}, {"verdict", to_string(v.verdict)}};
  put_optional(j, "corrective_action", v.corrective_action);
}

void from_json(const Json& j, FeedbackRecord& v) {
  v.session_id = required(j, "session_id").get<std::string>();
  v.proposal_seq = required(j, "proposal_seq").get<std::int64_t>();
  v.verdict = decode_enum<Verdict>(required(j, "verdict"), "verdict");
  get_optional(j, "corrective_action", v.corrective_action);
}

void to_json(Json& j, const PolicyProposal& v) { j = Json{{"action", v.action}, {"confidence", v.confidence}}; }

void from_json(const Json& j, PolicyProposal& v) {
  v.action = required(j, "action").get<ActionRecord>();
  v.confidence = required(j, "confidence").get<double>();
}

void to_json(Json& j, const CriticScore& v) { j = Json{{"value", v.value}, {"source", to_string(v.source)}}; }

void from_json(const Json& j, CriticScore& v) {
  v.value = required(j, "value").get<double>();
  v.source = decode_enum<ScoreSource>(required(j, "source"), "source");
}

namespace {

Json body_to_json(const SessionEvent& e) {
  return std::visit(
      [](const auto& b) -> Json {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, SessionOpened>) {
          return Json{{"slice_id", b.slice_id}, {"customer_id", b.customer_id}, {"stage", to_string(b.stage)}};
        } else if constexpr (std::is_same_v<T, Deferral>) {
          Json j{{"reason", to_string(b.reason)}};
          put_optional(j, "proposal_seq", b.proposal_seq);
          if (!b.detail.empty()) j["detail"] = b.detail;
          return j;
        } else if constexpr (std::is_same_v<T, Handback>) {
          return Json{{"to", to_string(b.to)}, {"cause", to_string(b.cause)}};
        } else if constexpr (std::is_same_v<T, StageTransition>) {
          Json j{{"slice_id", b.slice_id}, {"from", to_string(b.from)}, {"to", to_string(b.to)}, {"authority", b.authority}};
          put_optional(j, "guardrail_id", b.guardrail_id);
          return j;
        } else if constexpr (std::is_same_v<T, GuardrailTrip>) {
          return Json{{"slice_id", b.slice_id}, {"rule", b.rule}, {"value", b.value}, {"bound", b.bound}};
        } else if constexpr (std::is_same_v<T, SessionClosed>) {
          return Json{{"by", to_string(b.by)}, {"reason", b.reason}};
        } else {
          return Json(b);
        }
      },
      e.body);
}

EventBody body_from_json(EventKind kind, const Json& j) {
  switch (kind) {
    case EventKind::session_opened:
      return SessionOpened{required(j, "slice_id").get<std::string>(), j.value("customer_id", std::string{}),
                           decode_enum<Stage>(required(j, "stage"), "stage")};
    case EventKind::customer_message:
    case EventKind::operator_message: return j.get<ChatMessage>();
    case EventKind::ui_snapshot: return j.get<UiSnapshot>();
    case EventKind::action_executed: return j.get<ActionRecord>();
    case EventKind::policy_proposal: return j.get<PolicyProposal>();
    case EventKind::critic_score: return j.get<CriticScore>();
    case EventKind::operator_feedback: return j.get<FeedbackRecord>();
    case EventKind::deferral: {
      Deferral d;
      d.reason = decode_enum<DeferralReason>(required(j, "reason"), "reason");
      get_optional(j, "proposal_seq", d.proposal_seq);
      d.detail = j.value("detail", std::string{});
      return d;
    }
    case EventKind::handback:
      return Handback{decode_enum<ControlHolder>(required(j, "to"), "to"),
                      decode_enum<HandbackCause>(required(j, "cause"), "cause")};
    case EventKind::stage_transition: {
      StageTransition t;
      t.slice_id = required(j, "slice_id").get<std::string>();
      t.from = decode_enum<Stage>(required(j, "from"), "from");
      t.to = decode_enum<Stage>(required(j, "to"), "to");
      t.authority = j.value("authority", std::string{});
      get_optional(j, "guardrail_id", t.guardrail_id);
      return t;
    }
    case EventKind::guardrail_trip:
      return GuardrailTrip{required(j, "slice_id").get<std::string>(), required(j, "rule").get<std::string>(),
                           required(j, "value").get<double>(), required(j, "bound").get<double>()};
    case EventKind::session_closed:
      return SessionClosed{decode_enum<ClosedBy>(required(j, "by"), "by"), j.value("reason", std::string{})};
  }
  throw Error(ErrorCode::malformed_event, "unhandled kind");
}

}  // namespace

void to_json(Json& j, const SessionEvent& v) {
  j = Json{{"session_id", v.session_id},
           {"event_seq", v.event_seq},
           {"ts", v.ts},
           {"kind", to_string(v.kind)},
           {"body", body_to_json(v)}};
}

void from_json(const Json& j, SessionEvent& v) {
  v.session_id = required(j, "session_id").get<std::string>();
  v.event_seq = required(j, "event_seq").get<std::int64_t>();
  v.ts = j.value("ts", TimestampMs{0});
  v.kind = decode_enum<EventKind>(required(j, "kind"), "kind");
  v.body = body_from_json(v.kind, required(j, "body"));
}

void to_json(Json& j, const PendingProposal& v) {
  j = Json{{"action", v.action},
           {"confidence", v.confidence},
           {"proposal_seq", v.proposal_seq},
           {"under_review", v.under_review},
           {"review_reason", to_string(v.review_reason)},
           {"accepted", v.accepted}};
  put_optional(j, "score", v.score);
}

void from_json(const Json& j, PendingProposal& v) {
  v.action = required(j, "action").get<ActionRecord>();
  v.confidence = required(j, "confidence").get<double>();
  get_optional(j, "score", v.score);
  v.proposal_seq = required(j, "proposal_seq").get<std::int64_t>();
  v.under_review = j.value("under_review", false);
  v.review_reason = decode_enum<DeferralReason>(required(j, "review_reason"), "review_reason");
  v.accepted = j.value("accepted", false);
}

void to_json(Json& j, const SessionState& v) {
  Json trace = Json::array();
  for (const auto& e : v.loop_trace) trace.push_back(Json::array({e.state_hash, e.action_fingerprint}));
  j = Json{{"session_id", v.session_id},
           {"slice_id", v.slice_id},
           {"customer_id", v.customer_id},
           {"stage", to_string(v.stage)},
           {"chat_window", Json(std::vector<ChatMessage>(v.chat_window.begin(), v.chat_window.end()))},
           {"current_snapshot", v.current_snapshot},
           {"control_holder", to_string(v.control_holder)},
           {"closed", v.closed},
           {"next_seq", v.next_seq},
           {"last_ts", v.last_ts},
           {"awaiting_since", v.awaiting_since},
           {"auto_steps", v.auto_steps},
           {"loop_trace", trace}};
  put_optional(j, "pending_proposal", v.pending_proposal);
}

void from_json(const Json& j, SessionState& v) {
  v.session_id = required(j, "session_id").get<std::string>();
  v.slice_id = required(j, "slice_id").get<std::string>();
  v.customer_id = j.value("customer_id", std::string{});
  v.stage = decode_enum<Stage>(required(j, "stage"), "stage");
  auto chat = required(j, "chat_window").get<std::vector<ChatMessage>>();
  v.chat_window.assign(chat.begin(), chat.end());
  v.current_snapshot = required(j, "current_snapshot").get<UiSnapshot>();
  v.control_holder = decode_enum<ControlHolder>(required(j, "control_holder"), "control_holder");
  get_optional(j, "pending_proposal", v.pending_proposal);
  v.closed = required(j, "closed").get<bool>();
  v.next_seq = required(j, "next_seq").get<std::int64_t>();
  v.last_ts = j.value("last_ts", TimestampMs{0});
  v.awaiting_since = j.value("awaiting_since", TimestampMs{0});
  v.auto_steps = j.value("auto_steps", 0);
  v.loop_trace.clear();
  for (const auto& e : j.value("loop_trace", Json::array()))
    v.loop_trace.push_back({e.at(0).get<std::uint64_t>(), e.at(1).get<std::uint64_t>()});
}

std::string to_jsonl(const SessionEvent& event) { return Json(event).dump(); }

SessionEvent event_from_jsonl(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::malformed_event, e.what());
  }
  try {
    return j.get<SessionEvent>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::malformed_event, e.what());
  }
}

std::uint64_t full_state_digest(const SessionState& state) {
  return Hasher{}.add(Json(state).dump()).digest();
}

}  // namespace stepgate
