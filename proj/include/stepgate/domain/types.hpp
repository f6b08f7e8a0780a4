#pragma once

// Core value types shared by every module: chat, UI snapshots, actions,
// feedback and the event envelope of a support session.

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stepgate {

using TimestampMs = std::int64_t;

enum class Author { customer, operator_, system };

struct ChatMessage {
  Author author = Author::customer;
  std::string text;
  TimestampMs timestamp = 0;
  std::string message_id;

  bool operator==(const ChatMessage&) const = default;
};

enum class ControlKind { button, input, radio, combo_box, select, link, tab };

// Option lists exist exactly for the choice-style controls.
constexpr bool has_options(ControlKind kind) noexcept {
  return kind == ControlKind::radio || kind == ControlKind::combo_box || kind == ControlKind::select;
}

struct UiControl {
  std::string control_id;
  ControlKind kind = ControlKind::button;
  std::string label;
  std::optional<std::string> value;
  std::optional<std::vector<std::string>> options;

  bool operator==(const UiControl&) const = default;
};

struct UiSnapshot {
  std::string screen_id;
  std::vector<UiControl> controls;
  std::optional<std::string> active_scenario;
  std::map<std::string, std::string> customer_profile;
  std::vector<std::string> global_announcements;
  std::int64_t snapshot_seq = -1;

  const UiControl* find(std::string_view control_id) const noexcept;
  bool operator==(const UiSnapshot&) const = default;

  // Placeholder used before the first snapshot of a session arrives.
  static UiSnapshot empty();
};

// The closed nine-command action vocabulary.
enum class ActionType {
  send_text_to_chat,
  open_procedure,
  click_control,
  select_radio_button,
  select_element_in_combo_box,
  select_element_in_select,
  fill_input,
  close_chat,
  transfer_chat,
};

inline constexpr std::array<ActionType, 9> kAllActionTypes = {
    ActionType::send_text_to_chat,           ActionType::open_procedure,
    ActionType::click_control,               ActionType::select_radio_button,
    ActionType::select_element_in_combo_box, ActionType::select_element_in_select,
    ActionType::fill_input,                  ActionType::close_chat,
    ActionType::transfer_chat,
};

constexpr std::size_t index_of(ActionType t) noexcept { return static_cast<std::size_t>(t); }

enum class ActionCategory { message_composition, navigation, selection_form_filling, session_management };
ActionCategory category_of(ActionType t) noexcept;

bool requires_target(ActionType t) noexcept;
bool requires_payload(ActionType t) noexcept;

enum class Actor { operator_, policy };

struct ActionRecord {
  ActionType action_type = ActionType::click_control;
  std::optional<std::string> target_control_id;
  std::optional<std::string> payload;
  Actor actor = Actor::operator_;
  TimestampMs timestamp = 0;

  bool operator==(const ActionRecord&) const = default;
};

// Throws Error(malformed_action) when target/payload presence violates the
// per-type rules.
void validate(const ActionRecord& action);

// Identity of "what the action does": type, target and payload. Actor and
// timestamp are excluded so a proposal and its execution fingerprint equal.
std::uint64_t fingerprint(const ActionRecord& action) noexcept;
bool same_action(const ActionRecord& a, const ActionRecord& b) noexcept;

enum class Verdict { accept, reject };

struct FeedbackRecord {
  std::string session_id;
  std::int64_t proposal_seq = 0;
  Verdict verdict = Verdict::accept;
  std::optional<ActionRecord> corrective_action;

  bool operator==(const FeedbackRecord&) const = default;
};

void validate(const FeedbackRecord& feedback);

enum class Stage { logging, copilot, calibration, automation };

// Origin of a training/evaluation sample: historical operator logs or copilot
// rejections (target = operator correction).
enum class Provenance { predefined, rejected };
enum class ControlHolder { policy, operator_, awaiting_customer };

struct PolicyProposal {
  ActionRecord action;
  double confidence = 1.0;

  bool operator==(const PolicyProposal&) const = default;
};

enum class ScoreSource { confidence_baseline, stub, external };

struct CriticScore {
  double value = 0.0;
  ScoreSource source = ScoreSource::stub;

  bool operator==(const CriticScore&) const = default;
};

enum class DeferralReason { below_threshold, policy_abstained, finalization_gate, fallback_triggered, copilot_review };

struct SessionOpened {
  std::string slice_id;
  std::string customer_id;
  Stage stage = Stage::logging;

  bool operator==(const SessionOpened&) const = default;
};

struct Deferral {
  DeferralReason reason = DeferralReason::below_threshold;
  // Set when the operator is asked to review a concrete proposal.
  std::optional<std::int64_t> proposal_seq;
  std::string detail;

  bool operator==(const Deferral&) const = default;
};

enum class HandbackCause { explicit_signal, operator_critical_action, await_customer };

struct Handback {
  ControlHolder to = ControlHolder::policy;
  HandbackCause cause = HandbackCause::explicit_signal;

  bool operator==(const Handback&) const = default;
};

struct StageTransition {
  std::string slice_id;
  Stage from = Stage::logging;
  Stage to = Stage::logging;
  std::string authority;
  std::optional<std::string> guardrail_id;

  bool operator==(const StageTransition&) const = default;
};

struct GuardrailTrip {
  std::string slice_id;
  std::string rule;
  double value = 0.0;
  double bound = 0.0;

  bool operator==(const GuardrailTrip&) const = default;
};

enum class ClosedBy { policy, operator_, system };

struct SessionClosed {
  ClosedBy by = ClosedBy::system;
  std::string reason;

  bool operator==(const SessionClosed&) const = default;
};

enum class EventKind {
  session_opened,
  customer_message,
  operator_message,
  ui_snapshot,
  action_executed,
  policy_proposal,
  critic_score,
  operator_feedback,
  deferral,
  handback,
  stage_transition,
  guardrail_trip,
  session_closed,
};

using EventBody = std::variant<SessionOpened, ChatMessage, UiSnapshot, ActionRecord, PolicyProposal, CriticScore,
                               FeedbackRecord, Deferral, Handback, StageTransition, GuardrailTrip, SessionClosed>;

struct SessionEvent {
  std::string session_id;
  std::int64_t event_seq = 0;
  TimestampMs ts = 0;
  EventKind kind = EventKind::session_opened;
  EventBody body;

  bool operator==(const SessionEvent&) const = default;

  template <typename T>
  const T& as() const {
    return std::get<T>(body);
  }
};

// Throws Error(malformed_event) when the body alternative does not match kind.
void validate(const SessionEvent& event);

inline constexpr std::size_t kChatWindow = 30;

struct PendingProposal {
  ActionRecord action;
  double confidence = 1.0;
  std::optional<CriticScore> score;
  std::int64_t proposal_seq = 0;
  bool under_review = false;
  DeferralReason review_reason = DeferralReason::below_threshold;
  bool accepted = false;

  bool operator==(const PendingProposal&) const = default;
};

struct LoopEntry {
  std::uint64_t state_hash = 0;
  std::uint64_t action_fingerprint = 0;

  bool operator==(const LoopEntry&) const = default;
};

inline constexpr std::size_t kLoopTraceCapacity = 32;

struct SessionState {
  std::string session_id;
  std::string slice_id;
  std::string customer_id;
  Stage stage = Stage::logging;
  std::deque<ChatMessage> chat_window;
  UiSnapshot current_snapshot = UiSnapshot::empty();
  ControlHolder control_holder = ControlHolder::operator_;
  std::optional<PendingProposal> pending_proposal;
  bool closed = false;

  // Bookkeeping derived from the event stream.
  std::int64_t next_seq = 0;
  TimestampMs last_ts = 0;
  TimestampMs awaiting_since = 0;
  int auto_steps = 0;
  std::vector<LoopEntry> loop_trace;

  bool operator==(const SessionState&) const = default;
};

}  // namespace stepgate
