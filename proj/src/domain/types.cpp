#include "stepgate/domain/types.hpp"

#include "stepgate/common/error.hpp"
#include "stepgate/common/hash.hpp"
#include "stepgate/domain/names.hpp"

namespace stepgate {

const UiControl* UiSnapshot::find(std::string_view control_id) const noexcept {
  for (const auto& c : controls)
    if (c.control_id == control_id) return &c;
  return nullptr;
}

UiSnapshot UiSnapshot::empty() {
  UiSnapshot s;
  s.screen_id = "none";
  s.snapshot_seq = -1;
  return s;
}

ActionCategory category_of(ActionType t) noexcept {
  switch (t) {
    case ActionType::send_text_to_chat: return ActionCategory::message_composition;
    case ActionType::open_procedure:
    case ActionType::click_control: return ActionCategory::navigation;
    case ActionType::select_radio_button:
    case ActionType::select_element_in_combo_box:
    case ActionType::select_element_in_select:
    case ActionType::fill_input: return ActionCategory::selection_form_filling;
    case ActionType::close_chat:
    case ActionType::transfer_chat: return ActionCategory::session_management;
  }
  return ActionCategory::navigation;
}

bool requires_target(ActionType t) noexcept {
  return t != ActionType::send_text_to_chat && t != ActionType::close_chat && t != ActionType::transfer_chat;
}

bool requires_payload(ActionType t) noexcept {
  switch (t) {
    case ActionType::send_text_to_chat:
    case ActionType::fill_input:
    case ActionType::select_radio_button:
    case ActionType::select_element_in_combo_box:
    case ActionType::select_element_in_select:
    case ActionType::open_procedure:
    case ActionType::transfer_chat: return true;
    default: return false;
  }
}

void validate(const ActionRecord& action) {
  const auto name = std::string(to_string(action.action_type));
  if (requires_target(action.action_type) && (!action.target_control_id || action.target_control_id->empty()))
    throw Error(ErrorCode::malformed_action, name + " requires target_control_id");
  if (requires_payload(action.action_type) && !action.payload)
    throw Error(ErrorCode::malformed_action, name + " requires payload");
  if (action.action_type == ActionType::send_text_to_chat && action.payload->empty())
    throw Error(ErrorCode::malformed_action, "send_text_to_chat with empty text");
}

std::uint64_t fingerprint(const ActionRecord& action) noexcept {
  Hasher h;
  h.add(static_cast<std::uint64_t>(action.action_type));
  h.add(action.target_control_id.has_value());
  if (action.target_control_id) h.add(*action.target_control_id);
  h.add(action.payload.has_value());
  if (action.payload) h.add(*action.payload);
  return h.digest();
}

bool same_action(const ActionRecord& a, const ActionRecord& b) noexcept {
  return a.action_type == b.action_type && a.target_control_id == b.target_control_id && a.payload == b.payload;
}

void validate(const FeedbackRecord& feedback) {
  if (feedback.verdict == Verdict::reject) {
    if (!feedback.corrective_action)
      throw Error(ErrorCode::missing_correction, "reject verdict without corrective action");
  } else if (feedback.corrective_action) {
    throw Error(ErrorCode::malformed_event, "accept verdict carries a corrective action");
  }
  if (feedback.corrective_action) {
    if (feedback.corrective_action->actor != Actor::operator_)
      throw Error(ErrorCode::malformed_event, "corrective action must be performed by the operator");
    validate(*feedback.corrective_action);
  }
}

void validate(const SessionEvent& event) {
  bool ok = false;
  switch (event.kind) {
    case EventKind::session_opened: ok = std::holds_alternative<SessionOpened>(event.body); break;
    case EventKind::customer_message:
    case EventKind::operator_message: ok = std::holds_alternative<ChatMessage>(event.body); break;
    case EventKind::ui_snapshot: ok = std::holds_alternative<UiSnapshot>(event.body); break;
    case EventKind::action_executed: ok = std::holds_alternative<ActionRecord>(event.body); break;
    case EventKind::policy_proposal: ok = std::holds_alternative<PolicyProposal>(event.body); break;
    case EventKind::critic_score: ok = std::holds_alternative<CriticScore>(event.body); break;
    case EventKind::operator_feedback: ok = std::holds_alternative<FeedbackRecord>(event.body); break;
    case EventKind::deferral: ok = std::holds_alternative<Deferral>(event.body); break;
    case EventKind::handback: ok = std::holds_alternative<Handback>(event.body); break;
    case EventKind::stage_transition: ok = std::holds_alternative<StageTransition>(event.body); break;
    case EventKind::guardrail_trip: ok = std::holds_alternative<GuardrailTrip>(event.body); break;
    case EventKind::session_closed: ok = std::holds_alternative<SessionClosed>(event.body); break;
  }
  if (!ok)
    throw Error(ErrorCode::malformed_event,
                "body does not match kind " + std::string(to_string(event.kind)) + " at seq " +
                    std::to_string(event.event_seq));
}

}  // namespace stepgate
