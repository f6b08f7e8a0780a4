#include "stepgate/domain/names.hpp"

#include <array>
#include <utility>

namespace stepgate {
namespace {

template <typename Enum, std::size_t N>
using Table = std::array<std::pair<Enum, std::string_view>, N>;

constexpr Table<Author, 3> kAuthor{{{Author::customer, "customer"},
                                    {Author::operator_, "operator"},
                                    {Author::system, "system"}}};

constexpr Table<ControlKind, 7> kControlKind{{{ControlKind::button, "button"},
                                              {ControlKind::input, "input"},
                                              {ControlKind::radio, "radio"},
                                              {ControlKind::combo_box, "combo_box"},
                                              {ControlKind::select, "select"},
                                              {ControlKind::link, "link"},
                                              {ControlKind::tab, "tab"}}};

constexpr Table<ActionType, 9> kActionType{{
    {ActionType::send_text_to_chat, "send_text_to_chat"},
    {ActionType::open_procedure, "open_procedure"},
    {ActionType::click_control, "click_control"},
    {ActionType::select_radio_button, "select_radio_button"},
    {ActionType::select_element_in_combo_box, "select_element_in_combo_box"},
    {ActionType::select_element_in_select, "select_element_in_select"},
    {ActionType::fill_input, "fill_input"},
    {ActionType::close_chat, "close_chat"},
    {ActionType::transfer_chat, "transfer_chat"},
}};

constexpr Table<ActionCategory, 4> kActionCategory{{
    {ActionCategory::message_composition, "message_composition"},
    {ActionCategory::navigation, "navigation"},
    {ActionCategory::selection_form_filling, "selection_form_filling"},
    {ActionCategory::session_management, "session_management"},
}};

constexpr Table<Actor, 2> kActor{{{Actor::operator_, "operator"}, {Actor::policy, "policy"}}};
constexpr Table<Verdict, 2> kVerdict{{{Verdict::accept, "accept"}, {Verdict::reject, "reject"}}};

constexpr Table<Stage, 4> kStage{{{Stage::logging, "logging"},
                                  {Stage::copilot, "copilot"},
                                  {Stage::calibration, "calibration"},
                                  {Stage::automation, "automation"}}};

constexpr Table<ControlHolder, 3> kControlHolder{{{ControlHolder::policy, "policy"},
                                                  {ControlHolder::operator_, "operator"},
                                                  {ControlHolder::awaiting_customer, "awaiting_customer"}}};

constexpr Table<ScoreSource, 3> kScoreSource{{{ScoreSource::confidence_baseline, "confidence_baseline"},
                                              {ScoreSource::stub, "stub"},
                                              {ScoreSource::external, "external"}}};

constexpr Table<DeferralReason, 5> kDeferralReason{{{DeferralReason::below_threshold, "below_threshold"},
                                                    {DeferralReason::policy_abstained, "policy_abstained"},
                                                    {DeferralReason::finalization_gate, "finalization_gate"},
                                                    {DeferralReason::fallback_triggered, "fallback_triggered"},
                                                    {DeferralReason::copilot_review, "copilot_review"}}};

constexpr Table<HandbackCause, 3> kHandbackCause{{{HandbackCause::explicit_signal, "explicit_signal"},
                                                  {HandbackCause::operator_critical_action, "operator_critical_action"},
                                                  {HandbackCause::await_customer, "await_customer"}}};

constexpr Table<ClosedBy, 3> kClosedBy{{{ClosedBy::policy, "policy"},
                                        {ClosedBy::operator_, "operator"},
                                        {ClosedBy::system, "system"}}};

constexpr Table<EventKind, 13> kEventKind{{
    {EventKind::session_opened, "session_opened"},
    {EventKind::customer_message, "customer_message"},
    {EventKind::operator_message, "operator_message"},
    {EventKind::ui_snapshot, "ui_snapshot"},
    {EventKind::action_executed, "action_executed"},
    {EventKind::policy_proposal, "policy_proposal"},
    {EventKind::critic_score, "critic_score"},
    {EventKind::operator_feedback, "operator_feedback"},
    {EventKind::deferral, "deferral"},
    {EventKind::handback, "handback"},
    {EventKind::stage_transition, "stage_transition"},
    {EventKind::guardrail_trip, "guardrail_trip"},
    {EventKind::session_closed, "session_closed"},
}};

constexpr Table<Provenance, 2> kProvenance{{{Provenance::predefined, "predefined"},
                                            {Provenance::rejected, "rejected"}}};

template <typename Enum, std::size_t N>
std::string_view lookup(const Table<Enum, N>& table, Enum v) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

template <typename Enum, std::size_t N>
std::optional<Enum> reverse(const Table<Enum, N>& table, std::string_view name) {
  for (const auto& [e, n] : table)
    if (n == name) return e;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Author v) { return lookup(kAuthor, v); }
std::string_view to_string(ControlKind v) { return lookup(kControlKind, v); }
std::string_view to_string(ActionType v) { return lookup(kActionType, v); }
std::string_view to_string(ActionCategory v) { return lookup(kActionCategory, v); }
std::string_view to_string(Actor v) { return lookup(kActor, v); }
std::string_view to_string(Verdict v) { return lookup(kVerdict, v); }
std::string_view to_string(Stage v) { return lookup(kStage, v); }
std::string_view to_string(ControlHolder v) { return lookup(kControlHolder, v); }
std::string_view to_string(ScoreSource v) { return lookup(kScoreSource, v); }
std::string_view to_string(DeferralReason v) { return lookup(kDeferralReason, v); }
std::string_view to_string(HandbackCause v) { return lookup(kHandbackCause, v); }
std::string_view to_string(ClosedBy v) { return lookup(kClosedBy, v); }
std::string_view to_string(EventKind v) { return lookup(kEventKind, v); }
std::string_view to_string(Provenance v) { return lookup(kProvenance, v); }

template <> std::optional<Author> parse_enum<Author>(std::string_view n) { return reverse(kAuthor, n); }
template <> std::optional<ControlKind> parse_enum<ControlKind>(std::string_view n) { return reverse(kControlKind, n); }
template <> std::optional<ActionType> parse_enum<ActionType>(std::string_view n) { return reverse(kActionType, n); }
template <> std::optional<ActionCategory> parse_enum<ActionCategory>(std::string_view n) { return reverse(kActionCategory, n); }
template <> std::optional<Actor> parse_enum<Actor>(std::string_view n) { return reverse(kActor, n); }
template <> std::optional<Verdict> parse_enum<Verdict>(std::string_view n) { return reverse(kVerdict, n); }
template <> std::optional<Stage> parse_enum<Stage>(std::string_view n) { return reverse(kStage, n); }
template <> std::optional<ControlHolder> parse_enum<ControlHolder>(std::string_view n) { return reverse(kControlHolder, n); }
template <> std::optional<ScoreSource> parse_enum<ScoreSource>(std::string_view n) { return reverse(kScoreSource, n); }
template <> std::optional<DeferralReason> parse_enum<DeferralReason>(std::string_view n) { return reverse(kDeferralReason, n); }
template <> std::optional<HandbackCause> parse_enum<HandbackCause>(std::string_view n) { return reverse(kHandbackCause, n); }
template <> std::optional<ClosedBy> parse_enum<ClosedBy>(std::string_view n) { return reverse(kClosedBy, n); }
template <> std::optional<EventKind> parse_enum<EventKind>(std::string_view n) { return reverse(kEventKind, n); }
template <> std::optional<Provenance> parse_enum<Provenance>(std::string_view n) { return reverse(kProvenance, n); }

}  // namespace stepgate
