#pragma once

// Per-session staged state machine. Every function here is a pure transition:
// it reads a SessionState and returns the events to append. Callers (service,
// simulator) own persistence and the per-session serialization guarantee.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepgate/decision/decision.hpp"
#include "stepgate/domain/criticality.hpp"
#include "stepgate/domain/threshold.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate {

struct StageConfig {
  // Always in force during calibration; optional in automation.
  bool finalization_human_gated = false;
  int max_auto_steps = 50;
  int loop_detection_k = 3;
  // Score critical proposals in copilot too, so copilot feedback can feed
  // offline calibration.
  bool shadow_score_in_copilot = true;
  CriticalityMap criticality = CriticalityMap::defaults();

  bool finalization_gated(Stage stage) const noexcept {
    return stage == Stage::calibration || finalization_human_gated;
  }
};

enum class GateAction { execute, defer_to_operator, human_review_finalization, await_customer };

enum class GateReason {
  non_critical,
  above_threshold,
  below_threshold,
  policy_abstained,
  finalization_gate,
  fallback_triggered,
  copilot_review,
  wait_for_customer,
};

struct GateDecision {
  GateAction action = GateAction::execute;
  std::optional<CriticScore> score;
  GateReason reason = GateReason::non_critical;

  bool operator==(const GateDecision&) const = default;
};

std::string_view to_string(GateAction v);
std::string_view to_string(GateReason v);

struct StepResult {
  GateDecision decision;
  std::vector<SessionEvent> events;
};

// One policy turn. Throws SessionClosed, NotPolicyTurn.
StepResult step(const SessionState& state, const StageConfig& config, const ThresholdPolicy& thresholds,
                const Policy& policy, const Critic& critic, TimestampMs now);

// Operator resolution of the proposal under review (copilot review, threshold
// deferral or finalization review). Reject requires the corrective action,
// which is executed by the operator in the same call. Throws NoPendingProposal,
// MissingCorrection, StaleDecision when proposal_seq is given and superseded.
std::vector<SessionEvent> resolve_review(const SessionState& state, Verdict verdict,
                                         const std::optional<ActionRecord>& corrective, const StageConfig& config,
                                         TimestampMs now, std::optional<std::int64_t> proposal_seq = std::nullopt);

// Operator acts while holding control. During an open review this is an
// implicit reject with the action as correction. Control returns to the policy
// automatically after a critical action; a finalizing action closes the session.
// Throws NotOperatorTurn.
std::vector<SessionEvent> operator_action(const SessionState& state, const ActionRecord& action,
                                          const StageConfig& config, TimestampMs now);

// Explicit handback signal from the console. Throws HandbackWithoutDeferral.
std::vector<SessionEvent> handback(const SessionState& state, TimestampMs now);

// True iff the trailing run of identical (state_hash, fingerprint) entries has length >= k.
bool detect_loop(std::span<const LoopEntry> trace, int k) noexcept;

// Allowed: logging->copilot, copilot->calibration, calibration->automation and
// any stage -> copilot (fallback). Throws IllegalTransition otherwise.
StageTransition transition_stage(const std::string& slice_id, Stage from, Stage to, const std::string& authority,
                                 std::optional<std::string> guardrail_id = std::nullopt);

struct CustomerMessageResult {
  std::vector<SessionEvent> events;
  // The message arrived after the reply timeout: the session was closed and the
  // message belongs to a new session.
  bool opens_new_session = false;
};

CustomerMessageResult customer_message(const SessionState& state, const ChatMessage& message,
                                       TimestampMs reply_timeout_ms, TimestampMs now);

// Closes a session that has been awaiting the customer for longer than the timeout.
std::vector<SessionEvent> expire_if_idle(const SessionState& state, TimestampMs reply_timeout_ms, TimestampMs now);

inline constexpr TimestampMs kDefaultReplyTimeoutMs = 600'000;
inline constexpr const char* kReplyTimeoutReason = "reply_timeout";

// Reconstructs the GateDecision of every policy turn from a session log.
std::vector<GateDecision> replay_decisions(std::span<const SessionEvent> events);

// Applies produced events to a state (throws on any fold violation).
void commit(SessionState& state, std::span<const SessionEvent> events);

}  // namespace stepgate
