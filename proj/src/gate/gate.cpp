#include "stepgate/gate/gate.hpp"

#include "stepgate/common/error.hpp"
#include "stepgate/domain/state.hpp"

namespace stepgate {
namespace {

class Emitter {
 public:
  Emitter(const SessionState& s, TimestampMs now) : id_(s.session_id), seq_(s.next_seq), now_(now) {}

  std::int64_t emit(EventKind kind, EventBody body) {
    events_.push_back(SessionEvent{id_, seq_, now_, kind, std::move(body)});
    return seq_++;
  }

  std::vector<SessionEvent> take() { return std::move(events_); }

 private:
  std::string id_;
  std::int64_t seq_;
  TimestampMs now_;
  std::vector<SessionEvent> events_;
};

void require_open(const SessionState& s) {
  if (s.closed) throw Error(ErrorCode::session_closed, s.session_id + " is closed");
}

// What happens after the operator executes an action while holding control.
void after_operator_action(Emitter& out, const SessionState& s, const ActionRecord& a, const StageConfig& config) {
  switch (classify_criticality(a, config.criticality)) {
    case Criticality::finalizing: out.emit(EventKind::session_closed, SessionClosed{ClosedBy::operator_, "finalized"}); break;
    case Criticality::critical:
      if (s.stage != Stage::logging)
        out.emit(EventKind::handback, Handback{ControlHolder::policy, HandbackCause::operator_critical_action});
      break;
    case Criticality::non_critical: break;
  }
}

ActionRecord as_operator(ActionRecord a, TimestampMs now) {
  a.actor = Actor::operator_;
  a.timestamp = now;
  return a;
}

}  // namespace

std::string_view to_string(GateAction v) {
  switch (v) {
    case GateAction::execute: return "execute";
    case GateAction::defer_to_operator: return "defer_to_operator";
    case GateAction::human_review_finalization: return "human_review_finalization";
    case GateAction::await_customer: return "await_customer";
  }
  return "?";
}

std::string_view to_string(GateReason v) {
  switch (v) {
    case GateReason::non_critical: return "non_critical";
    case GateReason::above_threshold: return "above_threshold";
    case GateReason::below_threshold: return "below_threshold";
    case GateReason::policy_abstained: return "policy_abstained";
    case GateReason::finalization_gate: return "finalization_gate";
    case GateReason::fallback_triggered: return "fallback_triggered";
    case GateReason::copilot_review: return "copilot_review";
    case GateReason::wait_for_customer: return "wait_for_customer";
  }
  return "?";
}

StepResult step(const SessionState& s, const StageConfig& config, const ThresholdPolicy& thresholds,
                const Policy& policy, const Critic& critic, TimestampMs now) {
  require_open(s);
  if (s.control_holder != ControlHolder::policy)
    throw Error(ErrorCode::not_policy_turn, s.session_id + " is not held by the policy");

  Emitter out(s, now);
  auto defer = [&](DeferralReason why, std::optional<std::int64_t> seq, std::string detail) {
    out.emit(EventKind::deferral, Deferral{why, seq, std::move(detail)});
  };

  if (s.auto_steps >= config.max_auto_steps) {
    defer(DeferralReason::fallback_triggered, std::nullopt, "max_auto_steps");
    return {{GateAction::defer_to_operator, std::nullopt, GateReason::fallback_triggered}, out.take()};
  }

  auto outcome = policy.propose(s);
  if (auto* none = std::get_if<NoAction>(&outcome)) {
    defer(DeferralReason::policy_abstained, std::nullopt, none->reason);
    return {{GateAction::defer_to_operator, std::nullopt, GateReason::policy_abstained}, out.take()};
  }
  if (std::holds_alternative<WaitForCustomer>(outcome)) {
    out.emit(EventKind::handback, Handback{ControlHolder::awaiting_customer, HandbackCause::await_customer});
    return {{GateAction::await_customer, std::nullopt, GateReason::wait_for_customer}, out.take()};
  }

  PolicyProposal proposal = std::get<PolicyProposal>(std::move(outcome));
  proposal.action.actor = Actor::policy;
  proposal.action.timestamp = now;
  validate(proposal.action);
  const auto proposal_seq = out.emit(EventKind::policy_proposal, proposal);

  // Loop detection sees the trace including this proposal.
  SessionState probe = s;
  probe.loop_trace.push_back({state_hash(s), fingerprint(proposal.action)});
  if (detect_loop(probe.loop_trace, config.loop_detection_k)) {
    defer(DeferralReason::fallback_triggered, std::nullopt, "loop");
    return {{GateAction::defer_to_operator, std::nullopt, GateReason::fallback_triggered}, out.take()};
  }
  if (proposal.action.target_control_id && !s.current_snapshot.find(*proposal.action.target_control_id)) {
    defer(DeferralReason::fallback_triggered, std::nullopt, "stale_snapshot");
    return {{GateAction::defer_to_operator, std::nullopt, GateReason::fallback_triggered}, out.take()};
  }

  const auto crit = classify_criticality(proposal.action, config.criticality);
  if (crit == Criticality::non_critical) {
    out.emit(EventKind::action_executed, proposal.action);
    return {{GateAction::execute, std::nullopt, GateReason::non_critical}, out.take()};
  }

  if (s.stage == Stage::copilot) {
    std::optional<CriticScore> shadow;
    if (config.shadow_score_in_copilot) {
      shadow = critic.score(s, proposal);
      out.emit(EventKind::critic_score, *shadow);
    }
    defer(DeferralReason::copilot_review, proposal_seq, "");
    return {{GateAction::defer_to_operator, shadow, GateReason::copilot_review}, out.take()};
  }

  const CriticScore score = critic.score(s, proposal);
  out.emit(EventKind::critic_score, score);
  if (score.value >= thresholds.tau_for(proposal.action.action_type)) {
    if (crit == Criticality::finalizing && config.finalization_gated(s.stage)) {
      defer(DeferralReason::finalization_gate, proposal_seq, "");
      return {{GateAction::human_review_finalization, score, GateReason::finalization_gate}, out.take()};
    }
    out.emit(EventKind::action_executed, proposal.action);
    if (crit == Criticality::finalizing)
      out.emit(EventKind::session_closed, SessionClosed{ClosedBy::policy, "finalized"});
    return {{GateAction::execute, score, GateReason::above_threshold}, out.take()};
  }
  defer(DeferralReason::below_threshold, proposal_seq, "");
  return {{GateAction::defer_to_operator, score, GateReason::below_threshold}, out.take()};
}

std::vector<SessionEvent> resolve_review(const SessionState& s, Verdict verdict,
                                         const std::optional<ActionRecord>& corrective, const StageConfig& config,
                                         TimestampMs now, std::optional<std::int64_t> proposal_seq) {
  require_open(s);
  const auto& pending = s.pending_proposal;
  if (proposal_seq && (!pending || !pending->under_review || pending->proposal_seq != *proposal_seq))
    throw Error(ErrorCode::stale_decision, s.session_id + ": proposal " + std::to_string(*proposal_seq) +
                                               " is no longer pending");
  if (!pending || !pending->under_review)
    throw Error(ErrorCode::no_pending_proposal, s.session_id + " has no proposal under review");

  Emitter out(s, now);
  if (verdict == Verdict::accept) {
    out.emit(EventKind::operator_feedback, FeedbackRecord{s.session_id, pending->proposal_seq, Verdict::accept, {}});
    ActionRecord a = pending->action;
    a.timestamp = now;
    out.emit(EventKind::action_executed, a);
    if (classify_criticality(a, config.criticality) == Criticality::finalizing)
      out.emit(EventKind::session_closed, SessionClosed{ClosedBy::policy, "finalized"});
    return out.take();
  }

  if (!corrective) throw Error(ErrorCode::missing_correction, "reject requires a corrective action");
  const ActionRecord fix = as_operator(*corrective, now);
  validate(fix);
  out.emit(EventKind::operator_feedback, FeedbackRecord{s.session_id, pending->proposal_seq, Verdict::reject, fix});
  out.emit(EventKind::action_executed, fix);
  after_operator_action(out, s, fix, config);
  return out.take();
}

std::vector<SessionEvent> operator_action(const SessionState& s, const ActionRecord& action,
                                          const StageConfig& config, TimestampMs now) {
  require_open(s);
  if (s.control_holder != ControlHolder::operator_)
    throw Error(ErrorCode::not_operator_turn, s.session_id + " is not held by the operator");
  if (s.pending_proposal && s.pending_proposal->under_review)
    return resolve_review(s, Verdict::reject, action, config, now);
  const ActionRecord a = as_operator(action, now);
  validate(a);
  Emitter out(s, now);
  out.emit(EventKind::action_executed, a);
  after_operator_action(out, s, a, config);
  return out.take();
}

std::vector<SessionEvent> handback(const SessionState& s, TimestampMs now) {
  require_open(s);
  if (s.control_holder != ControlHolder::operator_ || s.stage == Stage::logging)
    throw Error(ErrorCode::handback_without_deferral, s.session_id + " has no outstanding deferral");
  Emitter out(s, now);
  out.emit(EventKind::handback, Handback{ControlHolder::policy, HandbackCause::explicit_signal});
  return out.take();
}

bool detect_loop(std::span<const LoopEntry> trace, int k) noexcept {
  if (k <= 0) return false;
  if (trace.size() < static_cast<std::size_t>(k)) return false;
  const auto& last = trace.back();
  int run = 0;
  for (auto it = trace.rbegin(); it != trace.rend() && *it == last; ++it)
    if (++run >= k) return true;
  return false;
}

StageTransition transition_stage(const std::string& slice_id, Stage from, Stage to, const std::string& authority,
                                 std::optional<std::string> guardrail_id) {
  const bool forward = (from == Stage::logging && to == Stage::copilot) ||
                       (from == Stage::copilot && to == Stage::calibration) ||
                       (from == Stage::calibration && to == Stage::automation);
  const bool fallback = to == Stage::copilot && from != Stage::copilot;
  if (!forward && !fallback)
    throw Error(ErrorCode::illegal_transition, slice_id + ": " + std::to_string(static_cast<int>(from)) + " -> " +
                                                   std::to_string(static_cast<int>(to)) + " is not allowed");
  return StageTransition{slice_id, from, to, authority, std::move(guardrail_id)};
}

CustomerMessageResult customer_message(const SessionState& s, const ChatMessage& message,
                                       TimestampMs reply_timeout_ms, TimestampMs now) {
  require_open(s);
  CustomerMessageResult r;
  Emitter out(s, now);
  if (s.control_holder == ControlHolder::awaiting_customer && now - s.awaiting_since > reply_timeout_ms) {
    out.emit(EventKind::session_closed, SessionClosed{ClosedBy::system, kReplyTimeoutReason});
    r.opens_new_session = true;
  } else {
    out.emit(EventKind::customer_message, message);
  }
  r.events = out.take();
  return r;
}

std::vector<SessionEvent> expire_if_idle(const SessionState& s, TimestampMs reply_timeout_ms, TimestampMs now) {
  if (s.closed || s.control_holder != ControlHolder::awaiting_customer || now - s.awaiting_since <= reply_timeout_ms)
    return {};
  Emitter out(s, now);
  out.emit(EventKind::session_closed, SessionClosed{ClosedBy::system, kReplyTimeoutReason});
  return out.take();
}

std::vector<GateDecision> replay_decisions(std::span<const SessionEvent> events) {
  std::vector<GateDecision> decisions;
  bool open = false;
  std::optional<CriticScore> score;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::policy_proposal:
        open = true;
        score.reset();
        break;
      case EventKind::critic_score:
        if (open) score = e.as<CriticScore>();
        break;
      case EventKind::action_executed:
        if (open && e.as<ActionRecord>().actor == Actor::policy) {
          decisions.push_back({GateAction::execute, score,
                               score ? GateReason::above_threshold : GateReason::non_critical});
          open = false;
        }
        break;
      case EventKind::deferral: {
        const auto& d = e.as<Deferral>();
        // Only gate steps emit deferrals; a deferral outside a proposal is an
        // abstention or a pre-proposal fallback.
        GateDecision g{GateAction::defer_to_operator, open ? score : std::nullopt, GateReason::fallback_triggered};
        switch (d.reason) {
          case DeferralReason::below_threshold: g.reason = GateReason::below_threshold; break;
          case DeferralReason::policy_abstained: g.reason = GateReason::policy_abstained; break;
          case DeferralReason::fallback_triggered: g.reason = GateReason::fallback_triggered; break;
          case DeferralReason::copilot_review: g.reason = GateReason::copilot_review; break;
          case DeferralReason::finalization_gate:
            g.action = GateAction::human_review_finalization;
            g.reason = GateReason::finalization_gate;
            break;
        }
        decisions.push_back(g);
        open = false;
        break;
      }
      case EventKind::handback:
        if (e.as<Handback>().to == ControlHolder::awaiting_customer)
          decisions.push_back({GateAction::await_customer, std::nullopt, GateReason::wait_for_customer});
        break;
      default: break;
    }
  }
  return decisions;
}

void commit(SessionState& state, std::span<const SessionEvent> events) {
  for (const auto& e : events) apply_event(state, e);
}

}  // namespace stepgate
