#include "stepgate/domain/state.hpp"

#include <string>

#include "stepgate/common/error.hpp"
#include "stepgate/common/hash.hpp"
#include "stepgate/domain/names.hpp"

namespace stepgate {
namespace {

[[noreturn]] void reject(const SessionEvent& e, const std::string& why) {
  throw Error(ErrorCode::malformed_event, e.session_id + "#" + std::to_string(e.event_seq) + " (" +
                                              std::string(to_string(e.kind)) + "): " + why);
}

void push_chat(SessionState& s, ChatMessage m) {
  s.chat_window.push_back(std::move(m));
  while (s.chat_window.size() > kChatWindow) s.chat_window.pop_front();
}

void require_pending(const SessionState& s, const SessionEvent& e) {
  if (!s.pending_proposal) reject(e, "no pending proposal");
}

}  // namespace

void apply_event(SessionState& s, const SessionEvent& e) {
  if (s.closed) throw Error(ErrorCode::session_closed, e.session_id + " already closed");
  if (e.event_seq != s.next_seq)
    throw Error(ErrorCode::out_of_order_event, e.session_id + ": expected seq " + std::to_string(s.next_seq) +
                                                   ", got " + std::to_string(e.event_seq));
  validate(e);
  if (s.next_seq == 0) {
    if (e.kind != EventKind::session_opened)
      throw Error(ErrorCode::out_of_order_event, e.session_id + ": first event must be session_opened");
  } else if (e.session_id != s.session_id) {
    reject(e, "event belongs to session " + e.session_id);
  }

  switch (e.kind) {
    case EventKind::session_opened: {
      if (e.event_seq != 0) reject(e, "session_opened after start");
      const auto& o = e.as<SessionOpened>();
      s.session_id = e.session_id;
      s.slice_id = o.slice_id;
      s.customer_id = o.customer_id;
      s.stage = o.stage;
      s.control_holder = o.stage == Stage::logging ? ControlHolder::operator_ : ControlHolder::policy;
      break;
    }
    case EventKind::customer_message:
      push_chat(s, e.as<ChatMessage>());
      if (s.control_holder == ControlHolder::awaiting_customer) s.control_holder = ControlHolder::policy;
      break;
    case EventKind::operator_message:
      push_chat(s, e.as<ChatMessage>());
      break;
    case EventKind::ui_snapshot: {
      const auto& snap = e.as<UiSnapshot>();
      if (snap.snapshot_seq <= s.current_snapshot.snapshot_seq)
        throw Error(ErrorCode::out_of_order_event, e.session_id + ": snapshot_seq " +
                                                       std::to_string(snap.snapshot_seq) + " not increasing");
      s.current_snapshot = snap;
      break;
    }
    case EventKind::policy_proposal: {
      if (s.control_holder != ControlHolder::policy) reject(e, "proposal while policy does not hold control");
      if (s.pending_proposal) reject(e, "proposal while another is pending");
      const auto& p = e.as<PolicyProposal>();
      s.loop_trace.push_back({state_hash(s), fingerprint(p.action)});
      if (s.loop_trace.size() > kLoopTraceCapacity) s.loop_trace.erase(s.loop_trace.begin());
      PendingProposal pending;
      pending.action = p.action;
      pending.confidence = p.confidence;
      pending.proposal_seq = e.event_seq;
      s.pending_proposal = std::move(pending);
      break;
    }
    case EventKind::critic_score:
      require_pending(s, e);
      if (s.pending_proposal->score) reject(e, "proposal already scored");
      s.pending_proposal->score = e.as<CriticScore>();
      break;
    case EventKind::action_executed: {
      const auto& a = e.as<ActionRecord>();
      if (a.actor == Actor::policy) {
        require_pending(s, e);
        if (!same_action(s.pending_proposal->action, a)) reject(e, "executed action differs from proposal");
        s.pending_proposal.reset();
        s.control_holder = ControlHolder::policy;
        ++s.auto_steps;
      } else if (s.control_holder != ControlHolder::operator_) {
        reject(e, "operator action while operator does not hold control");
      }
      if (a.action_type == ActionType::send_text_to_chat && a.payload)
        push_chat(s, ChatMessage{Author::operator_, *a.payload, a.timestamp, "act-" + std::to_string(e.event_seq)});
      break;
    }
    case EventKind::operator_feedback: {
      require_pending(s, e);
      const auto& f = e.as<FeedbackRecord>();
      if (f.proposal_seq != s.pending_proposal->proposal_seq) reject(e, "feedback for a superseded proposal");
      if (f.verdict == Verdict::accept) {
        s.pending_proposal->accepted = true;
      } else {
        s.pending_proposal.reset();
        s.control_holder = ControlHolder::operator_;
      }
      break;
    }
    case EventKind::deferral: {
      const auto& d = e.as<Deferral>();
      if (d.proposal_seq) {
        require_pending(s, e);
        if (*d.proposal_seq != s.pending_proposal->proposal_seq) reject(e, "deferral for a superseded proposal");
        s.pending_proposal->under_review = true;
        s.pending_proposal->review_reason = d.reason;
      } else {
        s.pending_proposal.reset();
      }
      s.control_holder = ControlHolder::operator_;
      break;
    }
    case EventKind::handback: {
      const auto& h = e.as<Handback>();
      if (h.to == ControlHolder::policy) {
        if (s.control_holder != ControlHolder::operator_) reject(e, "handback without deferral");
        s.pending_proposal.reset();
        s.control_holder = ControlHolder::policy;
      } else if (h.to == ControlHolder::awaiting_customer) {
        if (s.control_holder != ControlHolder::policy) reject(e, "only the policy can wait for the customer");
        s.control_holder = ControlHolder::awaiting_customer;
        s.awaiting_since = e.ts;
      } else {
        reject(e, "handback to operator is a deferral");
      }
      break;
    }
    case EventKind::stage_transition:
      s.stage = e.as<StageTransition>().to;
      break;
    case EventKind::guardrail_trip:
      break;
    case EventKind::session_closed:
      s.closed = true;
      s.pending_proposal.reset();
      break;
  }
  s.last_ts = e.ts;
  ++s.next_seq;
}

SessionState replay(std::span<const SessionEvent> events) {
  SessionState s;
  for (const auto& e : events) apply_event(s, e);
  return s;
}

std::uint64_t state_hash(const SessionState& s) noexcept {
  Hasher h;
  h.add(s.current_snapshot.screen_id);
  h.add(static_cast<std::uint64_t>(s.current_snapshot.controls.size()));
  for (const auto& c : s.current_snapshot.controls) {
    h.add(c.control_id);
    h.add(c.value.has_value());
    if (c.value) h.add(*c.value);
  }
  h.add(static_cast<std::uint64_t>(s.chat_window.size()));
  for (const auto& m : s.chat_window) h.add(m.message_id);
  h.add(static_cast<std::uint64_t>(s.control_holder));
  return h.digest();
}

}  // namespace stepgate
