#include "stepgate/service/desk.hpp"

#include <cstdio>

#include "stepgate/common/error.hpp"
#include "stepgate/common/rng.hpp"

namespace stepgate::service {

namespace {

constexpr std::size_t kMaxVisits = 5000;

}  // namespace

Desk::Desk(DeskConfig config) : config_(std::move(config)), now_(config_.start_ms), rng_(config_.seed) {
  if (config_.slices.empty()) throw Error(ErrorCode::config_invalid, "desk needs at least one slice");
  for (const auto& s : config_.slices)
    if (s.catalog.empty()) throw Error(ErrorCode::config_invalid, s.slice_id + ": empty catalog");
  if (config_.concurrency == 0) throw Error(ErrorCode::config_invalid, "concurrency must be positive");
}

std::mt19937_64 Desk::draw(const Live& s, std::string_view label, std::int64_t index) const {
  return keyed_engine(config_.seed, Hasher{}.add(std::string_view(s.id)).add(label).add(index).digest());
}

const sim::ScriptStep& Desk::step_of(const Live& s) const {
  return config_.slices[s.slice].catalog[s.script].steps[s.cur];
}

void Desk::tick(Service& service) {
  now_ += config_.tick_ms;
  ++ticks_;
  if (ticks_ % config_.sweep_every == 0) {
    ++calls_;
    service.sweep_timeouts();
    return;
  }
  if (active_.size() < config_.concurrency && opened_ < config_.sessions) {
    open(service);
    return;
  }
  if (active_.empty()) return;
  const auto k = static_cast<std::size_t>(rng_() % active_.size());
  visit(service, active_[k]);
  if (active_[k].phase == 3) active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(k));
}

void Desk::open(Service& service) {
  Live s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", opened_);
  s.id = config_.prefix + buf;
  s.slice = opened_ % config_.slices.size();
  const auto& slice = config_.slices[s.slice];
  auto rng = draw(s, "script", 0);
  s.script = static_cast<std::size_t>(rng() % slice.catalog.size());
  ++opened_;
  ids_.push_back(s.id);
  ++calls_;
  service.open_session(s.id, slice.slice_id, "cust-" + std::to_string(opened_));
  active_.push_back(std::move(s));
}

void Desk::show(Service& service, Live& s) {
  UiSnapshot snap = step_of(s).screen;
  snap.snapshot_seq = s.snapshot_seq++;
  ++calls_;
  service.ui_snapshot(s.id, std::move(snap));
}

// The customer answers a wait screen: the desk renders the branch first, then
// posts the message, so the policy turn sees the new screen.
void Desk::reply(Service& service, Live& s) {
  const auto& st = step_of(s);
  auto rng = draw(s, "reply", s.replies++);
  const std::size_t branch = st.next.size() > 1 ? static_cast<std::size_t>(rng() % st.next.size()) : 0;
  s.cur = st.next[branch];
  s.reply_due = branch == 0 ? "yes, go ahead" : "no, something else";
  show(service, s);
}

void Desk::visit(Service& service, Live& s) {
  if (++s.visits > kMaxVisits) throw std::logic_error(s.id + ": session does not terminate");
  if (s.phase == 0) {
    ++calls_;
    service.customer_message(s.id, ChatMessage{Author::customer, "hello, I need help", 0, ""});
    s.phase = 1;
    return;
  }
  if (s.phase == 1) {
    show(service, s);
    s.phase = 2;
    return;
  }

  const SessionState st = service.session(s.id);
  for (const auto& e : service.store().read(s.id, s.seen)) {
    if (e.kind == EventKind::ui_snapshot) s.react.reset();
    if (e.kind == EventKind::action_executed) s.react = e.as<ActionRecord>();
    s.seen = e.event_seq;
  }
  if (st.closed) {
    s.phase = 3;
    return;
  }
  if (s.react) {
    const auto& step = step_of(s);
    if (step.gold && same_action(*step.gold, *s.react) && !step.next.empty()) s.cur = step.next.front();
    s.react.reset();
    show(service, s);
    return;
  }
  if (s.reply_due) {
    ++calls_;
    service.customer_message(s.id, ChatMessage{Author::customer, *s.reply_due, 0, ""});
    s.reply_due.reset();
    return;
  }
  if (s.handback_due) {
    s.handback_due = false;
    if (st.control_holder == ControlHolder::operator_ && st.stage != Stage::logging && !st.pending_proposal) {
      ++calls_;
      service.hand_back(s.id);
      return;
    }
  }
  const auto& step = step_of(s);
  switch (st.control_holder) {
    case ControlHolder::policy:
      // Nothing left to react to: re-render so the policy gets a turn.
      show(service, s);
      return;
    case ControlHolder::operator_:
      if (st.pending_proposal && st.pending_proposal->under_review) {
        const auto& p = *st.pending_proposal;
        auto rng = draw(s, "review", p.proposal_seq);
        const bool correct = step.gold && same_action(*step.gold, p.action);
        const bool accept = !step.gold || uniform01(rng) < (correct ? config_.accept_correct : config_.accept_wrong);
        ++calls_;
        if (accept) {
          service.decide(s.id, Verdict::accept, std::nullopt, p.proposal_seq);
        } else {
          service.decide(s.id, Verdict::reject, *step.gold, p.proposal_seq);
          s.handback_due = true;
        }
        return;
      }
      if (step.gold) {
        ++calls_;
        service.operator_act(s.id, *step.gold);
        s.handback_due = true;
        return;
      }
      reply(service, s);
      return;
    case ControlHolder::awaiting_customer: {
      if (s.silent) return;
      auto rng = draw(s, "silent", s.replies);
      if (uniform01(rng) < config_.silent_probability) {
        s.silent = true;
        return;
      }
      reply(service, s);
      return;
    }
  }
}

}  // namespace stepgate::service
