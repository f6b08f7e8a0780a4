#pragma once

// Small helpers to assemble well-formed session event streams in tests.

#include <string>
#include <utility>
#include <vector>

#include "stepgate/domain/state.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate::testing {

inline UiControl button(std::string id, std::string label = "") {
  UiControl c;
  c.control_id = std::move(id);
  c.kind = ControlKind::button;
  c.label = std::move(label);
  return c;
}

inline UiControl input(std::string id, std::optional<std::string> value = std::nullopt) {
  UiControl c;
  c.control_id = std::move(id);
  c.kind = ControlKind::input;
  c.value = std::move(value);
  return c;
}

inline UiSnapshot screen(std::string id, std::vector<UiControl> controls, std::int64_t seq) {
  UiSnapshot s;
  s.screen_id = std::move(id);
  s.controls = std::move(controls);
  s.snapshot_seq = seq;
  return s;
}

inline ActionRecord act(ActionType type, std::optional<std::string> target, std::optional<std::string> payload,
                        Actor actor = Actor::operator_, TimestampMs ts = 0) {
  return ActionRecord{type, std::move(target), std::move(payload), actor, ts};
}

inline ActionRecord click(std::string target, Actor actor = Actor::operator_) {
  return act(ActionType::click_control, std::move(target), std::nullopt, actor);
}

inline ActionRecord say(std::string text, Actor actor = Actor::operator_) {
  return act(ActionType::send_text_to_chat, std::nullopt, std::move(text), actor);
}

inline ActionRecord close_chat(Actor actor = Actor::operator_) {
  return act(ActionType::close_chat, std::nullopt, std::nullopt, actor);
}

// Appends events with dense seqs and keeps the folded state in sync.
class SessionBuilder {
 public:
  SessionBuilder(std::string session_id, std::string slice_id, Stage stage, std::string customer = "cust-1")
      : id_(std::move(session_id)) {
    push(EventKind::session_opened, SessionOpened{std::move(slice_id), std::move(customer), stage});
  }

  SessionBuilder& push(EventKind kind, EventBody body, TimestampMs ts = -1) {
    if (ts < 0) ts = clock_ += 1000;
    else clock_ = ts;
    SessionEvent e{id_, static_cast<std::int64_t>(events_.size()), ts, kind, std::move(body)};
    apply_event(state_, e);
    events_.push_back(std::move(e));
    return *this;
  }

  SessionBuilder& customer(std::string text, std::string id = "") {
    if (id.empty()) id = "m" + std::to_string(events_.size());
    return push(EventKind::customer_message, ChatMessage{Author::customer, std::move(text), clock_ + 1000, id});
  }

  SessionBuilder& snapshot(UiSnapshot s) { return push(EventKind::ui_snapshot, std::move(s)); }
  SessionBuilder& action(ActionRecord a) { return push(EventKind::action_executed, std::move(a)); }

  SessionBuilder& append(const std::vector<SessionEvent>& produced) {
    for (const auto& e : produced) {
      apply_event(state_, e);
      events_.push_back(e);
      clock_ = std::max(clock_, e.ts);
    }
    return *this;
  }

  const std::vector<SessionEvent>& events() const { return events_; }
  const SessionState& state() const { return state_; }
  TimestampMs clock() const { return clock_; }
  TimestampMs tick(TimestampMs dt = 1000) { return clock_ += dt; }

 private:
  std::string id_;
  std::vector<SessionEvent> events_;
  SessionState state_;
  TimestampMs clock_ = 1'700'000'000'000;
};

}  // namespace stepgate::testing
