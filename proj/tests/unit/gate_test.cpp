#include <catch_amalgamated.hpp>

#include <random>

#include "helpers/builders.hpp"
#include "helpers/fakes.hpp"
#include "stepgate/common/error.hpp"
#include "stepgate/domain/state.hpp"
#include "stepgate/gate/gate.hpp"

using namespace stepgate;
using namespace stepgate::testing;

namespace {

ThresholdPolicy tau(double t) {
  ThresholdPolicy p;
  p.slice_id = "slice";
  p.default_tau = t;
  return p;
}

UiSnapshot form(std::int64_t seq, std::string amount = "") {
  return screen("form", {button("submit"), input("amount", amount.empty() ? std::nullopt : std::optional(amount))},
                seq);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::io_error;
}

}  // namespace

TEST_CASE("non-critical proposals execute without a critic call", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  FixedCritic critic(0.0);
  const auto r = step(b.state(), StageConfig{}, tau(0.9), always(click("submit")), critic, b.tick());
  CHECK(r.decision == GateDecision{GateAction::execute, std::nullopt, GateReason::non_critical});
  CHECK(critic.calls == 0);
  b.append(r.events);
  CHECK(b.state().control_holder == ControlHolder::policy);
  CHECK(b.state().auto_steps == 1);
}

TEST_CASE("critical proposal at or above tau executes, below defers", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  const auto hi = step(b.state(), StageConfig{}, tau(0.9), always(say("done")), FixedCritic(0.92), b.tick());
  CHECK(hi.decision.action == GateAction::execute);
  CHECK(hi.decision.reason == GateReason::above_threshold);
  CHECK(hi.decision.score->value == 0.92);

  const auto eq = step(b.state(), StageConfig{}, tau(0.9), always(say("done")), FixedCritic(0.9), b.tick());
  CHECK(eq.decision.action == GateAction::execute);

  const auto lo = step(b.state(), StageConfig{}, tau(0.9), always(say("done")), FixedCritic(0.89), b.tick());
  CHECK(lo.decision.action == GateAction::defer_to_operator);
  CHECK(lo.decision.reason == GateReason::below_threshold);
  b.append(lo.events);
  CHECK(b.state().control_holder == ControlHolder::operator_);
  CHECK(b.state().pending_proposal->under_review);
}

TEST_CASE("per-type thresholds override the slice default", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  auto t = tau(0.5);
  t.per_type[ActionType::send_text_to_chat] = 0.95;
  CHECK(step(b.state(), StageConfig{}, t, always(say("x")), FixedCritic(0.9), 0).decision.reason ==
        GateReason::below_threshold);
  StageConfig gated;
  CHECK(step(b.state(), gated, t, always(act(ActionType::transfer_chat, std::nullopt, "billing")), FixedCritic(0.6), 0)
            .decision.action == GateAction::execute);
}

TEST_CASE("finalizing actions in calibration always go to human review", "[gate]") {
  SessionBuilder b("s", "slice", Stage::calibration);
  b.snapshot(form(1));
  StageConfig config;
  config.finalization_human_gated = false;  // calibration forces the gate regardless
  const auto r = step(b.state(), config, tau(0.9), always(close_chat()), FixedCritic(0.95), b.tick());
  CHECK(r.decision == GateDecision{GateAction::human_review_finalization, CriticScore{0.95, ScoreSource::stub},
                                   GateReason::finalization_gate});
  b.append(r.events);
  CHECK_FALSE(b.state().closed);

  // In automation without the flag the policy closes the chat itself.
  SessionBuilder a("a", "slice", Stage::automation);
  a.snapshot(form(1));
  const auto auto_close = step(a.state(), config, tau(0.9), always(close_chat()), FixedCritic(0.95), a.tick());
  a.append(auto_close.events);
  CHECK(a.state().closed);
  CHECK(a.events().back().as<SessionClosed>().by == ClosedBy::policy);

  config.finalization_human_gated = true;
  SessionBuilder g("g", "slice", Stage::automation);
  g.snapshot(form(1));
  CHECK(step(g.state(), config, tau(0.9), always(close_chat()), FixedCritic(0.95), 0).decision.action ==
        GateAction::human_review_finalization);
}

TEST_CASE("copilot accept executes the proposal and logs feedback", "[gate]") {
  SessionBuilder b("s", "slice", Stage::copilot);
  b.snapshot(form(1));
  const auto r = step(b.state(), StageConfig{}, tau(0.0), always(say("Hello!")), FixedCritic(0.3), b.tick());
  CHECK(r.decision.reason == GateReason::copilot_review);
  CHECK(r.decision.score->value == 0.3);  // shadow score for later calibration
  b.append(r.events);
  b.append(resolve_review(b.state(), Verdict::accept, std::nullopt, StageConfig{}, b.tick()));
  const auto& ev = b.events();
  CHECK(ev[ev.size() - 2].as<FeedbackRecord>().verdict == Verdict::accept);
  CHECK(ev.back().as<ActionRecord>().actor == Actor::policy);
  CHECK(b.state().chat_window.back().text == "Hello!");
  CHECK(b.state().control_holder == ControlHolder::policy);
}

TEST_CASE("after a reject control returns at the operator's next critical action", "[gate]") {
  SessionBuilder b("s", "slice", Stage::copilot);
  b.snapshot(form(1));
  b.append(step(b.state(), StageConfig{}, tau(0.0), always(say("Goodbye")), FixedCritic(0.5), b.tick()).events);
  const auto proposal_seq = b.state().pending_proposal->proposal_seq;

  b.append(operator_action(b.state(), act(ActionType::fill_input, "amount", "250"), StageConfig{}, b.tick()));
  const auto& fb = b.events()[b.events().size() - 2].as<FeedbackRecord>();
  CHECK(fb.verdict == Verdict::reject);
  CHECK(fb.proposal_seq == proposal_seq);
  CHECK(fb.corrective_action->action_type == ActionType::fill_input);
  CHECK(b.state().control_holder == ControlHolder::operator_);

  b.append(operator_action(b.state(), click("submit"), StageConfig{}, b.tick()));
  CHECK(b.state().control_holder == ControlHolder::operator_);
  b.append(operator_action(b.state(), say("Your payment is registered."), StageConfig{}, b.tick()));
  CHECK(b.state().control_holder == ControlHolder::policy);
  CHECK(b.events().back().as<Handback>().cause == HandbackCause::operator_critical_action);
}

TEST_CASE("reject with a finalizing correction closes the session as the operator", "[gate]") {
  SessionBuilder b("s", "slice", Stage::copilot);
  b.snapshot(form(1));
  b.append(step(b.state(), StageConfig{}, tau(0.0), always(say("Anything else?")), FixedCritic(0.5), b.tick()).events);
  CHECK(code_of([&] { resolve_review(b.state(), Verdict::reject, std::nullopt, StageConfig{}, 0); }) ==
        ErrorCode::missing_correction);
  b.append(resolve_review(b.state(), Verdict::reject, close_chat(), StageConfig{}, b.tick()));
  CHECK(b.state().closed);
  CHECK(b.events().back().as<SessionClosed>().by == ClosedBy::operator_);
}

TEST_CASE("defer, operator fixes the form, handback, next proposal sees new snapshot", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  FnPolicy policy([](const SessionState& s) -> PolicyOutcome {
    const auto* amount = s.current_snapshot.find("amount");
    if (!amount->value) return NoAction{"amount missing"};
    return PolicyProposal{click("submit", Actor::policy), 1.0};
  });
  const auto first = step(b.state(), StageConfig{}, tau(0.9), policy, FixedCritic(1), b.tick());
  CHECK(first.decision.reason == GateReason::policy_abstained);
  b.append(first.events);
  CHECK(code_of([&] { step(b.state(), StageConfig{}, tau(0.9), policy, FixedCritic(1), 0); }) ==
        ErrorCode::not_policy_turn);
  b.append(operator_action(b.state(), act(ActionType::fill_input, "amount", "99"), StageConfig{}, b.tick()));
  b.snapshot(form(2, "99"));
  b.append(handback(b.state(), b.tick()));
  const auto next = step(b.state(), StageConfig{}, tau(0.9), policy, FixedCritic(1), b.tick());
  CHECK(next.decision.action == GateAction::execute);
  CHECK(next.events.front().as<PolicyProposal>().action.target_control_id == "submit");
}

TEST_CASE("operator closing during a deferral ends the session without handback", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  b.append(step(b.state(), StageConfig{}, tau(0.9), FnPolicy([](auto&) { return NoAction{"?"}; }), FixedCritic(1),
                b.tick())
               .events);
  b.append(operator_action(b.state(), close_chat(), StageConfig{}, b.tick()));
  CHECK(b.state().closed);
  for (const auto& e : b.events()) CHECK(e.kind != EventKind::handback);
  CHECK(code_of([&] { handback(b.state(), 0); }) == ErrorCode::session_closed);
}

TEST_CASE("handback without deferral and decisions on resolved proposals are rejected", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  CHECK(code_of([&] { handback(b.state(), 0); }) == ErrorCode::handback_without_deferral);
  CHECK(code_of([&] { resolve_review(b.state(), Verdict::accept, std::nullopt, StageConfig{}, 0); }) ==
        ErrorCode::no_pending_proposal);
  b.append(step(b.state(), StageConfig{}, tau(0.9), always(say("x")), FixedCritic(0.1), b.tick()).events);
  const auto seq = b.state().pending_proposal->proposal_seq;
  b.append(resolve_review(b.state(), Verdict::accept, std::nullopt, StageConfig{}, b.tick(), seq));
  CHECK(code_of([&] { resolve_review(b.state(), Verdict::accept, std::nullopt, StageConfig{}, 0, seq); }) ==
        ErrorCode::stale_decision);
}

TEST_CASE("proposals targeting absent controls fall back to the operator", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  const auto r = step(b.state(), StageConfig{}, tau(0.9), always(click("ghost")), FixedCritic(1), b.tick());
  CHECK(r.decision == GateDecision{GateAction::defer_to_operator, std::nullopt, GateReason::fallback_triggered});
  b.append(r.events);
  CHECK_FALSE(b.state().pending_proposal.has_value());
}

TEST_CASE("a repeated action on an unchanged state trips loop detection", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form(1));
  StageConfig config;
  std::vector<GateDecision> got;
  for (int i = 0; i < 3; ++i) {
    const auto r = step(b.state(), config, tau(0.9), always(click("submit")), FixedCritic(1), b.tick());
    got.push_back(r.decision);
    b.append(r.events);
  }
  CHECK(got[0].action == GateAction::execute);
  CHECK(got[1].action == GateAction::execute);
  CHECK(got[2].reason == GateReason::fallback_triggered);
}

TEST_CASE("max_auto_steps bounds runaway sessions", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  StageConfig config;
  config.max_auto_steps = 4;
  config.loop_detection_k = 0;
  std::int64_t seq = 1;
  for (int i = 0; i < 4; ++i) {
    b.snapshot(form(seq++, std::to_string(i)));
    b.append(step(b.state(), config, tau(0.9), always(click("submit")), FixedCritic(1), b.tick()).events);
  }
  b.snapshot(form(seq++, "x"));
  CHECK(step(b.state(), config, tau(0.9), always(click("submit")), FixedCritic(1), b.tick()).decision.reason ==
        GateReason::fallback_triggered);
}

TEST_CASE("detect_loop examples", "[gate]") {
  const LoopEntry a{1, 10}, c{2, 10};
  std::vector<LoopEntry> same{a, a, a};
  CHECK(detect_loop(same, 3));
  std::vector<LoopEntry> alternating{a, c, a, c, a, c};
  CHECK_FALSE(detect_loop(alternating, 3));
  std::vector<LoopEntry> broken{a, a, c, a, a};
  CHECK_FALSE(detect_loop(broken, 3));
  CHECK(detect_loop(broken, 2));
}

TEST_CASE("detect_loop agrees with a brute-force scan on random traces", "[gate][property]") {
  std::mt19937_64 rng(17);
  int planted = 0, detected = 0, false_pos = 0, loop_free = 0;
  for (int trial = 0; trial < 4000; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 4);
    std::vector<LoopEntry> trace;
    const int len = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < len; ++i) trace.push_back({rng() % 3, rng() % 2});
    const bool plant = trial % 2 == 0;
    if (plant) {
      const LoopEntry e{rng() % 3, rng() % 2};
      for (int i = 0; i < k; ++i) trace.push_back(e);
    } else {
      // Break any trailing run so the trace is loop-free at its end.
      LoopEntry breaker{99, 99};
      trace.push_back(breaker);
      if (k > 1) trace.push_back({98, 98});
    }
    // Oracle: count identical entries scanning backwards.
    int run = 1;
    for (std::size_t i = trace.size() - 1; i > 0 && trace[i - 1] == trace.back(); --i) ++run;
    const bool expected = run >= k;
    CHECK(detect_loop(trace, k) == expected);
    if (plant) {
      ++planted;
      detected += detect_loop(trace, k);
    } else {
      ++loop_free;
      false_pos += detect_loop(trace, k);
    }
  }
  CHECK(detected == planted);
  CHECK(false_pos == 0);
  CHECK(loop_free > 0);
}

TEST_CASE("stage transitions follow the staged rollout", "[gate]") {
  CHECK_NOTHROW(transition_stage("a", Stage::logging, Stage::copilot, "admin"));
  CHECK_NOTHROW(transition_stage("a", Stage::copilot, Stage::calibration, "admin"));
  CHECK_NOTHROW(transition_stage("a", Stage::calibration, Stage::automation, "admin"));
  const auto t = transition_stage("a", Stage::automation, Stage::copilot, "guardrail", "precision_floor");
  CHECK(t.guardrail_id == "precision_floor");
  CHECK(code_of([] { transition_stage("a", Stage::logging, Stage::automation, "admin"); }) ==
        ErrorCode::illegal_transition);
  CHECK(code_of([] { transition_stage("a", Stage::copilot, Stage::automation, "admin"); }) ==
        ErrorCode::illegal_transition);
  CHECK(code_of([] { transition_stage("a", Stage::automation, Stage::calibration, "admin"); }) ==
        ErrorCode::illegal_transition);
}

TEST_CASE("reply timeout closes an idle session and a late message opens a new one", "[gate]") {
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(screen("wait", {}, 1));
  FnPolicy wait([](auto&) { return WaitForCustomer{}; });
  const auto r = step(b.state(), StageConfig{}, tau(0.9), wait, FixedCritic(1), b.tick());
  CHECK(r.decision.action == GateAction::await_customer);
  b.append(r.events);
  const auto since = b.state().awaiting_since;

  CHECK(expire_if_idle(b.state(), kDefaultReplyTimeoutMs, since + kDefaultReplyTimeoutMs).empty());
  const auto on_time =
      customer_message(b.state(), ChatMessage{Author::customer, "ok", since + 1000, "c1"}, kDefaultReplyTimeoutMs,
                       since + 1000);
  CHECK_FALSE(on_time.opens_new_session);

  const auto late = customer_message(b.state(), ChatMessage{Author::customer, "hi again", 0, "c2"},
                                     kDefaultReplyTimeoutMs, since + kDefaultReplyTimeoutMs + 1);
  CHECK(late.opens_new_session);
  b.append(late.events);
  CHECK(b.state().closed);
  CHECK(b.events().back().as<SessionClosed>().reason == kReplyTimeoutReason);
}

TEST_CASE("gate safety holds and decisions replay from the log", "[gate][property]") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<ActionRecord> menu = {say("hello"), click("submit"), close_chat(),
                                          act(ActionType::fill_input, "amount", "5"),
                                          act(ActionType::transfer_chat, std::nullopt, "billing")};
  int decisions = 0;
  for (int session = 0; session < 400; ++session) {
    const Stage stage = session % 3 == 0 ? Stage::calibration : Stage::automation;
    SessionBuilder b("s" + std::to_string(session), "slice", stage);
    const auto t = tau(u(rng));
    StageConfig config;
    config.finalization_human_gated = session % 2 == 0;
    std::vector<GateDecision> live;
    std::int64_t seq = 1;
    for (int turn = 0; turn < 40 && !b.state().closed; ++turn) {
      b.snapshot(form(seq++, std::to_string(turn)));
      if (b.state().control_holder == ControlHolder::operator_) {
        if (b.state().pending_proposal && u(rng) < 0.5)
          b.append(resolve_review(b.state(), Verdict::accept, std::nullopt, config, b.tick()));
        else
          b.append(handback(b.state(), b.tick()));
        continue;
      }
      const auto& a = menu[static_cast<std::size_t>(rng() % menu.size())];
      const auto r = step(b.state(), config, t, always(a), FixedCritic(u(rng)), b.tick());
      live.push_back(r.decision);
      b.append(r.events);
      ++decisions;
    }
    CHECK(replay_decisions(b.events()) == live);
    CHECK(replay(b.events()) == b.state());

    // Safety scan over the raw log.
    std::optional<double> last_score;
    bool reviewed = false;
    for (const auto& e : b.events()) {
      if (e.kind == EventKind::policy_proposal) last_score.reset(), reviewed = false;
      if (e.kind == EventKind::critic_score) last_score = e.as<CriticScore>().value;
      if (e.kind == EventKind::deferral) reviewed = true;
      if (e.kind == EventKind::action_executed && e.as<ActionRecord>().actor == Actor::policy && !reviewed) {
        const auto& act = e.as<ActionRecord>();
        if (StageConfig{}.criticality.is_critical(act.action_type)) {
          REQUIRE(last_score.has_value());
          CHECK(*last_score >= t.tau_for(act.action_type));
        }
        if (StageConfig{}.criticality.is_finalizing(act.action_type)) CHECK_FALSE(config.finalization_gated(stage));
      }
    }
  }
  CHECK(decisions > 1500);
}
