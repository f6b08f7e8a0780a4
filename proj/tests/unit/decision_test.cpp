#include <catch_amalgamated.hpp>

#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <random>

#include "helpers/builders.hpp"
#include "stepgate/common/error.hpp"
#include "stepgate/decision/decision.hpp"
#include "stepgate/decision/external.hpp"

using namespace stepgate;
using namespace stepgate::testing;

namespace {

std::shared_ptr<ScriptedPolicy> one_screen_policy(ActionRecord gold) {
  std::map<std::string, ScriptedStep> steps;
  steps["form"] = ScriptedStep{ScriptedStep::Kind::act, std::move(gold)};
  steps["wait"] = ScriptedStep{ScriptedStep::Kind::wait_for_customer, {}};
  return std::make_shared<ScriptedPolicy>(std::move(steps));
}

UiSnapshot form_screen(std::int64_t seq) {
  return screen("form", {button("submit"), button("cancel"), input("amount", "10")}, seq);
}

// AUC = P(S_correct > S_wrong) = ∫ f_c(x) F_w(x) dx by composite Simpson.
double auc_oracle(const StubCriticParams& p) {
  boost::math::beta_distribution<double> c(p.correct_a, p.correct_b), w(p.wrong_a, p.wrong_b);
  const int n = 20000;
  const double h = 1.0 / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = std::clamp(i * h, 1e-12, 1.0 - 1e-12);
    const double f = boost::math::pdf(c, x) * boost::math::cdf(w, x);
    sum += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return sum * h / 3.0;
}

}  // namespace

TEST_CASE("scripted policy is a table lookup with confidence 1", "[decision]") {
  auto policy = one_screen_policy(click("submit"));
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form_screen(1));
  auto out = policy->propose(b.state());
  REQUIRE(std::holds_alternative<PolicyProposal>(out));
  const auto& p = std::get<PolicyProposal>(out);
  CHECK(p.confidence == 1.0);
  CHECK(p.action.actor == Actor::policy);
  CHECK(same_action(p.action, click("submit")));

  b.snapshot(screen("wait", {}, 2));
  CHECK(std::holds_alternative<WaitForCustomer>(policy->propose(b.state())));
  b.snapshot(screen("unknown", {}, 3));
  CHECK(std::holds_alternative<NoAction>(policy->propose(b.state())));
}

TEST_CASE("noisy wrapper with zero error rate is the identity", "[decision]") {
  auto inner = one_screen_policy(click("submit"));
  NoisyPolicy noisy(inner, NoiseConfig{0.0, 11});
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form_screen(1));
  for (int i = 0; i < 200; ++i) {
    b.customer("ping");
    const auto p = std::get<PolicyProposal>(noisy.propose(b.state()));
    CHECK(same_action(p.action, click("submit")));
  }
}

TEST_CASE("noisy wrapper at error rate 0.3 corrupts 30% of proposals", "[decision][montecarlo]") {
  const ActionRecord gold = say("Your card has been blocked.");
  NoisyPolicy noisy(one_screen_policy(gold), NoiseConfig{0.3, 2024});
  int wrong = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    SessionBuilder b("sess-" + std::to_string(i), "slice", Stage::automation);
    b.snapshot(form_screen(1));
    const auto p = std::get<PolicyProposal>(noisy.propose(b.state()));
    REQUIRE_NOTHROW(validate(p.action));
    if (!same_action(p.action, gold)) ++wrong;
  }
  CHECK(std::abs(double(wrong) / n - 0.3) <= 0.02);
}

TEST_CASE("default perturbation always yields a different legal action", "[decision][property]") {
  std::mt19937_64 rng(5);
  const UiSnapshot snap = form_screen(1);
  const std::vector<ActionRecord> golds = {say("hello"), click("submit"), close_chat(),
                                           act(ActionType::transfer_chat, std::nullopt, "billing_support"),
                                           act(ActionType::fill_input, "amount", "12")};
  for (int i = 0; i < 5000; ++i) {
    const auto& gold = golds[static_cast<std::size_t>(i) % golds.size()];
    const auto wrong = default_perturbation(gold, snap, rng);
    CHECK_FALSE(same_action(wrong, gold));
    CHECK_NOTHROW(validate(wrong));
    if (wrong.target_control_id) CHECK(snap.find(*wrong.target_control_id) != nullptr);
  }
}

TEST_CASE("confidence critic returns the proposal confidence verbatim", "[decision]") {
  ConfidenceCritic critic;
  SessionBuilder b("s", "slice", Stage::automation);
  const auto s = critic.score(b.state(), PolicyProposal{say("x", Actor::policy), 0.71});
  CHECK(s.value == 0.71);
  CHECK(s.source == ScoreSource::confidence_baseline);
}

TEST_CASE("stub critic is a pure function of state and action", "[decision]") {
  const ActionRecord gold = say("ok");
  StubCritic critic(StubCriticParams::from_separation(2.0), 9,
                    [&](const SessionState&, const ActionRecord& a) { return same_action(a, gold); });
  SessionBuilder b("s", "slice", Stage::automation);
  b.snapshot(form_screen(1));
  const PolicyProposal p{say("ok", Actor::policy), 0.5};
  CHECK(critic.score(b.state(), p) == critic.score(b.state(), p));
  // Same structural state in a different session scores identically.
  SessionBuilder c("other", "slice", Stage::automation);
  c.snapshot(form_screen(1));
  CHECK(critic.score(c.state(), p) == critic.score(b.state(), p));

  StubCritic perfect(StubCriticParams::from_separation(std::numeric_limits<double>::infinity()), 9,
                     [&](const SessionState&, const ActionRecord& a) { return same_action(a, gold); });
  CHECK(perfect.score(b.state(), p).value == 1.0);
  CHECK(perfect.score(b.state(), PolicyProposal{say("no", Actor::policy), 0.5}).value == 0.0);
}

TEST_CASE("stub critic empirical AUC matches the closed-form integral", "[decision][montecarlo]") {
  for (double d : {0.0, 1.0, 3.0}) {
    const auto params = StubCriticParams::from_separation(d);
    StubCritic critic(params, 77, [](const SessionState& s, const ActionRecord&) {
      return s.current_snapshot.screen_id.back() == 'c';
    });
    std::vector<double> pos, neg;
    for (int i = 0; i < 3000; ++i) {
      SessionBuilder b("s", "slice", Stage::automation);
      b.snapshot(screen("scr" + std::to_string(i) + (i % 2 ? "c" : "w"), {}, 1));
      const double v = critic.score(b.state(), PolicyProposal{say("x", Actor::policy), 1.0}).value;
      (i % 2 ? pos : neg).push_back(v);
    }
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double v : pos) {
      const auto lo = std::lower_bound(neg.begin(), neg.end(), v);
      const auto hi = std::upper_bound(neg.begin(), neg.end(), v);
      wins += double(lo - neg.begin()) + 0.5 * double(hi - lo);
    }
    const double auc = wins / (double(pos.size()) * double(neg.size()));
    INFO("d=" << d);
    CHECK(std::abs(auc - auc_oracle(params)) <= 0.02);
  }
  // d = 0 is the uninformative critic.
  CHECK(auc_oracle(StubCriticParams::from_separation(0.0)) == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("critic_prf matches textbook cases", "[decision]") {
  std::vector<PrfPoint> pts = {{0.9, 0.5, Verdict::accept}, {0.8, 0.5, Verdict::accept}, {0.7, 0.5, Verdict::accept},
                               {0.6, 0.5, Verdict::reject}, {0.1, 0.5, Verdict::accept}};
  const auto r = critic_prf(pts);
  CHECK(r.tp == 3);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.precision == 0.75);
  CHECK(r.recall == 0.75);
  CHECK(r.f1 == Catch::Approx(0.75));

  std::vector<PrfPoint> all = {{0.9, 0.5, Verdict::accept}, {0.95, 0.5, Verdict::accept}};
  const auto p = critic_prf(all);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.f1 == 1.0);

  CHECK_THROWS_AS(critic_prf(std::span<const PrfPoint>{}), Error);
}

TEST_CASE("critic_prf agrees with a brute-force oracle on random inputs", "[decision][property]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<PrfPoint> pts(static_cast<std::size_t>(1 + rng() % 40));
    for (auto& p : pts) p = {u(rng), u(rng), u(rng) < 0.6 ? Verdict::accept : Verdict::reject};
    const auto r = critic_prf(pts);
    double tp = 0, pp = 0, ap = 0;
    for (const auto& p : pts) {
      const bool exec = !(p.score < p.threshold);
      pp += exec;
      ap += p.label == Verdict::accept;
      tp += exec && p.label == Verdict::accept;
    }
    const double prec = pp ? tp / pp : 0.0, rec = ap ? tp / ap : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    CHECK(r.precision == Catch::Approx(prec).epsilon(1e-12));
    CHECK(r.recall == Catch::Approx(rec).epsilon(1e-12));
    CHECK(r.f1 == Catch::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("external adapters speak the line protocol", "[decision][adapter]") {
  auto client = std::make_shared<DecisionClient>(std::make_unique<SubprocessTransport>(FAKE_DECIDER));
  ExternalPolicy policy(client);
  ExternalCritic critic(client);
  SessionBuilder b("s", "slice", Stage::automation);
  CHECK(std::holds_alternative<NoAction>(policy.propose(b.state())));
  b.snapshot(form_screen(1));
  const auto p = std::get<PolicyProposal>(policy.propose(b.state()));
  CHECK(same_action(p.action, click("submit")));
  CHECK(p.action.actor == Actor::policy);
  CHECK(p.confidence == 0.6);
  const auto s = critic.score(b.state(), PolicyProposal{say("x", Actor::policy), 1.0});
  CHECK(s.value == 0.25);
  CHECK(s.source == ScoreSource::external);
}

TEST_CASE("external adapter surfaces protocol violations as errors", "[decision][adapter]") {
  auto client = std::make_shared<DecisionClient>(
      std::make_unique<SubprocessTransport>(std::string(FAKE_DECIDER) + " --garbage"));
  ExternalPolicy policy(client);
  SessionBuilder b("s", "slice", Stage::automation);
  try {
    policy.propose(b.state());
    FAIL("expected ProtocolError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::protocol_error);
  }
  auto dead = std::make_shared<DecisionClient>(std::make_unique<SubprocessTransport>("true"));
  CHECK_THROWS_AS(ExternalPolicy(dead).propose(b.state()), Error);
}
