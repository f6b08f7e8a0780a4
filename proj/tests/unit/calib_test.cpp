#include <catch_amalgamated.hpp>

#include <random>

#include "helpers/builders.hpp"
#include "helpers/fakes.hpp"
#include "stepgate/calib/calibrate.hpp"
#include "stepgate/calib/guardrails.hpp"
#include "stepgate/calib/registry.hpp"
#include "stepgate/common/error.hpp"
#include "stepgate/gate/gate.hpp"

using namespace stepgate;
using namespace stepgate::testing;

namespace {

std::vector<ScoredVerdict> sv(std::vector<double> scores, std::vector<int> accept) {
  std::vector<ScoredVerdict> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    out.push_back({scores[i], accept[i] ? Verdict::accept : Verdict::reject});
  return out;
}

// Exhaustive: precision over {score >= t} for a candidate t.
double precision_scan(const std::vector<ScoredVerdict>& d, double t) {
  std::size_t n = 0, a = 0;
  for (const auto& x : d)
    if (x.score >= t) ++n, a += x.verdict == Verdict::accept;
  return n ? double(a) / double(n) : 0.0;
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

TEST_CASE("calibrate_offline worked example", "[calib]") {
  const auto d = sv({0.95, 0.9, 0.8, 0.7, 0.6}, {1, 1, 1, 0, 1});
  const auto r = calibrate_offline(d, 0.9);
  CHECK(r.tau == 0.8);
  CHECK(r.precision == 1.0);
  CHECK(r.covered == 3);
  CHECK_FALSE(r.infeasible);
  CHECK(precision_scan(d, 0.7) == 0.75);
}

TEST_CASE("calibrate_offline degenerate inputs", "[calib]") {
  CHECK(calibrate_offline(sv({0.3, 0.7, 0.5}, {1, 1, 1}), 0.9).tau == 0.3);
  const auto none = calibrate_offline(sv({0.3, 0.7, 0.5}, {0, 0, 0}), 0.9);
  CHECK(none.infeasible);
  CHECK(none.tau == kSentinelTau);
  CHECK(none.tau > 1.0);
  CHECK(code_of([] { calibrate_offline(std::span<const ScoredVerdict>{}, 0.9); }) == ErrorCode::empty_feedback);
}

TEST_CASE("calibrate_offline matches an exhaustive scan", "[calib][property]") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    std::vector<ScoredVerdict> d(n);
    const bool coarse = trial % 3 == 0;  // many ties
    for (auto& x : d) {
      x.score = coarse ? double(rng() % 11) / 10.0 : double(rng() % 1000000) / 1e6;
      x.verdict = double(rng() % 1000) / 1000.0 < 0.4 + 0.6 * x.score ? Verdict::accept : Verdict::reject;
    }
    std::vector<double> cands;
    for (const auto& x : d) cands.push_back(x.score);
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    double expected = kSentinelTau;
    for (double c : cands)
      if (precision_scan(d, c) >= 0.9) {
        expected = c;
        break;
      }
    const auto r = calibrate_offline(d, 0.9);
    CHECK(r.tau == expected);
    if (!r.infeasible) {
      CHECK(precision_scan(d, r.tau) >= 0.9);
      const auto it = std::lower_bound(cands.begin(), cands.end(), r.tau);
      if (it != cands.begin()) CHECK(precision_scan(d, *(it - 1)) < 0.9);
    }
  }
}

TEST_CASE("Wilson lower bound is conservative", "[calib]") {
  CHECK(estimate_precision(9, 10, PrecisionEstimator::wilson_lower) < 0.9);
  CHECK(estimate_precision(9, 10, PrecisionEstimator::wilson_lower) == Catch::Approx(0.5958).margin(1e-4));
  CHECK(estimate_precision(900, 1000, PrecisionEstimator::wilson_lower) ==
        Catch::Approx(0.87985).margin(1e-5));
  const auto d = sv({0.9, 0.8, 0.7}, {1, 1, 1});
  CHECK(calibrate_offline(d, 0.9, PrecisionEstimator::wilson_lower).infeasible);
}

TEST_CASE("refine_online contract", "[calib]") {
  std::mt19937_64 rng(8);
  RefineConfig config;

  SECTION("window at target keeps or lowers tau by at most delta") {
    std::vector<ScoredVerdict> w;
    for (int i = 0; i < 100; ++i) w.push_back({0.5 + 0.005 * i, i % 15 == 0 ? Verdict::reject : Verdict::accept});
    const auto r = refine_online(w, 0.7, config);
    CHECK(r.window_precision >= 0.9);
    CHECK(r.tau <= 0.7);
    CHECK(r.tau >= 0.7 - config.max_decrease);
  }
  SECTION("window below target raises tau to the smallest restoring value") {
    std::vector<ScoredVerdict> w;
    std::uniform_real_distribution<double> u(0.5, 1.0);
    for (int i = 0; i < 200; ++i) {
      const double s = u(rng);
      w.push_back({s, u(rng) < s - 0.1 ? Verdict::accept : Verdict::reject});
    }
    const double tau = 0.5;
    const auto r = refine_online(w, tau, config);
    REQUIRE(r.window_precision < 0.9);
    CHECK(r.tau > tau);
    if (r.tau <= 1.0) {
      CHECK(precision_scan(w, r.tau) >= 0.9);
      for (const auto& x : w)
        if (x.score > tau && x.score < r.tau) CHECK(precision_scan(w, x.score) < 0.9);
    }
  }
  SECTION("small windows are refused") {
    std::vector<ScoredVerdict> w(49, {0.9, Verdict::accept});
    CHECK(code_of([&] { refine_online(w, 0.8, config); }) == ErrorCode::window_too_small);
  }
}

TEST_CASE("guardrails trip on the first violated bound", "[calib]") {
  GuardrailConfig config;
  SliceWindowMetrics m;
  m.slice_id = "a";
  m.finalization_rejection_rate = 0.25;
  const auto tripped = evaluate_guardrails(m, config, 42);
  CHECK(tripped.tripped);
  CHECK(tripped.tripped_rule == "finalization_rejection_cap");
  CHECK(tripped.value == 0.25);
  CHECK(tripped.bound == 0.15);
  CHECK(tripped.tripped_at == 42);

  m.finalization_rejection_rate = 0.1;
  m.critical_precision = 0.95;
  m.corrective_intervention_rate = 0.1;
  m.validation_failure_rate = 0.01;
  CHECK_FALSE(evaluate_guardrails(m, config, 0).tripped);

  config.defaults.kpi_caps["returns"] = 0.02;
  m.kpis["returns"] = 0.05;
  CHECK(evaluate_guardrails(m, config, 0).tripped_rule == "kpi:returns");

  config.overrides["a"].finalization_rejection_cap = 0.05;
  m.kpis.clear();
  CHECK(evaluate_guardrails(m, config, 0).tripped_rule == "finalization_rejection_cap");
}

TEST_CASE("slice window metrics count finalization reviews", "[calib]") {
  ThresholdPolicy t;
  t.default_tau = 0.5;
  std::vector<std::vector<SessionEvent>> logs;
  for (int i = 0; i < 4; ++i) {
    SessionBuilder b("s" + std::to_string(i), "a", Stage::calibration);
    b.snapshot(screen("end", {button("ok")}, 1));
    b.append(step(b.state(), StageConfig{}, t, always(close_chat()), FixedCritic(0.9), b.tick()).events);
    if (i == 0)
      b.append(resolve_review(b.state(), Verdict::reject, click("ok"), StageConfig{}, b.tick()));
    else
      b.append(resolve_review(b.state(), Verdict::accept, std::nullopt, StageConfig{}, b.tick()));
    logs.push_back(b.events());
  }
  const auto m = slice_window_metrics("a", logs);
  CHECK(m.sessions == 4);
  CHECK(m.finalization_reviews == 4);
  CHECK(*m.critical_precision == 0.75);
  CHECK(*m.finalization_rejection_rate == 0.25);
  CHECK(*m.corrective_intervention_rate == 0.25);
  CHECK_FALSE(m.validation_failure_rate.has_value());
}

TEST_CASE("registry: trip falls back only the affected slice, with hysteresis", "[calib]") {
  GuardrailConfig config;
  config.window_sessions = 10;
  auto audit = std::make_shared<AuditLog>();
  SliceRegistry reg(config, audit);
  ThresholdPolicy t;
  t.default_tau = 0.8;
  reg.add_slice("a", Stage::automation, t);
  reg.add_slice("b", Stage::automation, t);
  const auto before_b = reg.get("b");

  SliceWindowMetrics m;
  m.slice_id = "a";
  m.finalization_rejection_rate = 0.4;
  const auto tr = reg.apply_guardrails(evaluate_guardrails(m, config, 5), 5);
  REQUIRE(tr.has_value());
  CHECK(tr->from == Stage::automation);
  CHECK(tr->to == Stage::copilot);
  CHECK(tr->guardrail_id == "finalization_rejection_cap");
  CHECK(reg.get("a").stage == Stage::copilot);
  CHECK(reg.get("a").retrain_ticket_open);
  CHECK(reg.get("b") == before_b);

  // Recalibration goes to calibration, never straight to automation.
  CHECK(code_of([&] { reg.set_stage("a", Stage::automation, "admin", 6); }) == ErrorCode::illegal_transition);
  std::vector<ScoredVerdict> fresh;
  for (int i = 0; i < 60; ++i) fresh.push_back({i / 60.0, i >= 20 ? Verdict::accept : Verdict::reject});
  CHECK(code_of([&] { reg.recalibration_cycle("a", std::span(fresh).first(10), 50, "d1", "admin", 7); }) ==
        ErrorCode::insufficient_feedback);
  const auto next = reg.recalibration_cycle("a", fresh, 50, "d1", "admin", 7);
  CHECK(next.version == 1);
  CHECK(next.default_tau == Catch::Approx(16 / 60.0));
  CHECK(reg.get("a").stage == Stage::calibration);
  CHECK_FALSE(reg.get("a").retrain_ticket_open);

  // Hysteresis: automation stays off until a full window of sessions passes.
  CHECK(code_of([&] { reg.set_stage("a", Stage::automation, "admin", 8); }) == ErrorCode::illegal_transition);
  for (int i = 0; i < 10; ++i) reg.note_session_closed("a");
  CHECK_NOTHROW(reg.set_stage("a", Stage::automation, "admin", 9));
  CHECK(reg.get("b") == before_b);

  bool saw_recal = false;
  for (const auto& e : audit->entries())
    if (e.action == "recalibrate") saw_recal = e.prior["version"] == 0 && e.next["version"] == 1;
  CHECK(saw_recal);
}

TEST_CASE("registry thresholds are compare-and-set", "[calib]") {
  SliceRegistry reg(GuardrailConfig{}, nullptr);
  reg.add_slice("a", Stage::calibration, ThresholdPolicy{});
  ThresholdPolicy p;
  p.default_tau = 0.7;
  CHECK(reg.set_threshold("a", p, 0, "admin", 1).version == 1);
  CHECK(code_of([&] { reg.set_threshold("a", p, 0, "admin", 2); }) == ErrorCode::version_conflict);
  CHECK(reg.get("a").thresholds.default_tau == 0.7);
  CHECK(code_of([&] { reg.get("zzz"); }) == ErrorCode::not_found);
}

TEST_CASE("threshold and guardrail config JSON round-trip", "[calib]") {
  ThresholdPolicy p;
  p.slice_id = "a";
  p.default_tau = 0.8;
  p.per_type[ActionType::close_chat] = 0.95;
  p.version = 3;
  CHECK(Json(p).get<ThresholdPolicy>() == p);
  GuardrailConfig g;
  g.overrides["x"].finalization_rejection_cap = 0.3;
  const auto back = Json(g).get<GuardrailConfig>();
  CHECK(back.overrides.at("x").finalization_rejection_cap == 0.3);
  CHECK_THROWS_AS(Json::parse(R"({"defaults":{"finalization_rejection_cap":1.5}})").get<GuardrailConfig>(), Error);
}
