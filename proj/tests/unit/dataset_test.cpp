#include <catch_amalgamated.hpp>

#include <random>
#include <set>

#include "helpers/builders.hpp"
#include "helpers/fakes.hpp"
#include "stepgate/common/error.hpp"
#include "stepgate/dataset/dataset.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/gate/gate.hpp"

using namespace stepgate;
using namespace stepgate::dataset;
using namespace stepgate::testing;

namespace {

DialogSample sample(const std::string& session, int idx, ActionType type, const std::string& screen_id = "s") {
  DialogSample s;
  s.session_id = session;
  s.sample_id = ingest::sample_id(session, idx);
  s.turns.push_back({ingest::TurnKind::ui_snapshot, 0, screen(screen_id, {}, 1)});
  s.target = act(type, requires_target(type) ? std::optional<std::string>("c") : std::nullopt,
                 requires_payload(type) ? std::optional<std::string>("p") : std::nullopt);
  return s;
}

std::vector<DialogSample> pool_by_tool(std::mt19937_64& rng, std::size_t n) {
  std::vector<DialogSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    // Skewed: send_text_to_chat dominates, like real logs.
    const auto t = rng() % 3 == 0 ? kAllActionTypes[rng() % 9] : ActionType::send_text_to_chat;
    out.push_back(sample("s" + std::to_string(i % 37), int(i), t, "screen" + std::to_string(rng() % 5)));
  }
  return out;
}

std::vector<std::string> ids(const std::vector<DialogSample>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(s.sample_id);
  return out;
}

// A copilot session with `rejects` rejected and `accepts` accepted proposals.
SessionLog copilot_session(const std::string& id, int accepts, int rejects, std::mt19937_64& rng) {
  SessionBuilder b(id, "cards", Stage::copilot, "cust-" + id);
  b.snapshot(screen("home", {button("ok"), button("next")}, 1));
  std::int64_t snap = 1;
  std::vector<bool> plan(accepts, true);
  plan.insert(plan.end(), rejects, false);
  std::shuffle(plan.begin(), plan.end(), rng);
  for (bool accept : plan) {
    b.customer("question");
    b.append(step(b.state(), StageConfig{}, ThresholdPolicy{}, always(say("answer")), FixedCritic(0.5), b.tick()).events);
    if (accept) {
      b.append(resolve_review(b.state(), Verdict::accept, std::nullopt, StageConfig{}, b.tick()));
    } else {
      b.append(resolve_review(b.state(), Verdict::reject, click("next"), StageConfig{}, b.tick()));
      ++snap;
      b.snapshot(screen("page" + std::to_string(snap - 1), {button("ok"), button("next")}, snap));
      b.append(handback(b.state(), b.tick()));
    }
  }
  return b.events();
}

}  // namespace

TEST_CASE("by_tool with N=9 draws one sample per type", "[dataset]") {
  std::mt19937_64 rng(1);
  auto pool = pool_by_tool(rng, 2000);
  for (auto t : kAllActionTypes) pool.push_back(sample("extra", int(pool.size()), t));
  const auto out = sample_dataset(pool, 9, Balancing::by_tool, 3);
  std::set<ActionType> types;
  for (const auto& s : out) types.insert(s.target.action_type);
  CHECK(types.size() == 9);
}

TEST_CASE("same spec and seed give identical datasets", "[dataset]") {
  std::mt19937_64 rng(2);
  const auto pool = pool_by_tool(rng, 500);
  for (auto b : {Balancing::none, Balancing::by_screen, Balancing::by_tool}) {
    CHECK(ids(sample_dataset(pool, 200, b, 9)) == ids(sample_dataset(pool, 200, b, 9)));
    CHECK(ids(sample_dataset(pool, 200, b, 9)) != ids(sample_dataset(pool, 200, b, 10)));
  }
}

TEST_CASE("balanced draws are even and without replacement", "[dataset][property]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DialogSample> pool;
    for (std::size_t i = 0; i < 900; ++i) pool.push_back(sample("s", int(i), kAllActionTypes[i % 9]));
    const std::size_t n = 1 + rng() % 900;
    const auto out = sample_dataset(pool, n, Balancing::by_tool, rng());
    REQUIRE(out.size() == n);
    std::map<ActionType, std::size_t> counts;
    for (const auto& s : out) ++counts[s.target.action_type];
    std::size_t lo = n, hi = 0;
    for (auto t : kAllActionTypes) {
      lo = std::min(lo, counts[t]);
      hi = std::max(hi, counts[t]);
    }
    CHECK(hi - lo <= 1);
    const auto got = ids(out);
    CHECK(std::set<std::string>(got.begin(), got.end()).size() == n);
  }
}

TEST_CASE("exhausted buckets hand their quota to the survivors", "[dataset]") {
  std::vector<DialogSample> pool;
  pool.push_back(sample("s", 0, ActionType::close_chat, "rare"));
  for (int i = 1; i <= 100; ++i) pool.push_back(sample("s", i, ActionType::click_control, "a"));
  for (int i = 101; i <= 200; ++i) pool.push_back(sample("s", i, ActionType::click_control, "b"));
  const auto out = sample_dataset(pool, 101, Balancing::by_screen, 5);
  std::map<std::string, int> counts;
  for (const auto& s : out) ++counts[screen_of(s)];
  CHECK(counts["rare"] == 1);
  CHECK(counts["a"] == 50);
  CHECK(counts["b"] == 50);
  CHECK_THROWS_MATCHES(sample_dataset(pool, 202, Balancing::by_screen, 5), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::insufficient_data; }));
}

TEST_CASE("uniform draw includes each sample with probability n/M", "[dataset][montecarlo]") {
  std::vector<DialogSample> pool;
  for (int i = 0; i < 50; ++i) pool.push_back(sample("s", i, ActionType::click_control));
  std::vector<int> hits(50);
  const int trials = 4000;
  for (int t = 0; t < trials; ++t)
    for (const auto& s : sample_dataset(pool, 10, Balancing::none, std::uint64_t(t)))
      ++hits[std::stoi(s.sample_id.substr(2))];
  // Each count is Binomial(4000, 0.2): mean 800, sd ~25.3.
  for (int h : hits) CHECK(std::abs(h - 800) < 6 * 25.3);
}

TEST_CASE("mix keeps provenance and degenerates to the historical pool", "[dataset]") {
  std::mt19937_64 rng(4);
  const auto pre = pool_by_tool(rng, 300);
  std::vector<DialogSample> rej;
  for (int i = 0; i < 50; ++i) rej.push_back(sample("r", i, ActionType::click_control));
  const auto pure = mix_with_rejections(pre, rej, 120, 0, 1);
  CHECK(pure.size() == 120);
  for (const auto& s : pure) CHECK(s.provenance == Provenance::predefined);
  const auto mixed = mix_with_rejections(pre, rej, 170, 40, 1);
  std::size_t n_rej = 0;
  for (const auto& s : mixed) n_rej += s.provenance == Provenance::rejected;
  CHECK(n_rej == 40);
  CHECK(mixed.size() == 210);
  CHECK_THROWS_AS(mix_with_rejections(pre, rej, 10, 51, 1), Error);
}

TEST_CASE("rejected samples target the operator correction", "[dataset]") {
  std::mt19937_64 rng(5);
  const auto log = copilot_session("cs", 4, 3, rng);
  const auto samples = rejection_samples(log);
  REQUIRE(samples.size() == 3);
  const auto feedback = collect_feedback(log);
  for (const auto& s : samples) {
    const auto it = std::find_if(feedback.begin(), feedback.end(), [&](const ReviewedProposal& r) {
      return ingest::sample_id(r.session_id, r.proposal_seq) == s.sample_id;
    });
    REQUIRE(it != feedback.end());
    CHECK(it->feedback.verdict == Verdict::reject);
    CHECK(s.target == *it->feedback.corrective_action);
    CHECK(s.provenance == Provenance::rejected);
    CHECK(s.turns.back().event_seq < it->proposal_seq);
  }
}

TEST_CASE("holdout split is disjoint by session", "[dataset][property]") {
  std::vector<std::string> sessions;
  for (int i = 0; i < 97; ++i) sessions.push_back("s" + std::to_string(i));
  for (double f : {0.01, 0.1, 0.5, 0.99}) {
    const auto split = split_sessions(sessions, f, 7);
    std::set<std::string> a(split.train_sessions.begin(), split.train_sessions.end());
    std::set<std::string> b(split.holdout_sessions.begin(), split.holdout_sessions.end());
    for (const auto& s : b) CHECK(a.count(s) == 0);
    CHECK(a.size() + b.size() == 97);
    CHECK_FALSE(a.empty());
    CHECK_FALSE(b.empty());
  }
  CHECK_THROWS_AS(split_sessions(sessions, 1.0, 7), Error);
  CHECK_THROWS_AS(split_sessions(sessions, 0.0, 7), Error);
}

TEST_CASE("preference pairs: one per reject, none per accept", "[dataset]") {
  std::vector<ReviewedProposal> fb(100);
  for (int i = 0; i < 100; ++i) {
    fb[i].session_id = "s";
    fb[i].proposal_seq = i;
    fb[i].proposal.action = say("Let me check", Actor::policy);
    fb[i].feedback.verdict = i < 10 ? Verdict::reject : Verdict::accept;
    if (i < 10) fb[i].feedback.corrective_action = click("check_balance");
  }
  const auto out = extract_preference_pairs(fb);
  REQUIRE(out.pairs.size() == 10);
  CHECK(out.pairs[0].rejected.action_type == ActionType::send_text_to_chat);
  CHECK(out.pairs[0].preferred.action_type == ActionType::click_control);
  CHECK(out.pairs[3].sample_id == "s#3");
  CHECK(out.rejected_histogram.at(ActionType::send_text_to_chat) == 10);
  for (const auto& p : out.pairs) CHECK(Json(p).get<PreferencePair>() == p);

  fb[0].feedback.corrective_action.reset();
  CHECK_THROWS_MATCHES(extract_preference_pairs(fb), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::missing_correction; }));
}

TEST_CASE("end-to-end build from copilot sessions", "[dataset]") {
  std::mt19937_64 rng(6);
  std::vector<SessionLog> logs;
  int total_rejects = 0;
  for (int i = 0; i < 40; ++i) {
    const int rejects = int(rng() % 4);
    total_rejects += rejects;
    logs.push_back(copilot_session("cs" + std::to_string(i), 3, rejects, rng));
  }
  DatasetSpec spec;
  spec.size = 30;
  spec.mix = Mix{20, 10};
  spec.holdout = 0.2;
  spec.seed = 11;
  const auto built = build_dataset(logs, spec);
  CHECK(built.train.size() == 30);
  std::set<std::string> held(built.split.holdout_sessions.begin(), built.split.holdout_sessions.end());
  CHECK(held.size() == 8);
  for (const auto& s : built.train) CHECK(held.count(s.session_id) == 0);
  for (const auto& s : built.holdout) CHECK(held.count(s.session_id) == 1);
  for (const auto& p : built.pairs.pairs) CHECK(held.count(p.session_id) == 0);
  CHECK(built.pairs.pairs.size() < std::size_t(total_rejects) + 1);

  CHECK(spec_from_json(to_json(spec)).mix->n_rejected == 10);
  Json bad = to_json(spec);
  bad["size"] = 31;
  CHECK_THROWS_AS(spec_from_json(bad), Error);
  bad = to_json(spec);
  bad["holdout"] = 1.0;
  CHECK_THROWS_AS(spec_from_json(bad), Error);
}
