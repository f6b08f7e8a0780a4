#include <catch_amalgamated.hpp>

#include <random>

#include "helpers/builders.hpp"
#include "helpers/fakes.hpp"
#include "stepgate/common/error.hpp"
#include "stepgate/gate/gate.hpp"
#include "stepgate/kernels/kernels.hpp"
#include "stepgate/metrics/metrics.hpp"

using namespace stepgate;
using namespace stepgate::testing;

namespace {

// Textbook full-matrix edit distance over code points.
std::size_t lev_oracle(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[a.size()][b.size()];
}

std::string encode(const std::vector<char32_t>& cps) {
  std::string s;
  for (char32_t c : cps) {
    if (c < 0x80) {
      s += static_cast<char>(c);
    } else if (c < 0x800) {
      s += static_cast<char>(0xC0 | (c >> 6));
      s += static_cast<char>(0x80 | (c & 0x3F));
    } else {
      s += static_cast<char>(0xE0 | (c >> 12));
      s += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return s;
}

// A session whose operator holds control for the given spans (seconds).
SessionLog session_with_spans(const std::string& id, const std::string& customer, std::vector<int> spans_s) {
  SessionBuilder b(id, "slice", Stage::automation, customer);
  TimestampMs t = b.clock();
  b.snapshot(screen("s", {button("ok")}, 1));
  for (int span : spans_s) {
    b.push(EventKind::deferral, Deferral{DeferralReason::policy_abstained, std::nullopt, ""}, t += 1000);
    b.push(EventKind::handback, Handback{ControlHolder::policy, HandbackCause::explicit_signal},
           t += static_cast<TimestampMs>(span) * 1000);
  }
  b.push(EventKind::session_closed, SessionClosed{ClosedBy::policy, "finalized"}, t += 1000);
  return b.events();
}

SessionLog automated_session(const std::string& id, const std::string& customer = "c") {
  SessionBuilder b(id, "slice", Stage::automation, customer);
  b.snapshot(screen("s", {button("ok")}, 1));
  b.append(step(b.state(), StageConfig{}, ThresholdPolicy{}, always(click("ok")), FixedCritic(1), b.tick()).events);
  b.push(EventKind::session_closed, SessionClosed{ClosedBy::policy, "finalized"});
  return b.events();
}

}  // namespace

TEST_CASE("levenshtein similarity textbook values", "[metrics]") {
  CHECK(kernels::levenshtein("kitten", "sitting") == 3);
  CHECK(kernels::similarity("kitten", "sitting") == 1.0 - 3.0 / 7.0);
  CHECK(kernels::similarity("", "") == 1.0);
  CHECK(kernels::similarity("abc", "") == 0.0);
  // Code points, not bytes.
  CHECK(kernels::levenshtein("привет", "привед") == 1);
}

TEST_CASE("similarity equals the brute-force oracle exactly", "[metrics][property]") {
  std::mt19937_64 rng(2718);
  const std::vector<char32_t> alphabet = {U'a', U'b', U'c', U'd', U' ', U'я', U'ж', U'€'};
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<char32_t> a(rng() % 13), b(rng() % 13);
    for (auto& c : a) c = alphabet[rng() % alphabet.size()];
    for (auto& c : b) c = alphabet[rng() % alphabet.size()];
    const std::size_t longest = std::max(a.size(), b.size());
    const double expected = longest == 0 ? 1.0 : 1.0 - double(lev_oracle(a, b)) / double(longest);
    const auto sa = encode(a), sb = encode(b);
    REQUIRE(kernels::similarity(sa, sb) == expected);
    REQUIRE(kernels::similarity(sb, sa) == expected);
    REQUIRE((kernels::similarity(sa, sb) == 1.0) == (sa == sb));
  }
}

TEST_CASE("match_actions examples", "[metrics]") {
  CHECK(match_actions(click("a"), click("a")) == MatchVerdict{true, true, std::nullopt});
  CHECK(match_actions(click("a"), click("b")) == MatchVerdict{true, false, std::nullopt});
  CHECK_FALSE(match_actions(click("a"), say("a")).tool_match);
  const auto text = match_actions(say("kitten"), say("sitting"));
  CHECK(text.tool_match);
  CHECK_FALSE(text.action_match);
  CHECK(*text.similarity == Catch::Approx(4.0 / 7.0));
  CHECK(match_actions(say("Hello, how can I help?"), say("Hello, how can I help!")).action_match);
}

TEST_CASE("accuracy_report overall, per type and per provenance", "[metrics]") {
  std::vector<PredictionPair> pairs = {{click("a"), click("a"), Provenance::predefined},
                                       {click("b"), click("a"), Provenance::predefined},
                                       {say("hi"), say("hi"), Provenance::rejected},
                                       {close_chat(), close_chat(), Provenance::rejected}};
  const auto r = accuracy_report(pairs);
  CHECK(r.overall.action_acc == 0.75);
  CHECK(r.overall.tool_acc == 1.0);
  CHECK(r.per_type.at(ActionType::click_control).action_acc == 0.5);
  CHECK(r.per_provenance.size() == 2);
  CHECK(r.per_provenance.at(Provenance::predefined).action_acc == 0.5);
  CHECK(r.per_provenance.at(Provenance::rejected).action_acc == 1.0);
  CHECK_THROWS_AS(accuracy_report(std::span<const PredictionPair>{}), Error);
}

TEST_CASE("acceptance rate per tool", "[metrics]") {
  std::vector<ReviewedProposal> fb;
  for (int i = 0; i < 16; ++i) {
    ReviewedProposal r;
    r.proposal.action = act(ActionType::transfer_chat, std::nullopt, "billing");
    r.feedback.verdict = i < 13 ? Verdict::accept : Verdict::reject;
    fb.push_back(r);
  }
  const auto rates = acceptance_rate(fb);
  CHECK(rates.at(ActionType::transfer_chat).rate == 0.8125);
  CHECK(rates.count(ActionType::close_chat) == 0);
  CHECK_THROWS_AS(acceptance_rate(std::span<const ReviewedProposal>{}), Error);
}

TEST_CASE("collect_feedback joins verdicts with proposals and scores", "[metrics]") {
  SessionBuilder b("s", "a", Stage::copilot, "cust");
  b.snapshot(screen("s", {button("ok")}, 1));
  b.append(step(b.state(), StageConfig{}, ThresholdPolicy{}, always(say("hi")), FixedCritic(0.4), b.tick()).events);
  b.append(resolve_review(b.state(), Verdict::reject, click("ok"), StageConfig{}, b.tick()));
  const auto fb = collect_feedback(b.events());
  REQUIRE(fb.size() == 1);
  CHECK(fb[0].customer_id == "cust");
  CHECK(fb[0].score->value == 0.4);
  CHECK(fb[0].review_reason == DeferralReason::copilot_review);
  CHECK(fb[0].feedback.corrective_action->action_type == ActionType::click_control);
}

TEST_CASE("automation rate on a constructed fixture", "[metrics]") {
  std::vector<SessionLog> logs;
  for (int i = 0; i < 9; ++i) logs.push_back(automated_session("auto" + std::to_string(i)));
  for (int i = 0; i < 11; ++i) logs.push_back(session_with_spans("def" + std::to_string(i), "c", {30}));
  const auto r = automation_rate(logs, kDefaultReplyTimeoutMs, 1'800'000'000'000);
  CHECK(r.sessions == 20);
  CHECK(r.automated == 9);
  CHECK(r.rate == 0.45);
}

TEST_CASE("automation rate is antitone in deferrals", "[metrics][property]") {
  std::vector<SessionLog> logs;
  for (int i = 0; i < 10; ++i) logs.push_back(automated_session("a" + std::to_string(i)));
  double prev = automation_rate(logs, kDefaultReplyTimeoutMs, 0).rate;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    // Insert a deferral + handback before the close.
    auto& log = logs[i];
    auto closed = log.back();
    log.pop_back();
    const auto t = log.back().ts;
    log.push_back({log[0].session_id, closed.event_seq, t + 1, EventKind::deferral,
                   Deferral{DeferralReason::policy_abstained, std::nullopt, ""}});
    closed.event_seq += 1;
    closed.ts = t + 2;
    log.push_back(closed);
    const double now = automation_rate(logs, kDefaultReplyTimeoutMs, 0).rate;
    CHECK(now <= prev);
    prev = now;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("aat sums operator spans per customer", "[metrics]") {
  std::vector<SessionLog> all_auto = {automated_session("a", "c1"), automated_session("b", "c2")};
  CHECK(aat(all_auto) == 0.0);

  std::vector<SessionLog> one = {session_with_spans("s", "c1", {120, 60})};
  CHECK(aat(one) == 180.0);

  std::vector<SessionLog> mixed = {session_with_spans("s1", "c1", {120}), session_with_spans("s2", "c1", {60}),
                                   automated_session("s3", "c2")};
  CHECK(aat(mixed) == 90.0);
  std::reverse(mixed.begin(), mixed.end());
  CHECK(aat(mixed) == 90.0);

  auto skewed = session_with_spans("x", "c", {10});
  skewed[3].ts = skewed[2].ts - 5000;  // handback before the deferral
  CHECK_THROWS_AS(operator_active_ms(skewed), Error);
}

TEST_CASE("A/B deltas on fixed-mean fixtures", "[metrics]") {
  auto group = [](const std::string& prefix, double value, int n) {
    std::map<std::string, double> g;
    for (int i = 0; i < n; ++i) g[prefix + std::to_string(i)] = value;
    return g;
  };
  AbOptions opt;
  opt.resamples = 1000;
  CHECK(percent_rounded(ab_analyze(group("c", 227.37, 50), group("t", 139.15, 50), opt).delta_relative) == -39);
  CHECK(percent_rounded(ab_analyze(group("c", 124.67, 50), group("t", 104.72, 50), opt).delta_relative) == -16);
  // (150.13 - 187.66) / 187.66 = -20.0%.
  CHECK(percent_rounded(ab_analyze(group("c", 187.66, 50), group("t", 150.13, 50), opt).delta_relative) == -20);
}

TEST_CASE("A/B null case, overlap and resample floor", "[metrics]") {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0 / 200.0);
  std::map<std::string, double> c, t;
  for (int i = 0; i < 2000; ++i) {
    c["c" + std::to_string(i)] = e(rng);
    t["t" + std::to_string(i)] = e(rng);
  }
  AbOptions opt;
  const auto r = ab_analyze(c, t, opt);
  CHECK(r.ci_low < 0.0);
  CHECK(r.ci_high > 0.0);
  CHECK(r.p_value > 0.05);

  auto overlap = t;
  overlap["c7"] = 1.0;
  CHECK_THROWS_MATCHES(ab_analyze(c, overlap, opt), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& x) { return x.code() == ErrorCode::group_overlap; }));
  opt.resamples = 999;
  CHECK_THROWS_AS(ab_analyze(c, t, opt), Error);
}

TEST_CASE("A/B recovers a known -25% effect at n=17k", "[metrics][montecarlo]") {
  std::mt19937_64 rng(25);
  std::gamma_distribution<double> base(2.0, 100.0);
  std::map<std::string, double> c, t;
  for (int i = 0; i < 17000; ++i) {
    c["c" + std::to_string(i)] = base(rng);
    t["t" + std::to_string(i)] = 0.75 * base(rng);
  }
  const auto r = ab_analyze(c, t, AbOptions{});
  CHECK(r.ci_low <= -0.25);
  CHECK(r.ci_high >= -0.25);
  CHECK(r.ci_high < 0.0);
  CHECK(r.p_value < 0.05);
}

TEST_CASE("bootstrap, sweep and batch similarity kernels match their serial references", "[metrics][kernels]") {
  std::vector<double> c(500), t(400);
  std::mt19937_64 rng(1);
  for (auto& x : c) x = double(rng() % 1000);
  for (auto& x : t) x = double(rng() % 800);
  CHECK(kernels::bootstrap_relative_delta(c, t, 3000, 9) == kernels::bootstrap_relative_delta_serial(c, t, 3000, 9));

  std::vector<kernels::GatedItem> items(5000);
  for (auto& it : items) it = {double(rng() % 1000) / 1000.0, rng() % 3 != 0};
  std::vector<double> taus;
  for (int i = 0; i < 50; ++i) taus.push_back(i / 49.0);
  const auto par = kernels::threshold_sweep(items, taus);
  const auto ser = kernels::threshold_sweep_serial(items, taus);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    CHECK(par[i].executed == ser[i].executed);
    CHECK(par[i].precision == ser[i].precision);
    if (i) CHECK(par[i].coverage <= par[i - 1].coverage);
  }

  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 2000; ++i) pairs.emplace_back(std::to_string(rng()), std::to_string(rng()));
  CHECK(kernels::similarity_batch(pairs) == kernels::similarity_batch_serial(pairs));
}

TEST_CASE("rejection bucket cascade examples", "[metrics]") {
  TemplateRegistry reg{{"Your card has been blocked. Anything else?"}};
  CHECK(bucket_rejection(close_chat(), click("continue"), reg) == RejectionBucket::C3);
  CHECK(bucket_rejection(say("Your card has been blocked. Anything else?"), click("block"), reg) ==
        RejectionBucket::C1);
  CHECK(bucket_rejection(say("let me think about it"), click("block"), reg) == RejectionBucket::C2);
  CHECK(bucket_rejection(click("a"), say("hello"), reg) == RejectionBucket::C7);
  CHECK(bucket_rejection(click("a"), click("b"), reg) == RejectionBucket::C6);
  CHECK(bucket_rejection(click("a"), click("a"), reg) == RejectionBucket::other);
  CHECK(bucket_rejection(close_chat(), act(ActionType::transfer_chat, std::nullopt, "x"), reg) ==
        RejectionBucket::other);

  const std::string base = "Your refund of 120 euros has been approved today";
  const std::string edited = "Your refund of 120 euro has been approved today.";
  const double s = kernels::similarity(base, edited);
  CHECK(s >= 0.93);
  CHECK(bucket_rejection(say(base), say(edited), reg, 0.8) == RejectionBucket::C5);
  CHECK(bucket_rejection(say(base), say("Please send a photo of your card"), reg, 0.8) == RejectionBucket::C4);
  CHECK(high_level_of(RejectionBucket::C5) == HighLevelCategory::acceptable_but_rejected);
  CHECK(high_level_of(RejectionBucket::C3) == HighLevelCategory::model_error);
}

TEST_CASE("bucket report is total and sums to 100", "[metrics][property]") {
  std::mt19937_64 rng(77);
  const std::vector<ActionRecord> pool = {say("hello there"), say("hello there!"), say("totally different"),
                                          click("a"), click("b"), close_chat(),
                                          act(ActionType::transfer_chat, std::nullopt, "x"),
                                          act(ActionType::fill_input, "f", "1"),
                                          act(ActionType::open_procedure, "p", "refund")};
  TemplateRegistry reg{{"hello there"}};
  std::vector<ReviewedProposal> recs(1000);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].session_id = "s" + std::to_string(i);
    recs[i].proposal.action = pool[rng() % pool.size()];
    recs[i].feedback.verdict = Verdict::reject;
    recs[i].feedback.corrective_action = pool[rng() % pool.size()];
  }
  const auto r = bucket_report(recs, reg);
  CHECK(r.total == 1000);
  std::size_t counted = 0;
  long tenths = 0;
  double exact = 0.0;
  for (const auto& [b, c] : r.counts) counted += c;
  for (const auto& [b, p] : r.percent_1dp) tenths += std::lround(p * 10);
  for (const auto& [b, p] : r.percent) exact += p;
  CHECK(counted == 1000);
  CHECK(tenths == 1000);
  CHECK(exact == Catch::Approx(100.0).epsilon(1e-12));
}
