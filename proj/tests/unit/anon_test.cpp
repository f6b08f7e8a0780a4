#include <catch_amalgamated.hpp>

#include <numeric>
#include <random>

#include "helpers/builders.hpp"
#include "stepgate/anon/anon.hpp"
#include "stepgate/common/error.hpp"

using namespace stepgate;
using namespace stepgate::anon;
using namespace stepgate::testing;

namespace {

std::string mask_one(const std::string& text, const MaskingDictionary& dict = default_dictionary()) {
  SessionBuilder b("s", "x", Stage::logging);
  b.customer(text);
  return mask_session(b.events(), dict).events[1].as<ChatMessage>().text;
}

bool has_code(const Error& e, ErrorCode c) { return e.code() == c; }

}  // namespace

TEST_CASE("same surface form shares a suffix", "[anon]") {
  CHECK(mask_one("Call Anna, then Anna again") == "Call <NAME_A>, then <NAME_A> again");
}

TEST_CASE("distinct entities get distinct suffixes", "[anon]") {
  CHECK(mask_one("Call +33 6 12 34 56 78 or 020 7946 0958 please") ==
        "Call <PHONE_NUMBER_A> or <PHONE_NUMBER_B> please");
  CHECK(mask_one("Anna wrote to anna.k@example.org about Boris") ==
        "<NAME_A> wrote to <EMAIL_A> about <NAME_B>");
}

TEST_CASE("suffixes persist across events of one session", "[anon]") {
  SessionBuilder b("s", "x", Stage::logging);
  b.customer("I am Anna");
  b.customer("My friend Boris");
  b.action(say("Thanks Anna and Boris"));
  const auto out = mask_session(b.events(), default_dictionary());
  CHECK(out.events[1].as<ChatMessage>().text == "I am <NAME_A>");
  CHECK(out.events[2].as<ChatMessage>().text == "My friend <NAME_B>");
  CHECK(out.events[3].as<ActionRecord>().payload == "Thanks <NAME_A> and <NAME_B>");
  CHECK(out.ledger.placeholders.at("<NAME_A>").occurrences == 2);
  CHECK(out.ledger.placeholders.at("<NAME_A>").entity_type == "name");
  // The ledger never stores surface forms.
  CHECK(to_json(out.ledger).dump().find("Anna") == std::string::npos);
}

TEST_CASE("removal fields are dropped wholesale", "[anon]") {
  SessionBuilder b("s", "x", Stage::logging);
  auto snap = screen("profile", {button("ok"), input("passport", "X123")}, 1);
  snap.customer_profile = {{"attachment", "scan.pdf"}, {"tier", "gold"}};
  b.snapshot(snap);
  auto dict = default_dictionary();
  dict.removal_fields.push_back("controls.passport");
  const auto out = mask_session(b.events(), dict);
  const auto& s = out.events[1].as<UiSnapshot>();
  CHECK(s.customer_profile.count("attachment") == 0);
  CHECK(s.customer_profile.at("tier") == "gold");
  CHECK(s.find("passport") == nullptr);
  CHECK(s.find("ok") != nullptr);
  CHECK(out.ledger.removed_fields == 2);
}

TEST_CASE("snapshot and action texts are masked", "[anon]") {
  SessionBuilder b("s", "x", Stage::logging);
  auto snap = screen("form", {input("email", "olga@mail.ru")}, 1);
  snap.customer_profile = {{"name", "Olga"}};
  b.snapshot(snap);
  b.action(act(ActionType::fill_input, "email", "olga@mail.ru"));
  b.action(act(ActionType::open_procedure, "menu", "Olga"));
  const auto out = mask_session(b.events(), default_dictionary());
  CHECK(out.events[1].as<UiSnapshot>().controls[0].value == "<EMAIL_A>");
  CHECK(out.events[1].as<UiSnapshot>().customer_profile.at("name") == "<NAME_A>");
  CHECK(out.events[2].as<ActionRecord>().payload == "<EMAIL_A>");
  // Procedure names are identifiers, not free text.
  CHECK(out.events[3].as<ActionRecord>().payload == "Olga");
}

TEST_CASE("longest match wins, then leftmost", "[anon]") {
  MaskingDictionary d;
  d.detectors = {{"short", "SHORT", std::nullopt, {"ab"}, false},
                 {"long", "LONG", std::nullopt, {"ab cd"}, false},
                 {"other", "OTHER", std::nullopt, {"cd ef"}, false}};
  CHECK(mask_one("ab cd ef", d) == "<LONG_A> ef");
  d.detectors = {{"x", "X", R"(\d{3})", {}, false}, {"y", "Y", R"(\d{3}-\d)", {}, false}};
  CHECK(mask_one("123-4", d) == "<Y_A>");
  d.detectors = {{"x", "X", R"(a+b)", {}, false}, {"y", "Y", R"(ba+)", {}, false}};
  CHECK(mask_one("aab aa", d) == "<X_A> aa");
  CHECK(mask_one("aaba", d) == "<X_A>a");
}

TEST_CASE("suffix alphabet and overflow", "[anon]") {
  CHECK(suffix_for(0) == "A");
  CHECK(suffix_for(25) == "Z");
  CHECK(suffix_for(26) == "AA");
  CHECK(suffix_for(27) == "AB");
  CHECK(suffix_for(52) == "BA");
  CHECK(suffix_for(675) == "YZ");
  CHECK_THROWS_MATCHES(suffix_for(676), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return has_code(e, ErrorCode::suffix_overflow); }));

  MaskingDictionary d;
  d.detectors = {{"num", "NUM", R"(\d+)", {}, false}};
  std::string text;
  for (int i = 0; i < 676; ++i) text += std::to_string(i) + " ";
  const std::string masked = mask_one(text, d);
  CHECK(masked.find("<NUM_YZ>") != std::string::npos);
  CHECK_THROWS_MATCHES(mask_one(text + "676", d), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return has_code(e, ErrorCode::suffix_overflow); }));
}

TEST_CASE("dictionary config validation and round trip", "[anon]") {
  const Json ok = to_json(default_dictionary());
  CHECK(to_json(dictionary_from_json(ok)) == ok);
  Json dup = ok;
  dup["detectors"][1]["stem"] = "EMAIL";
  CHECK_THROWS_AS(dictionary_from_json(dup), Error);
  Json bad = ok;
  bad["detectors"][0]["pattern"] = "([a-z";
  CHECK_THROWS_AS(dictionary_from_json(bad), Error);
  Json stem = ok;
  stem["detectors"][0]["stem"] = "email";
  CHECK_THROWS_AS(dictionary_from_json(stem), Error);
  Json field = ok;
  field["removal_fields"] = {"attachment"};
  CHECK_THROWS_AS(dictionary_from_json(field), Error);
}

TEST_CASE("custom detectors plug into the masker", "[anon]") {
  struct Upper : EntityDetector {
    void find(std::string_view text, std::vector<Match>& out) const override {
      for (std::size_t i = 0; i < text.size();) {
        if (!std::isupper(static_cast<unsigned char>(text[i]))) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isupper(static_cast<unsigned char>(text[j]))) ++j;
        if (j - i >= 3) out.push_back({i, j});
        i = j;
      }
    }
  };
  Masker m(MaskingDictionary{});
  m.add_detector("org", "ORG", std::make_shared<Upper>());
  SessionBuilder b("s", "x", Stage::logging);
  b.customer("I work at ACME and IBM");
  const auto once = m.mask_session(b.events());
  CHECK(once.events[1].as<ChatMessage>().text == "I work at <ORG_A> and <ORG_B>");
  // The stem itself is upper case but placeholders are never rescanned.
  CHECK(m.mask_session(once.events).events == once.events);
}

TEST_CASE("masking is complete, idempotent and suffix-correct on a fuzz corpus", "[anon][property]") {
  std::mt19937_64 rng(20240501);
  auto word = [&](std::size_t n) {
    std::string s(1, static_cast<char>('A' + rng() % 26));
    for (std::size_t i = 1; i < n; ++i) s += static_cast<char>('a' + rng() % 26);
    return s;
  };
  std::vector<std::string> names;
  std::set<std::string> seen;
  while (names.size() < 80)
    if (auto w = word(6); seen.insert(w).second) names.push_back(w);
  std::vector<std::string> phones, emails;
  while (phones.size() < 60) {
    std::string p = "+4";
    for (int i = 0; i < 10; ++i) p += static_cast<char>('0' + rng() % 10);
    if (seen.insert(p).second) phones.push_back(p);
  }
  while (emails.size() < 60)
    if (auto e = "u" + std::to_string(rng() % 100000) + "@host" + std::to_string(rng() % 100) + ".com";
        seen.insert(e).second)
      emails.push_back(e);

  MaskingDictionary dict;
  dict.detectors = {{"name", "NAME", std::nullopt, names, false},
                    {"email", "EMAIL", R"([a-z0-9.]+@[a-z0-9]+\.com)", {}, false},
                    {"phone", "PHONE_NUMBER", R"(\+\d{11})", {}, false}};
  const std::vector<std::string> filler = {"hello", "please check", "thanks", "my friend", "and also", "ok"};
  std::vector<std::pair<std::string, std::string>> entities;  // (surface, stem)
  for (const auto& n : names) entities.emplace_back(n, "NAME");
  for (const auto& e : emails) entities.emplace_back(e, "EMAIL");
  for (const auto& p : phones) entities.emplace_back(p, "PHONE_NUMBER");

  for (int session = 0; session < 5; ++session) {
    SessionBuilder b("fz" + std::to_string(session), "x", Stage::logging);
    std::vector<std::string> expected_texts;
    std::map<std::string, std::string> expected_ph;
    std::map<std::string, std::size_t> counter;
    std::set<std::string> used;
    // Every entity once in shuffled order, then repeats.
    std::vector<std::size_t> draws(entities.size());
    std::iota(draws.begin(), draws.end(), 0);
    std::shuffle(draws.begin(), draws.end(), rng);
    for (int i = 0; i < 280; ++i) draws.push_back(rng() % entities.size());
    std::size_t next = 0;
    for (int msg = 0; msg < 80; ++msg) {
      std::string raw, masked;
      for (int piece = 0; piece < 6; ++piece) {
        const auto& f = filler[rng() % filler.size()];
        raw += f + " ";
        masked += f + " ";
        const auto& [surface, stem] = entities[draws[next++]];
        used.insert(surface);
        if (!expected_ph.count(surface))
          expected_ph[surface] = "<" + stem + "_" + suffix_for(counter[stem]++) + ">";
        raw += surface + " ";
        masked += expected_ph[surface] + " ";
      }
      b.customer(raw);
      expected_texts.push_back(masked);
    }
    REQUIRE(used.size() == 200);

    Masker masker(dict);
    const auto out = masker.mask_session(b.events());
    REQUIRE(out.events.size() == b.events().size());
    for (std::size_t i = 0; i < out.events.size(); ++i) {
      CHECK(out.events[i].event_seq == b.events()[i].event_seq);
      CHECK(out.events[i].kind == b.events()[i].kind);
    }
    for (std::size_t i = 0; i < expected_texts.size(); ++i)
      REQUIRE(out.events[i + 1].as<ChatMessage>().text == expected_texts[i]);

    std::set<std::string> placeholders;
    for (const auto& [s, ph] : expected_ph) placeholders.insert(ph);
    CHECK(placeholders.size() == expected_ph.size());

    std::string dump;
    for (const auto& e : out.events) {
      dump += to_jsonl(e);
      for (const auto& text : text_fields(e)) CHECK(masker.detect(text).empty());
    }
    for (const auto& s : used) CHECK(dump.find(s) == std::string::npos);

    CHECK(masker.mask_session(out.events).events == out.events);
  }
}
