#include "stepgate/anon/anon.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "stepgate/common/error.hpp"

namespace stepgate::anon {
namespace {

class RegexDetector final : public EntityDetector {
 public:
  RegexDetector(const std::string& pattern, bool icase) {
    auto flags = std::regex::ECMAScript | std::regex::optimize;
    if (icase) flags |= std::regex::icase;
    try {
      re_ = std::regex(pattern, flags);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::config_invalid, "bad pattern " + pattern + ": " + e.what());
    }
  }

  void find(std::string_view text, std::vector<Match>& out) const override {
    using It = std::regex_iterator<std::string_view::const_iterator>;
    for (It it(text.begin(), text.end(), re_), end; it != end; ++it) {
      if (it->length() == 0) continue;
      const auto b = static_cast<std::size_t>(it->position());
      out.push_back({b, b + static_cast<std::size_t>(it->length())});
    }
  }

 private:
  std::regex re_;
};

bool word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '_'; }

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

class TermDetector final : public EntityDetector {
 public:
  TermDetector(std::vector<std::string> terms, bool icase) : icase_(icase) {
    for (auto& t : terms) {
      if (t.empty()) throw Error(ErrorCode::config_invalid, "empty term in detector");
      terms_.push_back(icase ? lower_ascii(t) : std::move(t));
    }
  }

  void find(std::string_view text, std::vector<Match>& out) const override {
    const std::string folded = icase_ ? lower_ascii(text) : std::string();
    const std::string_view hay = icase_ ? std::string_view(folded) : text;
    for (const auto& term : terms_) {
      for (std::size_t pos = hay.find(term); pos != std::string_view::npos; pos = hay.find(term, pos + 1)) {
        const std::size_t end = pos + term.size();
        const bool left_ok = pos == 0 || !word_byte(static_cast<unsigned char>(hay[pos - 1]));
        const bool right_ok = end == hay.size() || !word_byte(static_cast<unsigned char>(hay[end]));
        if (left_ok && right_ok) out.push_back({pos, end});
      }
    }
  }

 private:
  std::vector<std::string> terms_;
  bool icase_;
};

bool valid_stem(const std::string& s) {
  if (s.empty() || !std::isupper(static_cast<unsigned char>(s[0])) || s.back() == '_') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isupper(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
  });
}

std::optional<std::size_t> suffix_index(std::string_view s) {
  auto letter = [](char c) { return c >= 'A' && c <= 'Z'; };
  if (s.size() == 1 && letter(s[0])) return static_cast<std::size_t>(s[0] - 'A');
  if (s.size() == 2 && letter(s[0]) && letter(s[1])) {
    const std::size_t i = 26 + static_cast<std::size_t>(s[0] - 'A') * 26 + static_cast<std::size_t>(s[1] - 'A');
    if (i < kMaxSuffixes) return i;
  }
  return std::nullopt;
}

struct Placeholder {
  Match span;
  std::string stem;
  std::size_t index = 0;
};

// Placeholders "<STEM_X>" whose stem is one of ours.
std::vector<Placeholder> find_placeholders(std::string_view text, const std::set<std::string, std::less<>>& stems) {
  std::vector<Placeholder> out;
  for (std::size_t pos = text.find('<'); pos != std::string_view::npos; pos = text.find('<', pos + 1)) {
    const std::size_t close = text.find('>', pos + 1);
    if (close == std::string_view::npos) break;
    const std::string_view inner = text.substr(pos + 1, close - pos - 1);
    const std::size_t us = inner.rfind('_');
    if (us == std::string_view::npos) continue;
    const std::string_view stem = inner.substr(0, us);
    auto idx = suffix_index(inner.substr(us + 1));
    if (!idx || !stems.count(stem)) continue;
    out.push_back({{pos, close + 1}, std::string(stem), *idx});
    pos = close;
  }
  return out;
}

}  // namespace

std::shared_ptr<const EntityDetector> regex_detector(const std::string& pattern, bool case_insensitive) {
  return std::make_shared<RegexDetector>(pattern, case_insensitive);
}

std::shared_ptr<const EntityDetector> term_detector(std::vector<std::string> terms, bool case_insensitive) {
  return std::make_shared<TermDetector>(std::move(terms), case_insensitive);
}

std::string suffix_for(std::size_t index) {
  if (index >= kMaxSuffixes)
    throw Error(ErrorCode::suffix_overflow, "more than " + std::to_string(kMaxSuffixes) + " distinct entities");
  if (index < 26) return std::string(1, static_cast<char>('A' + index));
  const std::size_t j = index - 26;
  return {static_cast<char>('A' + j / 26), static_cast<char>('A' + j % 26)};
}

MaskingDictionary dictionary_from_json(const Json& j) {
  MaskingDictionary d;
  std::set<std::string> stems;
  for (const auto& spec : j.at("detectors")) {
    DetectorSpec s;
    s.entity_type = spec.at("entity_type").get<std::string>();
    s.stem = spec.at("stem").get<std::string>();
    if (spec.contains("pattern")) s.pattern = spec.at("pattern").get<std::string>();
    if (spec.contains("terms")) s.terms = spec.at("terms").get<std::vector<std::string>>();
    s.case_insensitive = spec.value("case_insensitive", false);
    if (!valid_stem(s.stem)) throw Error(ErrorCode::config_invalid, "bad placeholder stem " + s.stem);
    if (!stems.insert(s.stem).second) throw Error(ErrorCode::config_invalid, "duplicate stem " + s.stem);
    if (!s.pattern && s.terms.empty())
      throw Error(ErrorCode::config_invalid, s.entity_type + " needs a pattern or a term list");
    d.detectors.push_back(std::move(s));
  }
  if (j.contains("removal_fields")) d.removal_fields = j.at("removal_fields").get<std::vector<std::string>>();
  for (const auto& f : d.removal_fields)
    if (f.rfind("customer_profile.", 0) != 0 && f.rfind("controls.", 0) != 0)
      throw Error(ErrorCode::config_invalid, "removal field must start with customer_profile. or controls.: " + f);
  Masker check(d);  // compiles the patterns
  return d;
}

Json to_json(const MaskingDictionary& d) {
  Json dets = Json::array();
  for (const auto& s : d.detectors) {
    Json o{{"entity_type", s.entity_type}, {"stem", s.stem}};
    if (s.pattern) o["pattern"] = *s.pattern;
    if (!s.terms.empty()) o["terms"] = s.terms;
    if (s.case_insensitive) o["case_insensitive"] = true;
    dets.push_back(std::move(o));
  }
  return {{"detectors", dets}, {"removal_fields", d.removal_fields}};
}

MaskingDictionary default_dictionary() {
  MaskingDictionary d;
  d.detectors = {
      {"email", "EMAIL", R"([A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)+)", {}, false},
      {"card_number", "CARD_NUMBER", R"(\b\d{4}([ -]?\d{4}){3}\b)", {}, false},
      {"iban", "IBAN", R"(\b[A-Z]{2}\d{2}( ?[A-Z0-9]{4}){3,7}( ?[A-Z0-9]{1,3})?\b)", {}, false},
      {"phone", "PHONE_NUMBER", R"(\+?\d[\d ()-]{7,}\d)", {}, false},
      {"name", "NAME", std::nullopt,
       {"Anna", "Boris", "Chloe", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Irina", "Jonas", "Katya", "Liam",
        "Maria", "Nikolai", "Olga", "Pavel"},
       false},
  };
  d.removal_fields = {"customer_profile.attachment", "customer_profile.passport_scan"};
  return d;
}

Json to_json(const MaskingLedger& l) {
  Json p = Json::object();
  for (const auto& [ph, e] : l.placeholders) p[ph] = {{"entity_type", e.entity_type}, {"occurrences", e.occurrences}};
  return {{"session_id", l.session_id}, {"placeholders", p}, {"removed_fields", l.removed_fields}};
}

Masker::Masker(const MaskingDictionary& dict) : removal_fields_(dict.removal_fields) {
  for (const auto& s : dict.detectors) {
    if (s.pattern) add_detector(s.entity_type, s.stem, regex_detector(*s.pattern, s.case_insensitive));
    if (!s.terms.empty()) add_detector(s.entity_type, s.stem, term_detector(s.terms, s.case_insensitive));
  }
}

void Masker::add_detector(std::string entity_type, std::string stem, std::shared_ptr<const EntityDetector> detector) {
  if (!valid_stem(stem)) throw Error(ErrorCode::config_invalid, "bad placeholder stem " + stem);
  for (const auto& e : entries_)
    if (e.stem == stem && e.entity_type != entity_type)
      throw Error(ErrorCode::config_invalid, "stem " + stem + " already used by " + e.entity_type);
  stems_.insert(stem);
  entries_.push_back({std::move(entity_type), std::move(stem), std::move(detector)});
}

std::vector<Detection> Masker::detect(std::string_view text) const {
  const auto holders = find_placeholders(text, stems_);

  std::vector<Detection> candidates;
  std::vector<Match> found;
  std::size_t seg_begin = 0;
  auto scan = [&](std::size_t b, std::size_t e) {
    if (b >= e) return;
    const std::string_view seg = text.substr(b, e - b);
    for (std::size_t d = 0; d < entries_.size(); ++d) {
      found.clear();
      entries_[d].detector->find(seg, found);
      for (const auto& m : found)
        if (m.begin < m.end && m.end <= seg.size()) candidates.push_back({{b + m.begin, b + m.end}, d});
    }
  };
  for (const auto& p : holders) {
    scan(seg_begin, p.span.begin);
    seg_begin = p.span.end;
  }
  scan(seg_begin, text.size());

  std::sort(candidates.begin(), candidates.end(), [](const Detection& a, const Detection& b) {
    const auto la = a.span.end - a.span.begin, lb = b.span.end - b.span.begin;
    if (la != lb) return la > lb;
    if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
    return a.detector < b.detector;
  });
  std::vector<Detection> chosen;
  for (const auto& c : candidates) {
    const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const Detection& o) {
      return c.span.begin < o.span.end && o.span.begin < c.span.end;
    });
    if (!overlaps) chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end(), [](const Detection& a, const Detection& b) { return a.span.begin < b.span.begin; });
  return chosen;
}

namespace {

template <typename F>
void for_each_text(SessionEvent& e, F&& f) {
  auto action = [&](ActionRecord& a) {
    if (a.payload && a.action_type != ActionType::open_procedure && a.action_type != ActionType::transfer_chat)
      f(*a.payload);
  };
  switch (e.kind) {
    case EventKind::customer_message:
    case EventKind::operator_message: f(std::get<ChatMessage>(e.body).text); break;
    case EventKind::ui_snapshot: {
      auto& s = std::get<UiSnapshot>(e.body);
      for (auto& c : s.controls) {
        f(c.label);
        if (c.value) f(*c.value);
        if (c.options)
          for (auto& o : *c.options) f(o);
      }
      for (auto& [k, v] : s.customer_profile) f(v);
      for (auto& a : s.global_announcements) f(a);
      break;
    }
    case EventKind::action_executed: action(std::get<ActionRecord>(e.body)); break;
    case EventKind::policy_proposal: action(std::get<PolicyProposal>(e.body).action); break;
    case EventKind::operator_feedback: {
      auto& fb = std::get<FeedbackRecord>(e.body);
      if (fb.corrective_action) action(*fb.corrective_action);
      break;
    }
    default: break;
  }
}

}  // namespace

std::vector<std::string> text_fields(const SessionEvent& event) {
  std::vector<std::string> out;
  SessionEvent copy = event;
  for_each_text(copy, [&](std::string& s) { out.push_back(s); });
  return out;
}

MaskResult Masker::mask_session(std::span<const SessionEvent> events) const {
  MaskResult out;
  out.events.assign(events.begin(), events.end());
  if (!events.empty()) out.ledger.session_id = events.front().session_id;

  std::map<std::string, std::string> type_of_stem;
  for (const auto& e : entries_) type_of_stem.emplace(e.stem, e.entity_type);

  // Continue numbering after placeholders that are already present.
  std::map<std::string, std::size_t> next;
  for (auto& e : out.events)
    for_each_text(e, [&](std::string& text) {
      for (const auto& p : find_placeholders(text, stems_)) next[p.stem] = std::max(next[p.stem], p.index + 1);
    });

  std::map<std::pair<std::string, std::string>, std::string> assigned;
  auto placeholder_for = [&](const std::string& stem, std::string surface) {
    auto key = std::pair{stem, std::move(surface)};
    auto it = assigned.find(key);
    if (it != assigned.end()) return it->second;
    const std::string ph = "<" + stem + "_" + suffix_for(next[stem]++) + ">";
    return assigned.emplace(std::move(key), ph).first->second;
  };

  auto mask_text = [&](std::string& text) {
    // Repeat until no detector fires outside placeholders; each pass strictly
    // shrinks the unmasked text, so this terminates.
    while (true) {
      const auto found = detect(text);
      if (found.empty()) return;
      std::string rebuilt;
      std::size_t at = 0;
      for (const auto& d : found) {
        rebuilt.append(text, at, d.span.begin - at);
        const auto& stem = entries_[d.detector].stem;
        const std::string ph = placeholder_for(stem, text.substr(d.span.begin, d.span.end - d.span.begin));
        auto& entry = out.ledger.placeholders[ph];
        entry.entity_type = type_of_stem.at(stem);
        ++entry.occurrences;
        rebuilt += ph;
        at = d.span.end;
      }
      rebuilt.append(text, at);
      text = std::move(rebuilt);
    }
  };

  for (auto& e : out.events) {
    if (e.kind == EventKind::ui_snapshot) {
      auto& s = std::get<UiSnapshot>(e.body);
      for (const auto& field : removal_fields_) {
        if (field.rfind("customer_profile.", 0) == 0) {
          out.ledger.removed_fields += s.customer_profile.erase(field.substr(17));
        } else if (field.rfind("controls.", 0) == 0) {
          const std::string id = field.substr(9);
          const auto before = s.controls.size();
          std::erase_if(s.controls, [&](const UiControl& c) { return c.control_id == id; });
          out.ledger.removed_fields += before - s.controls.size();
        }
      }
    }
    for_each_text(e, mask_text);
  }
  return out;
}

MaskResult mask_session(std::span<const SessionEvent> events, const MaskingDictionary& dict) {
  return Masker(dict).mask_session(events);
}

}  // namespace stepgate::anon
