#include "stepgate/ingest/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>

#include "stepgate/domain/names.hpp"
#include "stepgate/domain/state.hpp"
#include "stepgate/ingest/markup.hpp"

namespace stepgate::ingest {

void to_json(Json& j, const RawLogLine& v) {
  j = Json{{"session_id", v.session_id}, {"seq", v.seq}, {"ts", v.ts}};
  if (v.type == RawType::snapshot) {
    j["type"] = "snapshot";
    j["markup"] = v.markup;
  } else {
    j["type"] = "event";
    j["kind"] = v.kind;
    j["attributes"] = v.attributes;
  }
}

void from_json(const Json& j, RawLogLine& v) {
  const std::string type = j.at("type").get<std::string>();
  v = RawLogLine{};
  v.session_id = j.at("session_id").get<std::string>();
  v.seq = j.at("seq").get<std::int64_t>();
  v.ts = j.value("ts", TimestampMs{0});
  if (type == "snapshot") {
    v.type = RawType::snapshot;
    v.markup = j.at("markup").get<std::string>();
  } else if (type == "event") {
    v.type = RawType::event;
    v.kind = j.at("kind").get<std::string>();
    if (j.contains("attributes")) v.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
  } else {
    throw Error(ErrorCode::malformed_event, "unknown raw line type " + type);
  }
  if (v.session_id.empty()) throw Error(ErrorCode::malformed_event, "raw line without session_id");
}

std::vector<RawLogLine> read_raw_log(std::istream& in) {
  std::vector<RawLogLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line).get<RawLogLine>());
    } catch (const Error& e) {
      throw Error(ErrorCode::malformed_event, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::malformed_event, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

const std::string* attr(const RawLogLine& l, const char* key) {
  auto it = l.attributes.find(key);
  return it == l.attributes.end() ? nullptr : &it->second;
}

std::string required_attr(const RawLogLine& l, const char* key) {
  if (auto* v = attr(l, key)) return *v;
  throw Error(ErrorCode::malformed_event, l.kind + " event requires attribute " + key);
}

// Raw event -> body. Returns nullopt for events that carry no state change.
std::optional<std::pair<EventKind, EventBody>> convert_event(const RawLogLine& l) {
  if (l.kind == "session_start") {
    SessionOpened o;
    o.slice_id = required_attr(l, "slice_id");
    o.customer_id = required_attr(l, "customer_id");
    if (auto* s = attr(l, "stage")) {
      auto stage = parse_enum<Stage>(*s);
      if (!stage) throw Error(ErrorCode::malformed_event, "unknown stage " + *s);
      o.stage = *stage;
    }
    return std::pair{EventKind::session_opened, EventBody{o}};
  }
  if (l.kind == "customer_message") {
    ChatMessage m{Author::customer, required_attr(l, "text"), l.ts, ""};
    auto* id = attr(l, "message_id");
    m.message_id = id ? *id : "m" + std::to_string(l.seq);
    return std::pair{EventKind::customer_message, EventBody{m}};
  }
  if (l.kind == "session_end") {
    SessionClosed c{ClosedBy::operator_, "finalized"};
    if (auto* by = attr(l, "by")) {
      auto parsed = parse_enum<ClosedBy>(*by);
      if (!parsed) throw Error(ErrorCode::malformed_event, "unknown closer " + *by);
      c.by = *parsed;
    }
    if (auto* r = attr(l, "reason")) c.reason = *r;
    return std::pair{EventKind::session_closed, EventBody{c}};
  }
  // The chat window always holds the latest 30 messages, so a scroll is a
  // reset to the state we already have.
  if (l.kind == "scroll") return std::nullopt;
  if (auto type = parse_enum<ActionType>(l.kind)) {
    ActionRecord a;
    a.action_type = *type;
    a.actor = Actor::operator_;
    a.timestamp = l.ts;
    if (auto* t = attr(l, "control_id")) a.target_control_id = *t;
    if (auto* t = attr(l, *type == ActionType::send_text_to_chat ? "text" : "value")) a.payload = *t;
    validate(a);
    return std::pair{EventKind::action_executed, EventBody{a}};
  }
  throw Error(ErrorCode::malformed_event, "unknown raw event kind " + l.kind);
}

ParsedSession convert_session(const std::string& id, std::vector<const RawLogLine*> lines, bool strict) {
  std::stable_sort(lines.begin(), lines.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
  ParsedSession out;
  out.session_id = id;
  SessionState state;

  auto issue = [&](ErrorCode code, std::int64_t seq, const std::string& detail, const std::string& tag = "") {
    out.issues.push_back({code, seq, detail, tag});
  };
  auto push = [&](EventKind kind, EventBody body, TimestampMs ts) {
    SessionEvent e{id, state.next_seq, ts, kind, std::move(body)};
    apply_event(state, e);
    out.events.push_back(std::move(e));
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const RawLogLine& l = *lines[i];
    if (i > 0 && l.seq == lines[i - 1]->seq) {
      if (strict) throw Error(ErrorCode::duplicate_seq, id + ": seq " + std::to_string(l.seq) + " repeated");
      issue(ErrorCode::duplicate_seq, l.seq, "seq repeated");
      continue;
    }
    out.raw_seqs.push_back(l.seq);
    try {
      std::optional<std::pair<EventKind, EventBody>> converted;
      if (l.type == RawType::snapshot) {
        auto parsed = parse_markup(l.markup);
        parsed.snapshot.snapshot_seq = l.seq;
        converted = std::pair{EventKind::ui_snapshot, EventBody{std::move(parsed.snapshot)}};
      } else {
        converted = convert_event(l);
      }
      if (!converted) continue;
      if (state.next_seq == 0 && converted->first != EventKind::session_opened)
        push(EventKind::session_opened, SessionOpened{"default", "unknown", Stage::logging}, l.ts);
      if (state.closed) throw Error(ErrorCode::session_closed, "line after session_end");
      // Apply on a copy so a rejected line leaves the projection untouched.
      SessionState probe = state;
      SessionEvent e{id, state.next_seq, l.ts, converted->first, std::move(converted->second)};
      apply_event(probe, e);
      state = std::move(probe);
      out.events.push_back(std::move(e));
    } catch (const MarkupError& e) {
      if (strict) throw;
      issue(e.code(), l.seq, e.what(), e.tag());
    } catch (const Error& e) {
      if (strict) throw Error(e.code(), id + " seq " + std::to_string(l.seq) + ": " + e.what());
      issue(e.code(), l.seq, e.what());
    }
  }
  return out;
}

std::vector<ParsedSession> convert_all(std::span<const RawLogLine> lines, bool strict) {
  std::map<std::string, std::vector<const RawLogLine*>> grouped;
  for (const auto& l : lines) grouped[l.session_id].push_back(&l);
  std::vector<ParsedSession> out;
  out.reserve(grouped.size());
  for (auto& [id, group] : grouped) out.push_back(convert_session(id, std::move(group), strict));
  return out;
}

}  // namespace

std::vector<ParsedSession> parse_sessions(std::span<const RawLogLine> lines) { return convert_all(lines, false); }

std::vector<SessionEvent> parse_raw_log(std::span<const RawLogLine> lines) {
  std::vector<SessionEvent> out;
  for (auto& s : convert_all(lines, true))
    for (auto& e : s.events) out.push_back(std::move(e));
  return out;
}

SessionState build_state(std::span<const SessionEvent> events, std::int64_t upto) {
  SessionState s;
  for (const auto& e : events) {
    if (e.event_seq > upto) break;
    apply_event(s, e);
  }
  return s;
}

namespace {

constexpr std::pair<TurnKind, std::string_view> kTurnKinds[] = {{TurnKind::customer_message, "customer_message"},
                                                                {TurnKind::operator_action, "operator_action"},
                                                                {TurnKind::ui_snapshot, "ui_snapshot"}};

std::string_view turn_name(TurnKind k) {
  for (auto [kind, name] : kTurnKinds)
    if (kind == k) return name;
  return "?";
}

std::optional<DialogTurn> as_turn(const SessionEvent& e) {
  switch (e.kind) {
    case EventKind::customer_message: return DialogTurn{TurnKind::customer_message, e.event_seq, e.as<ChatMessage>()};
    case EventKind::action_executed: return DialogTurn{TurnKind::operator_action, e.event_seq, e.as<ActionRecord>()};
    case EventKind::ui_snapshot: return DialogTurn{TurnKind::ui_snapshot, e.event_seq, e.as<UiSnapshot>()};
    default: return std::nullopt;
  }
}

}  // namespace

void to_json(Json& j, const DialogTurn& v) {
  j = Json{{"kind", turn_name(v.kind)}, {"event_seq", v.event_seq}};
  switch (v.kind) {
    case TurnKind::customer_message: j["message"] = std::get<ChatMessage>(v.body); break;
    case TurnKind::operator_action: j["action"] = std::get<ActionRecord>(v.body); break;
    case TurnKind::ui_snapshot: j["snapshot"] = std::get<UiSnapshot>(v.body); break;
  }
}

void from_json(const Json& j, DialogTurn& v) {
  const std::string kind = j.at("kind").get<std::string>();
  v.event_seq = j.at("event_seq").get<std::int64_t>();
  if (kind == "customer_message") {
    v.kind = TurnKind::customer_message;
    v.body = j.at("message").get<ChatMessage>();
  } else if (kind == "operator_action") {
    v.kind = TurnKind::operator_action;
    v.body = j.at("action").get<ActionRecord>();
  } else if (kind == "ui_snapshot") {
    v.kind = TurnKind::ui_snapshot;
    v.body = j.at("snapshot").get<UiSnapshot>();
  } else {
    throw Error(ErrorCode::malformed_event, "unknown turn kind " + kind);
  }
}

void to_json(Json& j, const DialogSample& v) {
  j = Json{{"sample_id", v.sample_id},
           {"session_id", v.session_id},
           {"provenance", to_string(v.provenance)},
           {"turns", v.turns},
           {"target", v.target},
           {"truncated", v.truncated}};
}

void from_json(const Json& j, DialogSample& v) {
  v.sample_id = j.at("sample_id").get<std::string>();
  v.session_id = j.at("session_id").get<std::string>();
  auto p = parse_enum<Provenance>(j.value("provenance", std::string("predefined")));
  if (!p) throw Error(ErrorCode::malformed_event, "unknown provenance");
  v.provenance = *p;
  v.turns = j.at("turns").get<std::vector<DialogTurn>>();
  v.target = j.at("target").get<ActionRecord>();
  v.truncated = j.value("truncated", std::size_t{0});
}

std::string sample_id(const std::string& session_id, std::int64_t event_seq) {
  return session_id + "#" + std::to_string(event_seq);
}

std::vector<DialogTurn> context_before(std::span<const SessionEvent> events, std::int64_t before,
                                       const DialogOptions& options, std::size_t* dropped) {
  std::deque<DialogTurn> turns;
  std::size_t cut = 0;
  for (const auto& e : events) {
    if (e.event_seq >= before) break;
    if (auto t = as_turn(e)) {
      turns.push_back(std::move(*t));
      if (turns.size() > options.max_turns) {
        turns.pop_front();
        ++cut;
      }
    }
  }
  if (dropped) *dropped = cut;
  return {turns.begin(), turns.end()};
}

DialogBuild build_dialog_samples(std::span<const SessionEvent> events, const DialogOptions& options) {
  if (options.max_turns == 0) throw Error(ErrorCode::config_invalid, "max_turns must be positive");
  DialogBuild out;
  std::deque<DialogTurn> turns;
  std::size_t cut = 0;
  for (const auto& e : events) {
    if (e.kind == EventKind::action_executed && e.as<ActionRecord>().actor == Actor::operator_) {
      DialogSample s;
      s.session_id = e.session_id;
      s.sample_id = sample_id(e.session_id, e.event_seq);
      s.turns.assign(turns.begin(), turns.end());
      s.target = e.as<ActionRecord>();
      s.truncated = cut;
      if (cut) out.truncations.push_back({s.sample_id, cut});
      out.samples.push_back(std::move(s));
    }
    if (auto t = as_turn(e)) {
      turns.push_back(std::move(*t));
      if (turns.size() > options.max_turns) {
        turns.pop_front();
        ++cut;
      }
    }
  }
  if (out.samples.empty())
    throw Error(ErrorCode::no_actions, (events.empty() ? std::string("empty session") : events[0].session_id) +
                                           " has no operator actions");
  return out;
}

std::vector<std::string> known_rules() {
  return {kRuleNoUnknownElement, kRuleNoMalformedMarkup, kRuleActionTargetExists, kRuleSeqDense,
          kRuleEventsWellFormed};
}

namespace {

bool has_issue(const ParsedSession& s, std::initializer_list<ErrorCode> codes) {
  for (const auto& i : s.issues)
    for (auto c : codes)
      if (i.code == c) return true;
  return false;
}

bool targets_control(ActionType t) { return requires_target(t) && t != ActionType::open_procedure; }

}  // namespace

bool session_passes(const std::string& rule, const ParsedSession& s) {
  if (rule == kRuleNoUnknownElement) return !has_issue(s, {ErrorCode::unknown_element});
  if (rule == kRuleNoMalformedMarkup) return !has_issue(s, {ErrorCode::malformed_markup});
  if (rule == kRuleActionTargetExists) {
    const UiSnapshot* last = nullptr;
    for (const auto& e : s.events) {
      if (e.kind == EventKind::ui_snapshot) last = &e.as<UiSnapshot>();
      if (e.kind != EventKind::action_executed) continue;
      const auto& a = e.as<ActionRecord>();
      if (!targets_control(a.action_type)) continue;
      if (!last || !last->find(*a.target_control_id)) return false;
    }
    return true;
  }
  if (rule == kRuleSeqDense) {
    if (has_issue(s, {ErrorCode::duplicate_seq})) return false;
    for (std::size_t i = 1; i < s.raw_seqs.size(); ++i)
      if (s.raw_seqs[i] != s.raw_seqs[i - 1] + 1) return false;
    return true;
  }
  if (rule == kRuleEventsWellFormed)
    return !has_issue(s, {ErrorCode::malformed_event, ErrorCode::malformed_action, ErrorCode::out_of_order_event,
                          ErrorCode::session_closed, ErrorCode::not_operator_turn});
  throw Error(ErrorCode::config_invalid, "unknown validation rule " + rule);
}

double ValidationConfig::threshold_for(const std::string& rule) const {
  auto it = thresholds.find(rule);
  return it == thresholds.end() ? default_threshold : it->second;
}

ValidationReport validate_daily(std::span<const ParsedSession> sessions, const ValidationConfig& config,
                                const std::string& date) {
  const auto known = known_rules();
  for (const auto& r : config.rules)
    if (std::find(known.begin(), known.end(), r) == known.end())
      throw Error(ErrorCode::config_invalid, "unknown validation rule " + r);

  ValidationReport report;
  report.date = date;
  std::size_t failed_any = 0;
  for (const auto& rule : config.rules) report.rules[rule].sessions_checked = sessions.size();
  for (const auto& s : sessions) {
    bool failed = false;
    for (const auto& rule : config.rules) {
      if (!session_passes(rule, s)) {
        ++report.rules[rule].sessions_failed;
        failed = true;
      }
    }
    failed_any += failed;
  }
  for (const auto& rule : config.rules) {
    auto& st = report.rules[rule];
    st.failure_rate = sessions.empty() ? 0.0 : double(st.sessions_failed) / double(st.sessions_checked);
    if (st.failure_rate > config.threshold_for(rule)) report.alerts.push_back(rule);
  }
  report.overall_failure_rate = sessions.empty() ? 0.0 : double(failed_any) / double(sessions.size());
  return report;
}

Json to_json(const ValidationReport& r) {
  Json rules = Json::object();
  for (const auto& [id, st] : r.rules)
    rules[id] = {{"sessions_checked", st.sessions_checked},
                 {"sessions_failed", st.sessions_failed},
                 {"failure_rate", st.failure_rate}};
  return {{"date", r.date}, {"rules", rules}, {"overall_failure_rate", r.overall_failure_rate}, {"alerts", r.alerts}};
}

ValidationConfig validation_config_from_json(const Json& j) {
  ValidationConfig c;
  if (j.contains("rules")) c.rules = j.at("rules").get<std::vector<std::string>>();
  c.default_threshold = j.value("default_threshold", c.default_threshold);
  if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
  for (const auto& [rule, t] : c.thresholds)
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::config_invalid, "threshold for " + rule + " outside [0,1]");
  return c;
}

std::string utc_date(TimestampMs ts) {
  using namespace std::chrono;
  const auto day = floor<days>(sys_time<milliseconds>(milliseconds(ts)));
  const year_month_day ymd(day);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

}  // namespace stepgate::ingest
