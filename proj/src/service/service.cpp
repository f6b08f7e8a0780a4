#include "stepgate/service/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "stepgate/common/error.hpp"
#include "stepgate/decision/external.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/sim/sim.hpp"

namespace stepgate::service {
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::config_invalid, what); }

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      bad("unknown key '" + k + "' in " + where);
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const Json::exception& e) {
      bad(std::string(key) + ": " + e.what());
    }
  }
}

template <typename Enum>
Enum parse_or_throw(const std::string& name, const char* what) {
  auto v = parse_enum<Enum>(name);
  if (!v) bad(std::string("unknown ") + what + " '" + name + "'");
  return *v;
}

Role role_from_string(const std::string& s) {
  if (s == "viewer") return Role::viewer;
  if (s == "operator") return Role::operator_;
  if (s == "desk") return Role::desk;
  if (s == "admin") return Role::admin;
  bad("unknown role '" + s + "'");
}

StageConfig gate_from_json(const Json& j) {
  check_keys(j, {"finalization_human_gated", "max_auto_steps", "loop_detection_k", "shadow_score_in_copilot", "critical"},
             "gate");
  StageConfig g;
  read(j, "finalization_human_gated", g.finalization_human_gated);
  read(j, "max_auto_steps", g.max_auto_steps);
  read(j, "loop_detection_k", g.loop_detection_k);
  read(j, "shadow_score_in_copilot", g.shadow_score_in_copilot);
  if (auto it = j.find("critical"); it != j.end())
    for (const auto& name : *it) g.criticality.set_critical(parse_or_throw<ActionType>(name.get<std::string>(), "action type"), true);
  if (g.max_auto_steps < 1 || g.loop_detection_k < 2) bad("gate needs max_auto_steps >= 1 and loop_detection_k >= 2");
  return g;
}

SliceSetup slice_setup_from_json(const Json& j) {
  check_keys(j, {"slice_id", "stage", "tau", "per_type_tau", "precision_target", "decider"}, "slice");
  SliceSetup s;
  read(j, "slice_id", s.slice_id);
  if (s.slice_id.empty()) bad("slice_id is required");
  if (auto it = j.find("stage"); it != j.end()) s.stage = parse_or_throw<Stage>(it->get<std::string>(), "stage");
  s.thresholds.slice_id = s.slice_id;
  read(j, "tau", s.thresholds.default_tau);
  read(j, "precision_target", s.thresholds.precision_target);
  if (auto it = j.find("per_type_tau"); it != j.end())
    for (const auto& [name, tau] : it->items())
      s.thresholds.per_type[parse_or_throw<ActionType>(name, "action type")] = tau.get<double>();
  read(j, "decider", s.decider);
  return s;
}

class AbstainPolicy final : public Policy {
 public:
  PolicyOutcome propose(const SessionState&) const override { return NoAction{"no decider configured"}; }
};

void write_file_atomic(const fs::path& path, const std::string& data) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
    out << data;
    if (!out.flush()) throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

TimestampMs wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

SessionEvent make_event(const SessionState& s, TimestampMs ts, EventKind kind, EventBody body) {
  return SessionEvent{s.session_id, s.next_seq, ts, kind, std::move(body)};
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::viewer: return "viewer";
    case Role::operator_: return "operator";
    case Role::desk: return "desk";
    case Role::admin: return "admin";
  }
  return "?";
}

bool role_allows(Role have, Role need) noexcept {
  return have == Role::admin || have == need || need == Role::viewer;
}

ServiceConfig service_config_from_json(const Json& j) {
  check_keys(j,
             {"data_dir", "host", "port", "tokens", "audit_floor", "reply_timeout_ms", "gate", "guardrails", "store",
              "feed_capacity", "slices"},
             "service config");
  ServiceConfig c;
  std::string dir = c.data_dir.string();
  read(j, "data_dir", dir);
  c.data_dir = dir;
  read(j, "host", c.host);
  read(j, "port", c.port);
  if (auto it = j.find("tokens"); it != j.end()) {
    if (!it->is_object()) bad("tokens must map token -> {name, role}");
    for (const auto& [token, p] : it->items()) {
      check_keys(p, {"name", "role"}, "token");
      if (token.empty()) bad("empty token");
      c.tokens[token] = Principal{p.value("name", std::string("anonymous")), role_from_string(p.at("role").get<std::string>())};
    }
  }
  read(j, "audit_floor", c.audit_floor);
  read(j, "reply_timeout_ms", c.reply_timeout_ms);
  if (auto it = j.find("gate"); it != j.end()) c.gate = gate_from_json(*it);
  if (auto it = j.find("guardrails"); it != j.end()) {
    try {
      c.guardrails = it->get<GuardrailConfig>();
    } catch (const Json::exception& e) {
      bad(std::string("guardrails: ") + e.what());
    }
  }
  if (auto it = j.find("store"); it != j.end()) {
    check_keys(*it, {"snapshot_every", "keep_snapshots"}, "store");
    read(*it, "snapshot_every", c.store.snapshot_every);
    read(*it, "keep_snapshots", c.store.keep_snapshots);
  }
  read(j, "feed_capacity", c.feed_capacity);
  std::set<std::string> ids;
  if (auto it = j.find("slices"); it != j.end())
    for (const auto& s : *it) {
      c.slices.push_back(slice_setup_from_json(s));
      if (!ids.insert(c.slices.back().slice_id).second) bad("duplicate slice '" + c.slices.back().slice_id + "'");
    }
  if (c.port < 0 || c.port > 65535) bad("port outside [0, 65535]");
  if (!(c.audit_floor >= 0.0 && c.audit_floor <= 1.0)) bad("audit_floor must lie in [0,1]");
  if (c.reply_timeout_ms <= 0) bad("reply_timeout_ms must be positive");
  if (c.feed_capacity == 0) bad("feed_capacity must be positive");
  return c;
}

ServiceConfig load_service_config(const std::optional<fs::path>& file) {
  std::optional<fs::path> path = file;
  if (!path)
    if (const char* env = std::getenv("STEPGATE_CONFIG"); env && *env) path = fs::path(env);
  ServiceConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::config_invalid, "cannot read config " + path->string());
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::exception& e) {
      bad(path->string() + ": " + e.what());
    }
    c = service_config_from_json(j);
  }
  if (const char* env = std::getenv("STEPGATE_PORT"); env && *env) {
    try {
      c.port = std::stoi(env);
    } catch (const std::exception&) {
      bad("STEPGATE_PORT is not a number");
    }
  }
  if (const char* env = std::getenv("STEPGATE_DATA_DIR"); env && *env) c.data_dir = env;
  return c;
}

void to_json(Json& j, const DeferredItem& v) {
  j = Json{{"session_id", v.session_id},
           {"slice_id", v.slice_id},
           {"finalization_review", v.finalization_review},
           {"held_since", v.held_since},
           {"age_ms", v.age_ms}};
  j["pending_proposal"] = v.pending ? Json(*v.pending) : Json(nullptr);
  j["score"] = v.pending && v.pending->score ? Json(v.pending->score->value) : Json(nullptr);
  j["reason"] = v.reason ? Json(to_string(*v.reason)) : Json(nullptr);
}

Decider make_decider(const std::string& slice_id, const Json& spec) {
  const auto kind = spec.value("kind", std::string("none"));
  if (kind == "none") {
    check_keys(spec, {"kind"}, "decider");
    return Decider{std::make_shared<AbstainPolicy>(), std::make_shared<ConfidenceCritic>()};
  }
  if (kind == "external") {
    check_keys(spec, {"kind", "command", "critic"}, "decider");
    const auto command = spec.value("command", std::string());
    if (command.empty()) bad(slice_id + ": external decider needs a command");
    auto client = std::make_shared<DecisionClient>(std::make_unique<SubprocessTransport>(command));
    Decider d{std::make_shared<ExternalPolicy>(client), std::make_shared<ExternalCritic>(client)};
    if (spec.value("critic", std::string("external")) == "confidence") d.critic = std::make_shared<ConfidenceCritic>();
    return d;
  }
  if (kind == "sim") {
    check_keys(spec, {"kind", "seed", "slice"}, "decider");
    Json slice = spec.value("slice", Json::object());
    slice["slice_id"] = slice_id;
    auto sc = sim::slice_config_from_json(slice);
    auto sd = sim::make_slice_decider(sc, spec.value("seed", std::uint64_t{1}));
    return Decider{sd.policy, sd.critic};
  }
  bad(slice_id + ": unknown decider kind '" + kind + "'");
}

Service::Service(ServiceConfig config, Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)), feed_(config_.feed_capacity) {
  if (!clock_) clock_ = wall_clock_ms;
  fs::create_directories(config_.data_dir);
  store_ = std::make_unique<EventStore>(config_.data_dir, config_.store);
  audit_ = std::make_shared<AuditLog>(config_.data_dir / "audit.jsonl");
  registry_ = std::make_unique<SliceRegistry>(config_.guardrails, audit_);
  abstain_ = Decider{std::make_shared<AbstainPolicy>(), std::make_shared<ConfidenceCritic>()};

  auto index = store_->index();
  if (const auto path = config_.data_dir / "registry.json"; fs::exists(path)) {
    // The closed count is rebuilt from the store; the file is only rewritten on admin changes and trips.
    std::map<std::string, std::int64_t> closed_count;
    for (const auto& x : index)
      if (x.closed) ++closed_count[x.slice_id];
    std::ifstream in(path);
    try {
      for (const auto& r : Json::parse(in)) {
        auto record = slice_record_from_json(r);
        record.sessions_closed = std::max(record.sessions_closed, closed_count[record.slice_id]);
        registry_->restore(std::move(record));
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::io_error, path.string() + ": " + e.what());
    }
  }
  for (const auto& s : config_.slices) {
    if (!registry_->has_slice(s.slice_id)) {
      ThresholdPolicy t = s.thresholds;
      t.slice_id = s.slice_id;
      registry_->add_slice(s.slice_id, s.stage, t);
    }
    deciders_[s.slice_id] = make_decider(s.slice_id, s.decider);
  }
  persist_registry();

  // Guardrail windows and the metrics history come back from the closed logs.
  std::vector<SessionIndex> closed;
  for (auto& x : index)
    if (x.closed) closed.push_back(x);
  std::sort(closed.begin(), closed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.last_ts, a.session_id) < std::tie(b.last_ts, b.session_id);
  });
  const std::size_t w = config_.guardrails.window_sessions;
  for (const auto& x : closed) {
    closed_.emplace_back(x.slice_id, x.session_id);
    auto& dq = windows_[x.slice_id];
    dq.push_back(store_->read(x.session_id));
    if (dq.size() > w) dq.pop_front();
  }

  store_->set_listener([this](const std::vector<SessionEvent>& events) { feed_.publish(events); });
}

Service::~Service() { feed_.close(); }

Principal Service::authorize(const std::optional<std::string>& bearer, Role need) const {
  if (config_.tokens.empty()) return Principal{"anonymous", Role::admin};
  if (!bearer) throw Error(ErrorCode::unauthorized, "missing bearer token");
  auto it = config_.tokens.find(*bearer);
  if (it == config_.tokens.end()) throw Error(ErrorCode::unauthorized, "unknown token");
  if (!role_allows(it->second.role, need))
    throw Error(ErrorCode::unauthorized, std::string("role ") + std::string(to_string(it->second.role)) + " cannot act as " +
                                             std::string(to_string(need)));
  return it->second;
}

void Service::set_decider(const std::string& slice_id, Decider decider) {
  std::lock_guard lock(deciders_mutex_);
  deciders_[slice_id] = std::move(decider);
}

const Decider& Service::decider_for(const std::string& slice_id) const {
  std::lock_guard lock(deciders_mutex_);
  auto it = deciders_.find(slice_id);
  return it == deciders_.end() ? abstain_ : it->second;
}

std::vector<SessionEvent> Service::policy_turn(const SessionState& state, TimestampMs now) const {
  if (state.closed || state.control_holder != ControlHolder::policy || state.current_snapshot.snapshot_seq < 0)
    return {};
  const auto record = registry_->get(state.slice_id);
  const Decider d = decider_for(state.slice_id);
  try {
    return step(state, config_.gate, record.thresholds, *d.policy, *d.critic, now).events;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::session_closed || e.code() == ErrorCode::not_policy_turn) return {};
    return {make_event(state, now, EventKind::deferral,
                       Deferral{DeferralReason::fallback_triggered, std::nullopt, std::string("decider failed: ") + e.what()})};
  } catch (const std::exception& e) {
    return {make_event(state, now, EventKind::deferral,
                       Deferral{DeferralReason::fallback_triggered, std::nullopt, std::string("decider failed: ") + e.what()})};
  }
}

SessionState Service::run(const std::string& session_id, const Step& fn) {
  auto events = store_->mutate(session_id, [&](const SessionState* s) -> std::vector<SessionEvent> {
    if (!s) throw Error(ErrorCode::not_found, "no session '" + session_id + "'");
    const TimestampMs now = std::max(clock_(), s->last_ts);
    bool then_policy = false;
    auto out = fn(*s, now, then_policy);
    if (then_policy) {
      SessionState next = *s;
      commit(next, out);
      auto more = policy_turn(next, now);
      out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    }
    return out;
  });
  after_append(events);
  return *store_->state(session_id);
}

void Service::after_append(const std::vector<SessionEvent>& events) {
  for (const auto& e : events)
    if (e.kind == EventKind::session_closed) {
      const auto ix = store_->index(e.session_id);
      if (ix) on_closed(ix->slice_id, e.session_id);
    }
}

void Service::on_closed(const std::string& slice_id, const std::string& session_id) {
  if (!registry_->has_slice(slice_id)) return;
  registry_->note_session_closed(slice_id);
  std::vector<std::vector<SessionEvent>> window;
  {
    std::lock_guard lock(windows_mutex_);
    closed_.emplace_back(slice_id, session_id);
    auto& dq = windows_[slice_id];
    dq.push_back(store_->read(session_id));
    if (dq.size() > config_.guardrails.window_sessions) dq.pop_front();
    window.assign(dq.begin(), dq.end());
  }
  const TimestampMs now = clock_();
  const auto status = evaluate_guardrails(slice_window_metrics(slice_id, window), config_.guardrails, now);
  if (!status.tripped) return;
  const auto transition = registry_->apply_guardrails(status, now);
  persist_registry();
  if (!transition) return;
  stamp(slice_id,
        [&](const SessionState&) -> std::optional<EventBody> {
          return GuardrailTrip{slice_id, *status.tripped_rule, status.value, status.bound};
        },
        EventKind::guardrail_trip);
  stamp(slice_id,
        [&](const SessionState& s) -> std::optional<EventBody> {
          if (s.stage == transition->to) return std::nullopt;
          StageTransition t = *transition;
          t.from = s.stage;
          return t;
        },
        EventKind::stage_transition);
}

void Service::stamp(const std::string& slice_id,
                    const std::function<std::optional<EventBody>(const SessionState&)>& body, EventKind kind) {
  for (const auto& ix : store_->index()) {
    if (ix.slice_id != slice_id || ix.closed) continue;
    store_->mutate(ix.session_id, [&](const SessionState* s) -> std::vector<SessionEvent> {
      if (!s || s->closed) return {};
      auto b = body(*s);
      if (!b) return {};
      return {make_event(*s, std::max(clock_(), s->last_ts), kind, std::move(*b))};
    });
  }
}

void Service::persist_registry() const {
  Json all = Json::array();
  for (const auto& id : registry_->slices()) all.push_back(registry_->get(id));
  std::lock_guard lock(registry_file_mutex_);
  write_file_atomic(config_.data_dir / "registry.json", all.dump(2));
}

SessionIndex Service::open_session(const std::string& session_id, const std::string& slice_id,
                                   const std::string& customer_id) {
  if (!registry_->has_slice(slice_id)) throw Error(ErrorCode::not_found, "no slice '" + slice_id + "'");
  const Stage stage = registry_->get(slice_id).stage;
  store_->mutate(session_id, [&](const SessionState* s) -> std::vector<SessionEvent> {
    if (s) throw Error(ErrorCode::illegal_transition, "session '" + session_id + "' already exists");
    SessionEvent e{session_id, 0, clock_(), EventKind::session_opened, SessionOpened{slice_id, customer_id, stage}};
    return {e};
  });
  return *store_->index(session_id);
}

bool Service::customer_message(const std::string& session_id, ChatMessage message) {
  bool opens_new = false;
  run(session_id, [&](const SessionState& s, TimestampMs now, bool& then_policy) {
    ChatMessage m = message;
    m.author = Author::customer;
    if (m.timestamp == 0) m.timestamp = now;
    if (m.message_id.empty()) m.message_id = session_id + "-m" + std::to_string(s.next_seq);
    then_policy = s.control_holder == ControlHolder::awaiting_customer;
    auto r = stepgate::customer_message(s, m, config_.reply_timeout_ms, now);
    opens_new = r.opens_new_session;
    if (opens_new) then_policy = false;
    return r.events;
  });
  return opens_new;
}

void Service::ui_snapshot(const std::string& session_id, UiSnapshot snapshot) {
  run(session_id, [&](const SessionState& s, TimestampMs now, bool& then_policy) -> std::vector<SessionEvent> {
    if (s.closed) throw Error(ErrorCode::session_closed, session_id + " is closed");
    UiSnapshot snap = snapshot;
    if (snap.snapshot_seq < 0) snap.snapshot_seq = std::max<std::int64_t>(0, s.current_snapshot.snapshot_seq + 1);
    then_policy = true;
    return {make_event(s, now, EventKind::ui_snapshot, std::move(snap))};
  });
}

std::size_t Service::sweep_timeouts() {
  std::size_t closed = 0;
  for (const auto& ix : store_->index()) {
    if (ix.closed || ix.holder != ControlHolder::awaiting_customer) continue;
    const auto st = run(ix.session_id, [&](const SessionState& s, TimestampMs now, bool&) {
      return expire_if_idle(s, config_.reply_timeout_ms, now);
    });
    if (st.closed) ++closed;
  }
  return closed;
}

std::vector<DeferredItem> Service::list_deferred(const std::optional<std::string>& slice_id) const {
  const TimestampMs now = clock_();
  std::vector<DeferredItem> out;
  for (const auto& ix : store_->index()) {
    if (ix.closed || ix.holder != ControlHolder::operator_ || ix.stage == Stage::logging) continue;
    if (slice_id && ix.slice_id != *slice_id) continue;
    const auto st = store_->state(ix.session_id);
    if (!st || st->closed || st->control_holder != ControlHolder::operator_) continue;
    DeferredItem d;
    d.session_id = ix.session_id;
    d.slice_id = ix.slice_id;
    if (st->pending_proposal && st->pending_proposal->under_review) {
      d.pending = st->pending_proposal;
      d.finalization_review = st->pending_proposal->review_reason == DeferralReason::finalization_gate;
    }
    d.reason = ix.last_deferral;
    d.held_since = ix.held_since;
    d.age_ms = std::max<TimestampMs>(0, now - ix.held_since);
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const DeferredItem& a, const DeferredItem& b) {
    return std::tie(b.age_ms, a.session_id) < std::tie(a.age_ms, b.session_id);
  });
  return out;
}

SessionState Service::decide(const std::string& session_id, Verdict verdict, const std::optional<ActionRecord>& corrective,
                             std::optional<std::int64_t> proposal_seq) {
  return run(session_id, [&](const SessionState& s, TimestampMs now, bool&) {
    std::optional<ActionRecord> fix = corrective;
    if (fix) {
      fix->actor = Actor::operator_;
      fix->timestamp = now;
    }
    return resolve_review(s, verdict, fix, config_.gate, now, proposal_seq);
  });
}

SessionState Service::operator_act(const std::string& session_id, const ActionRecord& action) {
  return run(session_id, [&](const SessionState& s, TimestampMs now, bool&) {
    ActionRecord a = action;
    a.actor = Actor::operator_;
    a.timestamp = now;
    return operator_action(s, a, config_.gate, now);
  });
}

SessionState Service::hand_back(const std::string& session_id) {
  return run(session_id, [&](const SessionState& s, TimestampMs now, bool& then_policy) {
    then_policy = true;
    return handback(s, now);
  });
}

SessionState Service::session(const std::string& session_id) const {
  auto st = store_->state(session_id);
  if (!st) throw Error(ErrorCode::not_found, "no session '" + session_id + "'");
  return *st;
}

StageTransition Service::set_stage(const std::string& slice_id, Stage to, const std::string& actor) {
  if (!registry_->has_slice(slice_id)) throw Error(ErrorCode::not_found, "no slice '" + slice_id + "'");
  const auto t = registry_->set_stage(slice_id, to, actor, clock_());
  persist_registry();
  stamp(slice_id,
        [&](const SessionState& s) -> std::optional<EventBody> {
          if (s.stage == to) return std::nullopt;
          StageTransition x = t;
          x.from = s.stage;
          return x;
        },
        EventKind::stage_transition);
  return t;
}

ThresholdPolicy Service::set_threshold(const std::string& slice_id, ThresholdPolicy proposed,
                                       std::int64_t expected_version, const std::string& actor, bool force) {
  if (!registry_->has_slice(slice_id)) throw Error(ErrorCode::not_found, "no slice '" + slice_id + "'");
  proposed.slice_id = slice_id;
  double lowest = proposed.default_tau;
  for (const auto& [t, tau] : proposed.per_type) lowest = std::min(lowest, tau);
  if (lowest < config_.audit_floor && !force)
    throw Error(ErrorCode::config_invalid, "threshold " + std::to_string(lowest) + " is below the audit floor " +
                                               std::to_string(config_.audit_floor) + "; resubmit with force");
  const auto next = registry_->set_threshold(slice_id, proposed, expected_version, actor, clock_());
  if (lowest < config_.audit_floor)
    audit_->append({clock_(), actor, "force_below_audit_floor", slice_id, config_.audit_floor, lowest});
  persist_registry();
  return next;
}

Json Service::guardrails(const std::string& slice_id) const {
  if (!registry_->has_slice(slice_id)) throw Error(ErrorCode::not_found, "no slice '" + slice_id + "'");
  std::vector<std::vector<SessionEvent>> window;
  {
    std::lock_guard lock(windows_mutex_);
    if (auto it = windows_.find(slice_id); it != windows_.end()) window.assign(it->second.begin(), it->second.end());
  }
  const auto status = evaluate_guardrails(slice_window_metrics(slice_id, window), config_.guardrails, clock_());
  const auto record = registry_->get(slice_id);
  Json j{{"slice_id", slice_id},
         {"window_sessions", config_.guardrails.window_sessions},
         {"bounds", config_.guardrails.bounds_for(slice_id)},
         {"current", status},
         {"stage", to_string(record.stage)},
         {"retrain_ticket_open", record.retrain_ticket_open}};
  j["last_trip"] = record.last_trip ? Json(*record.last_trip) : Json(nullptr);
  return j;
}

Json Service::metrics(const std::optional<std::string>& slice_id, std::size_t window) const {
  if (slice_id && !registry_->has_slice(*slice_id)) throw Error(ErrorCode::not_found, "no slice '" + *slice_id + "'");
  std::vector<std::string> ids;
  {
    std::lock_guard lock(windows_mutex_);
    for (auto it = closed_.rbegin(); it != closed_.rend() && ids.size() < window; ++it)
      if (!slice_id || it->first == *slice_id) ids.push_back(it->second);
  }
  std::reverse(ids.begin(), ids.end());
  std::vector<SessionLog> logs;
  logs.reserve(ids.size());
  for (const auto& id : ids) logs.push_back(store_->read(id));
  Json j = metric_summary(logs, config_.reply_timeout_ms, clock_());
  j["slice_id"] = slice_id ? Json(*slice_id) : Json(nullptr);
  j["window"] = window;
  return j;
}

std::vector<SliceRecord> Service::slices() const {
  std::vector<SliceRecord> out;
  for (const auto& id : registry_->slices()) out.push_back(registry_->get(id));
  return out;
}

std::vector<AuditEntry> Service::audit() const { return audit_->entries(); }

}  // namespace stepgate::service
