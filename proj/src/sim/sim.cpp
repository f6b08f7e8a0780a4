#include "stepgate/sim/sim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <initializer_list>
#include <queue>
#include <set>
#include <stdexcept>
#include <tuple>

#include "stepgate/common/error.hpp"
#include "stepgate/common/hash.hpp"
#include "stepgate/common/rng.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/domain/state.hpp"

namespace stepgate::sim {
namespace {

constexpr const char* kNames[] = {"Anna", "Boris", "Chloe", "Dmitri", "Elena", "Farid", "Greta", "Hugo",
                                  "Irina", "Jonas", "Katya", "Liam", "Maria", "Nikolai", "Olga", "Pavel"};

constexpr const char* kQuestions[] = {
    "Could you confirm the last transaction on your account?",
    "Would you like me to reissue the document?",
    "Is the address in your profile still correct?",
};

constexpr const char* kStatements[] = {
    "Thank you, I am checking the details now.",
    "Your request has been registered.",
    "I have updated the settings for you.",
    "The refund will arrive within five working days.",
};

constexpr const char* kOpenings[] = {
    "Hello, this is {name}. I need help with my {topic}.",
    "Hi, {name} here, my number is {phone}. There is a problem with my {topic}.",
    "Good afternoon. Please write to {email} about my {topic}.",
};

// Replies per branch: 0 continues the script, 1 takes the alternative path.
constexpr const char* kReplies[2][2] = {
    {"Yes, that is correct.", "Yes, go ahead. You can call me at {phone}."},
    {"No, that is not right.", "No. My email is {email}, write to me there."},
};

constexpr const char* kQueues[] = {"billing_support", "tech_support"};
constexpr const char* kOptions[] = {"opt_a", "opt_b", "opt_c"};

std::mt19937_64 engine(std::uint64_t seed, std::initializer_list<std::string_view> labels, std::uint64_t index = 0) {
  Hasher h;
  for (auto l : labels) h.add(l);
  return keyed_engine(seed, h.add(index).digest());
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

double gamma_seconds(std::mt19937_64& rng, double mean_s, double shape) {
  std::gamma_distribution<double> g(shape, mean_s / shape);
  return g(rng);
}

TimestampMs to_ms(double seconds) { return std::max<TimestampMs>(1, static_cast<TimestampMs>(std::llround(seconds * 1000.0))); }

std::string replace_all(std::string s, std::string_view key, const std::string& value) {
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
    s.replace(pos, key.size(), value);
  return s;
}

struct Persona {
  std::string name;
  std::string phone;
  std::string email;
};

Persona persona_for(std::uint64_t seed, std::size_t customer) {
  auto rng = engine(seed, {"persona"}, customer);
  Persona p;
  p.name = kNames[pick(rng, std::size(kNames))];
  p.phone = "+7 9" + std::to_string(10 + pick(rng, 90)) + " " + std::to_string(100 + pick(rng, 900)) + " " +
            std::to_string(1000 + pick(rng, 9000));
  std::string lower = p.name;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  p.email = lower + std::to_string(pick(rng, 1000)) + "@example.com";
  return p;
}

std::string fill(std::string text, const Persona& p, const std::string& topic) {
  text = replace_all(std::move(text), "{name}", p.name);
  text = replace_all(std::move(text), "{phone}", p.phone);
  text = replace_all(std::move(text), "{email}", p.email);
  return replace_all(std::move(text), "{topic}", topic);
}

ControlKind kind_for(ActionType t) {
  switch (t) {
    case ActionType::open_procedure: return ControlKind::link;
    case ActionType::select_radio_button: return ControlKind::radio;
    case ActionType::select_element_in_combo_box: return ControlKind::combo_box;
    case ActionType::select_element_in_select: return ControlKind::select;
    case ActionType::fill_input: return ControlKind::input;
    default: return ControlKind::button;
  }
}

UiControl make_control(std::string id, ControlKind kind, std::string label) {
  UiControl c{std::move(id), kind, std::move(label), std::nullopt, std::nullopt};
  if (has_options(kind)) c.options = std::vector<std::string>(std::begin(kOptions), std::end(kOptions));
  if (kind == ControlKind::input) c.value = "";
  return c;
}

constexpr ControlKind kDistractorKinds[] = {ControlKind::button, ControlKind::input, ControlKind::radio,
                                            ControlKind::select, ControlKind::tab};

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::config_invalid, where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::config_invalid, where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::config_invalid, std::string(key) + ": " + e.what());
    }
  }
}

template <typename Enum>
Enum parse_or_throw(const std::string& name, const char* what) {
  auto v = parse_enum<Enum>(name);
  if (!v) throw Error(ErrorCode::config_invalid, std::string("unknown ") + what + " '" + name + "'");
  return *v;
}

// ---- runtime --------------------------------------------------------------

struct SliceRuntime {
  SliceConfig config;
  std::uint64_t seed = 0;
  std::vector<IssueScript> catalog;
  std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> screens;  // screen -> (script, step)
  std::shared_ptr<const ScriptedPolicy> scripted;
  std::map<double, std::shared_ptr<const NoisyPolicy>> policies;
  std::unique_ptr<Critic> critic;
  std::vector<SessionLog> window;
  std::size_t closed = 0;
  SliceOutcome outcome;

  const ScriptStep* step_at(const std::string& screen_id) const {
    auto it = screens.find(screen_id);
    if (it == screens.end()) return nullptr;
    return &catalog[it->second.first].steps[it->second.second];
  }

  bool correct(const SessionState& s, const ActionRecord& a) const {
    const auto* st = step_at(s.current_snapshot.screen_id);
    return st && st->gold && same_action(*st->gold, a);
  }

  const Policy& policy_for(double epsilon) {
    auto& p = policies[epsilon];
    if (!p) {
      NoiseConfig nc;
      nc.error_rate = epsilon;
      nc.seed = Hasher{}.add(seed).add(std::string_view("policy")).digest();
      p = std::make_shared<NoisyPolicy>(scripted, nc);
    }
    return *p;
  }
};

struct Task {
  TimestampMs start = 0;
  std::string root_id;
  int continuation = 0;
  std::size_t customer = 0;
  std::string customer_id;
  std::string slice_id;
  std::size_t script = 0;
  std::size_t step = 0;
  std::optional<std::string> opening;  // continuation: the late reply

  std::string session_id() const {
    return continuation == 0 ? root_id : root_id + "." + std::to_string(continuation);
  }

  bool operator>(const Task& o) const {
    return std::tie(start, root_id, continuation) > std::tie(o.start, o.root_id, o.continuation);
  }
};

constexpr std::size_t kMaxSessionEvents = 5000;

class SessionRun {
 public:
  SessionRun(const ScenarioConfig& cfg, SliceRuntime& rt, const Task& task, Stage stage, ThresholdPolicy thresholds,
             double epsilon, ScenarioResult& out, bool collect_shadow)
      : cfg_(cfg),
        rt_(rt),
        task_(task),
        stage_(stage),
        thresholds_(std::move(thresholds)),
        policy_(rt.policy_for(epsilon)),
        out_(out),
        collect_shadow_(collect_shadow),
        id_(task.session_id()),
        persona_(persona_for(cfg.seed, task.customer)),
        script_(rt.catalog[task.script]),
        cur_(task.step),
        now_(task.start) {}

  void run() {
    emit(EventKind::session_opened, SessionOpened{rt_.config.slice_id, task_.customer_id, stage_});
    const std::string topic = rt_.config.slice_id + " account";
    std::string text;
    if (task_.opening) {
      text = *task_.opening;
    } else {
      auto rng = draw("opening", 0);
      text = fill(kOpenings[pick(rng, std::size(kOpenings))], persona_, topic);
    }
    emit(EventKind::customer_message, message(text));
    show(cur_);
    while (!st_.closed) {
      if (log_.size() > kMaxSessionEvents) throw std::logic_error(id_ + ": session did not terminate");
      switch (st_.control_holder) {
        case ControlHolder::policy: policy_turn(); break;
        case ControlHolder::operator_: operator_turn(); break;
        case ControlHolder::awaiting_customer: customer_turn(); break;
      }
    }
  }

  SessionLog log_;
  std::optional<Task> continuation_;

 private:
  std::mt19937_64 draw(std::string_view label, std::int64_t index) const {
    return engine(cfg_.seed, {id_, label}, static_cast<std::uint64_t>(index));
  }

  ChatMessage message(std::string text) {
    return ChatMessage{Author::customer, std::move(text), now_, id_ + "-m" + std::to_string(messages_++)};
  }

  void emit(EventKind kind, EventBody body) {
    std::vector<SessionEvent> ev{SessionEvent{id_, st_.next_seq, now_, kind, std::move(body)}};
    apply(ev);
  }

  void apply(std::vector<SessionEvent> events) {
    commit(st_, events);
    for (auto& e : events) log_.push_back(std::move(e));
  }

  const ScriptStep& current() const { return script_.steps[cur_]; }

  void show(std::size_t step) {
    cur_ = step;
    UiSnapshot snap = script_.steps[step].screen;
    snap.customer_profile = {{"name", persona_.name}, {"phone", persona_.phone}};
    snap.snapshot_seq = snapshot_seq_++;
    emit(EventKind::ui_snapshot, std::move(snap));
  }

  // The desk reacts to an executed action: the gold action advances the
  // script, anything else re-renders the current screen.
  void world_react(const ActionRecord& a) {
    if (st_.closed) return;
    now_ += 1000;
    const auto& s = current();
    if (s.gold && same_action(*s.gold, a) && !s.next.empty()) {
      show(s.next.front());
    } else {
      show(cur_);
    }
  }

  void advance(TimestampMs ms) { now_ += ms; }

  void policy_turn() {
    advance(1000);
    const SessionState before = st_;
    const StageConfig& gate = rt_.config.gate;
    auto r = step(before, gate, thresholds_, policy_, *rt_.critic, now_);
    std::optional<PolicyProposal> proposal;
    for (const auto& e : r.events)
      if (e.kind == EventKind::policy_proposal) proposal = e.as<PolicyProposal>();
    if (proposal) {
      ProposalRecord rec;
      rec.session_id = id_;
      rec.slice_id = rt_.config.slice_id;
      rec.proposal_seq = before.next_seq;
      rec.action_type = proposal->action.action_type;
      rec.critical = classify_criticality(proposal->action, gate.criticality) != Criticality::non_critical;
      rec.correct = rt_.correct(before, proposal->action);
      rec.score = r.decision.score ? std::optional<double>(r.decision.score->value) : std::nullopt;
      rec.tau = thresholds_.tau_for(rec.action_type);
      rec.stage = before.stage;
      out_.proposals.push_back(rec);
      if (collect_shadow_ && rec.critical && before.stage == Stage::copilot && r.decision.score)
        out_.shadow.push_back(ShadowItem{before, *proposal, *r.decision.score, rec.correct});
    }
    apply(std::move(r.events));
    if (r.decision.action == GateAction::execute && proposal) world_react(proposal->action);
  }

  void operator_turn() {
    const auto& model = cfg_.operator_model;
    if (st_.pending_proposal && st_.pending_proposal->under_review) {
      const PendingProposal pending = *st_.pending_proposal;
      auto rng = draw("review", pending.proposal_seq);
      advance(to_ms(gamma_seconds(rng, model.review_latency_mean_s, model.latency_shape)));
      const bool correct = rt_.correct(st_, pending.action);
      const bool accept = uniform01(rng) < model.accept_probability(pending.action.action_type, correct);
      if (accept) {
        apply(resolve_review(st_, Verdict::accept, std::nullopt, rt_.config.gate, now_, pending.proposal_seq));
        world_react(pending.action);
      } else {
        const auto& gold = current().gold;
        if (!gold) throw std::logic_error(id_ + ": review on a wait screen");
        apply(resolve_review(st_, Verdict::reject, *gold, rt_.config.gate, now_, pending.proposal_seq));
        world_react(*gold);
      }
      return;
    }
    const auto& s = current();
    if (s.gold) {
      auto rng = draw("act", st_.next_seq);
      advance(to_ms(gamma_seconds(rng, model.action_latency_mean_s, model.latency_shape)));
      const ActionRecord gold = *s.gold;
      apply(operator_action(st_, gold, rt_.config.gate, now_));
      world_react(gold);
      if (!st_.closed && st_.stage != Stage::logging && st_.control_holder == ControlHolder::operator_) {
        advance(1000);
        apply(handback(st_, now_));
      }
      return;
    }
    // Holding control on a wait screen: the operator waits for the reply too.
    customer_turn();
  }

  void customer_turn() {
    const auto& s = current();
    if (s.next.empty()) throw std::logic_error(id_ + ": wait on a terminal step");
    const auto& cm = cfg_.customer_model;
    auto rng = draw("reply", waits_++);
    const TimestampMs T = cfg_.reply_timeout_ms;
    const TimestampMs since = now_;
    const double u = uniform01(rng);
    const std::size_t branch = s.next.size() > 1 ? pick(rng, s.next.size()) : 0;
    const std::string text =
        fill(kReplies[std::min<std::size_t>(branch, 1)][pick(rng, 2)], persona_, rt_.config.slice_id);
    auto close_by_timeout = [&](TimestampMs at) {
      now_ = at;
      if (st_.control_holder == ControlHolder::awaiting_customer) {
        apply(expire_if_idle(st_, T, now_));
      } else {
        emit(EventKind::session_closed, SessionClosed{ClosedBy::system, kReplyTimeoutReason});
      }
    };
    if (u < cm.silent_probability) {
      close_by_timeout(since + T + 1);
      return;
    }
    TimestampMs reply_at = since + to_ms(gamma_seconds(rng, cm.reply_mean_s, 2.0));
    if (u < cm.silent_probability + cm.late_probability) reply_at = since + T + to_ms(1.0 + 299.0 * uniform01(rng));
    if (reply_at - since > T) {
      close_by_timeout(st_.control_holder == ControlHolder::awaiting_customer ? reply_at : since + T + 1);
      Task next = task_;
      next.start = reply_at;
      next.continuation = task_.continuation + 1;
      next.step = s.next[branch];
      next.opening = text;
      continuation_ = std::move(next);
      return;
    }
    now_ = reply_at;
    auto r = customer_message(st_, message(text), T, now_);
    apply(std::move(r.events));
    show(s.next[branch]);
  }

  const ScenarioConfig& cfg_;
  SliceRuntime& rt_;
  const Task& task_;
  Stage stage_;
  ThresholdPolicy thresholds_;
  const Policy& policy_;
  ScenarioResult& out_;
  bool collect_shadow_;
  std::string id_;
  Persona persona_;
  const IssueScript& script_;
  std::size_t cur_;
  TimestampMs now_;
  SessionState st_;
  std::int64_t snapshot_seq_ = 0;
  int messages_ = 0;
  int waits_ = 0;
};

double epsilon_at(const ScenarioConfig& cfg, const SliceConfig& slice, TimestampMs start) {
  double eps = slice.epsilon;
  TimestampMs best = std::numeric_limits<TimestampMs>::min();
  for (const auto& d : cfg.drift)
    if (d.slice_id == slice.slice_id && d.at_ms <= start && d.at_ms >= best) {
      best = d.at_ms;
      eps = d.epsilon;
    }
  return eps;
}

class FixedPolicy final : public Policy {
 public:
  explicit FixedPolicy(const PolicyProposal& p) : p_(p) {}
  PolicyOutcome propose(const SessionState&) const override { return p_; }

 private:
  const PolicyProposal& p_;
};

class FixedCritic final : public Critic {
 public:
  explicit FixedCritic(CriticScore s) : s_(s) {}
  CriticScore score(const SessionState&, const PolicyProposal&) const override { return s_; }

 private:
  CriticScore s_;
};

}  // namespace

// ---- scripts ----------------------------------------------------------------

void validate(const IssueScript& script) {
  auto bad = [&](const std::string& why) { throw Error(ErrorCode::config_invalid, script.script_id + ": " + why); };
  if (script.steps.empty()) bad("no steps");
  const auto crit = CriticalityMap::defaults();
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    const auto& s = script.steps[i];
    for (auto n : s.next)
      if (n >= script.steps.size() || n <= i) bad("step " + std::to_string(i) + " continues out of order");
    if (s.next.empty()) {
      if (!s.gold || !crit.is_finalizing(s.gold->action_type)) bad("terminal step " + std::to_string(i) + " is not finalizing");
    } else if (s.gold && crit.is_finalizing(s.gold->action_type)) {
      bad("finalizing step " + std::to_string(i) + " has a continuation");
    }
    if (s.gold) {
      validate(*s.gold);
      if (s.gold->target_control_id && !s.screen.find(*s.gold->target_control_id))
        bad("step " + std::to_string(i) + " targets a control absent from its screen");
      if (s.next.size() > 1) bad("only wait steps branch");
    } else if (s.next.empty()) {
      bad("wait step " + std::to_string(i) + " has no continuation");
    }
  }
}

std::vector<IssueScript> make_catalog(const std::string& slice_id, const CatalogShape& shape) {
  if (shape.scripts < 1 || shape.min_steps < 2 || shape.max_steps < shape.min_steps)
    throw Error(ErrorCode::config_invalid, "catalog needs scripts >= 1 and 2 <= min_steps <= max_steps");
  static constexpr ActionType kMiddle[] = {
      ActionType::click_control,      ActionType::click_control,           ActionType::fill_input,
      ActionType::select_radio_button, ActionType::select_element_in_select, ActionType::select_element_in_combo_box,
      ActionType::send_text_to_chat,  ActionType::send_text_to_chat};
  std::vector<IssueScript> out;
  for (int k = 0; k < shape.scripts; ++k) {
    auto rng = engine(shape.seed, {"catalog", slice_id}, static_cast<std::uint64_t>(k));
    IssueScript script;
    script.slice_id = slice_id;
    script.script_id = slice_id + "-s" + std::to_string(k);
    const int len = shape.min_steps + static_cast<int>(pick(rng, static_cast<std::size_t>(shape.max_steps - shape.min_steps + 1)));

    // Step kinds first: nullopt marks a wait.
    std::vector<std::optional<ActionType>> kinds;
    std::vector<bool> question(static_cast<std::size_t>(len), false);
    kinds.push_back(ActionType::open_procedure);
    for (int i = 1; i < len - 1; ++i) {
      const auto prev = static_cast<std::size_t>(i - 1);
      if (kinds[prev] == ActionType::send_text_to_chat && question[prev] && uniform01(rng) < shape.wait_probability) {
        kinds.push_back(std::nullopt);
        continue;
      }
      const ActionType t = kMiddle[pick(rng, std::size(kMiddle))];
      kinds.push_back(t);
      if (t == ActionType::send_text_to_chat) question[static_cast<std::size_t>(i)] = uniform01(rng) < 0.5;
    }
    kinds.push_back(uniform01(rng) < shape.transfer_probability ? ActionType::transfer_chat : ActionType::close_chat);

    for (int i = 0; i < len; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      ScriptStep step;
      step.screen.screen_id = script.script_id + "/" + std::to_string(i);
      step.screen.active_scenario = script.script_id;
      const std::size_t distractors = 2 + pick(rng, 3);
      for (std::size_t d = 0; d < distractors; ++d) {
        const ControlKind kind = kDistractorKinds[pick(rng, std::size(kDistractorKinds))];
        step.screen.controls.push_back(
            make_control("ctl_" + std::to_string(d), kind, std::string(to_string(kind)) + " " + std::to_string(d)));
      }
      if (kinds[ui]) {
        ActionRecord gold;
        gold.action_type = *kinds[ui];
        gold.actor = Actor::policy;
        if (requires_target(gold.action_type)) {
          const ControlKind kind = kind_for(gold.action_type);
          UiControl c = make_control("gold_" + std::to_string(i), kind, "step " + std::to_string(i));
          const auto at = pick(rng, step.screen.controls.size() + 1);
          gold.target_control_id = c.control_id;
          step.screen.controls.insert(step.screen.controls.begin() + static_cast<std::ptrdiff_t>(at), std::move(c));
        }
        switch (gold.action_type) {
          case ActionType::open_procedure: gold.payload = script.script_id; break;
          case ActionType::fill_input: gold.payload = "ref-" + std::to_string(10 + pick(rng, 90)); break;
          case ActionType::select_radio_button:
          case ActionType::select_element_in_combo_box:
          case ActionType::select_element_in_select: gold.payload = kOptions[pick(rng, std::size(kOptions))]; break;
          case ActionType::send_text_to_chat:
            gold.payload = question[ui] ? kQuestions[pick(rng, std::size(kQuestions))]
                                        : kStatements[pick(rng, std::size(kStatements))];
            break;
          case ActionType::transfer_chat: gold.payload = kQueues[pick(rng, std::size(kQueues))]; break;
          default: break;
        }
        step.gold = gold;
      }
      if (i + 1 < len) {
        step.next.push_back(ui + 1);
        // A wait may skip the following step when the customer declines.
        if (!kinds[ui] && i + 2 < len) step.next.push_back(ui + 2);
      }
      script.steps.push_back(std::move(step));
    }
    validate(script);
    out.push_back(std::move(script));
  }
  return out;
}

std::shared_ptr<const ScriptedPolicy> scripted_policy(const std::vector<IssueScript>& catalog) {
  std::map<std::string, ScriptedStep> table;
  for (const auto& script : catalog)
    for (const auto& s : script.steps) {
      ScriptedStep st;
      if (s.gold) {
        st.kind = ScriptedStep::Kind::act;
        st.action = *s.gold;
      } else {
        st.kind = ScriptedStep::Kind::wait_for_customer;
      }
      table.emplace(s.screen.screen_id, st);
    }
  return std::make_shared<ScriptedPolicy>(std::move(table));
}

// ---- models -----------------------------------------------------------------

double OperatorModel::accept_probability(ActionType type, bool correct) const {
  if (!correct) return accept_wrong;
  auto it = accept_correct.find(type);
  return it == accept_correct.end() ? 1.0 : it->second;
}

OperatorModel OperatorModel::measured_defaults() {
  OperatorModel m;
  m.accept_correct = {{ActionType::click_control, 0.8673},
                      {ActionType::close_chat, 0.8481},
                      {ActionType::transfer_chat, 0.917},
                      {ActionType::send_text_to_chat, 0.5081}};
  return m;
}

OperatorModel OperatorModel::precise() { return OperatorModel{}; }

// ---- config -----------------------------------------------------------------

void validate(const ScenarioConfig& c) {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::config_invalid, why); };
  auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (c.customers == 0) bad("customers must be positive");
  if (c.sessions_per_customer < 1) bad("sessions_per_customer must be >= 1");
  if (c.slices.empty()) bad("at least one slice is required");
  if (c.reply_timeout_ms <= 0) bad("reply_timeout_ms must be positive");
  if (c.guardrail_every == 0) bad("guardrail_every must be positive");
  if (c.guardrails.window_sessions == 0) bad("guardrail window must be positive");
  if (!(c.arrival_gap_s >= 0.0)) bad("arrival_gap_s must be non-negative");
  if (c.customer_prefix.empty()) bad("customer_prefix must not be empty");
  std::set<std::string> ids;
  for (const auto& s : c.slices) {
    if (s.slice_id.empty() || !ids.insert(s.slice_id).second) bad("slice ids must be non-empty and unique");
    if (!unit(s.epsilon)) bad(s.slice_id + ": epsilon must lie in [0,1]");
    if (!(s.separation >= 0.0)) bad(s.slice_id + ": separation must be non-negative");
    if (!(s.weight > 0.0)) bad(s.slice_id + ": weight must be positive");
    if (s.catalog.scripts < 1 || s.catalog.min_steps < 2 || s.catalog.max_steps < s.catalog.min_steps)
      bad(s.slice_id + ": catalog needs scripts >= 1 and 2 <= min_steps <= max_steps");
    if (!unit(s.catalog.wait_probability) || !unit(s.catalog.transfer_probability))
      bad(s.slice_id + ": catalog probabilities must lie in [0,1]");
  }
  for (const auto& d : c.drift) {
    if (!ids.count(d.slice_id)) bad("drift names unknown slice '" + d.slice_id + "'");
    if (!unit(d.epsilon)) bad("drift epsilon must lie in [0,1]");
  }
  const auto& m = c.operator_model;
  for (const auto& [t, p] : m.accept_correct)
    if (!unit(p)) bad("accept probability for " + std::string(to_string(t)) + " must lie in [0,1]");
  if (!unit(m.accept_wrong)) bad("accept_wrong must lie in [0,1]");
  if (!(m.review_latency_mean_s > 0.0 && m.action_latency_mean_s > 0.0 && m.latency_shape > 0.0))
    bad("operator latencies must be positive");
  const auto& cm = c.customer_model;
  if (!(cm.reply_mean_s > 0.0)) bad("reply_mean_s must be positive");
  if (!unit(cm.silent_probability) || !unit(cm.late_probability) ||
      cm.silent_probability + cm.late_probability > 1.0)
    bad("customer probabilities must lie in [0,1] and sum to at most 1");
}

namespace {

double separation_from_json(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::config_invalid, "separation must be a number or \"inf\"");
  }
  if (!j.is_number()) throw Error(ErrorCode::config_invalid, "separation must be a number or \"inf\"");
  return j.get<double>();
}

SliceConfig slice_from_json(const Json& j) {
  check_keys(j,
             {"slice_id", "epsilon", "separation", "critic", "stage", "tau", "per_type_tau", "precision_target",
              "finalization_human_gated", "max_auto_steps", "loop_detection_k", "shadow_score_in_copilot", "critical",
              "catalog", "weight"},
             "slice");
  SliceConfig s;
  read(j, "slice_id", s.slice_id);
  read(j, "epsilon", s.epsilon);
  if (auto it = j.find("separation"); it != j.end()) s.separation = separation_from_json(*it);
  if (auto it = j.find("critic"); it != j.end()) {
    const auto name = it->get<std::string>();
    if (name == "stub") s.critic = CriticKind::stub;
    else if (name == "confidence") s.critic = CriticKind::confidence;
    else throw Error(ErrorCode::config_invalid, "unknown critic '" + name + "'");
  }
  if (auto it = j.find("stage"); it != j.end()) s.stage = parse_or_throw<Stage>(it->get<std::string>(), "stage");
  s.thresholds.slice_id = s.slice_id;
  read(j, "tau", s.thresholds.default_tau);
  read(j, "precision_target", s.thresholds.precision_target);
  if (auto it = j.find("per_type_tau"); it != j.end())
    for (const auto& [name, tau] : it->items())
      s.thresholds.per_type[parse_or_throw<ActionType>(name, "action type")] = tau.get<double>();
  read(j, "finalization_human_gated", s.gate.finalization_human_gated);
  read(j, "max_auto_steps", s.gate.max_auto_steps);
  read(j, "loop_detection_k", s.gate.loop_detection_k);
  read(j, "shadow_score_in_copilot", s.gate.shadow_score_in_copilot);
  if (auto it = j.find("critical"); it != j.end())
    for (const auto& name : *it) s.gate.criticality.set_critical(parse_or_throw<ActionType>(name.get<std::string>(), "action type"), true);
  if (auto it = j.find("catalog"); it != j.end()) {
    check_keys(*it, {"scripts", "min_steps", "max_steps", "wait_probability", "transfer_probability", "seed"},
               "catalog");
    read(*it, "seed", s.catalog.seed);
    read(*it, "scripts", s.catalog.scripts);
    read(*it, "min_steps", s.catalog.min_steps);
    read(*it, "max_steps", s.catalog.max_steps);
    read(*it, "wait_probability", s.catalog.wait_probability);
    read(*it, "transfer_probability", s.catalog.transfer_probability);
  }
  read(j, "weight", s.weight);
  return s;
}

Json slice_to_json(const SliceConfig& s) {
  Json j;
  j["slice_id"] = s.slice_id;
  j["epsilon"] = s.epsilon;
  if (std::isinf(s.separation)) j["separation"] = "inf";
  else j["separation"] = s.separation;
  j["critic"] = s.critic == CriticKind::stub ? "stub" : "confidence";
  j["stage"] = to_string(s.stage);
  j["tau"] = s.thresholds.default_tau;
  j["precision_target"] = s.thresholds.precision_target;
  Json per = Json::object();
  for (const auto& [t, tau] : s.thresholds.per_type) per[std::string(to_string(t))] = tau;
  j["per_type_tau"] = per;
  j["finalization_human_gated"] = s.gate.finalization_human_gated;
  j["max_auto_steps"] = s.gate.max_auto_steps;
  j["loop_detection_k"] = s.gate.loop_detection_k;
  j["shadow_score_in_copilot"] = s.gate.shadow_score_in_copilot;
  Json crit = Json::array();
  for (auto t : kAllActionTypes)
    if (s.gate.criticality.is_critical(t)) crit.push_back(to_string(t));
  j["critical"] = crit;
  j["catalog"] = {{"scripts", s.catalog.scripts},
                  {"min_steps", s.catalog.min_steps},
                  {"max_steps", s.catalog.max_steps},
                  {"wait_probability", s.catalog.wait_probability},
                  {"transfer_probability", s.catalog.transfer_probability},
                  {"seed", s.catalog.seed}};
  j["weight"] = s.weight;
  return j;
}

}  // namespace

ScenarioConfig scenario_from_json(const Json& j) {
  check_keys(j,
             {"seed", "customers", "sessions_per_customer", "slices", "operator", "customer", "reply_timeout_ms", "drift",
              "guardrails_enabled", "guardrails", "guardrail_every", "customer_prefix", "start_ms", "arrival_gap_s"},
             "scenario");
  ScenarioConfig c;
  read(j, "seed", c.seed);
  read(j, "customers", c.customers);
  read(j, "sessions_per_customer", c.sessions_per_customer);
  if (auto it = j.find("slices"); it != j.end())
    for (const auto& s : *it) c.slices.push_back(slice_from_json(s));
  if (auto it = j.find("operator"); it != j.end()) {
    check_keys(*it, {"accept_correct", "accept_wrong", "review_latency_mean_s", "action_latency_mean_s", "latency_shape"},
               "operator");
    if (auto a = it->find("accept_correct"); a != it->end()) {
      c.operator_model.accept_correct.clear();
      for (const auto& [name, p] : a->items())
        c.operator_model.accept_correct[parse_or_throw<ActionType>(name, "action type")] = p.get<double>();
    }
    read(*it, "accept_wrong", c.operator_model.accept_wrong);
    read(*it, "review_latency_mean_s", c.operator_model.review_latency_mean_s);
    read(*it, "action_latency_mean_s", c.operator_model.action_latency_mean_s);
    read(*it, "latency_shape", c.operator_model.latency_shape);
  }
  if (auto it = j.find("customer"); it != j.end()) {
    check_keys(*it, {"reply_mean_s", "silent_probability", "late_probability"}, "customer");
    read(*it, "reply_mean_s", c.customer_model.reply_mean_s);
    read(*it, "silent_probability", c.customer_model.silent_probability);
    read(*it, "late_probability", c.customer_model.late_probability);
  }
  read(j, "reply_timeout_ms", c.reply_timeout_ms);
  if (auto it = j.find("drift"); it != j.end())
    for (const auto& d : *it) {
      check_keys(d, {"slice_id", "at_ms", "epsilon"}, "drift");
      DriftEvent e;
      read(d, "slice_id", e.slice_id);
      read(d, "at_ms", e.at_ms);
      read(d, "epsilon", e.epsilon);
      c.drift.push_back(e);
    }
  read(j, "guardrails_enabled", c.guardrails_enabled);
  if (auto it = j.find("guardrails"); it != j.end()) {
    try {
      from_json(*it, c.guardrails);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::config_invalid, std::string("guardrails: ") + e.what());
    }
  }
  read(j, "guardrail_every", c.guardrail_every);
  read(j, "customer_prefix", c.customer_prefix);
  read(j, "start_ms", c.start_ms);
  read(j, "arrival_gap_s", c.arrival_gap_s);
  validate(c);
  return c;
}

Json to_json(const ScenarioConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["customers"] = c.customers;
  j["sessions_per_customer"] = c.sessions_per_customer;
  j["slices"] = Json::array();
  for (const auto& s : c.slices) j["slices"].push_back(slice_to_json(s));
  Json accept = Json::object();
  for (const auto& [t, p] : c.operator_model.accept_correct) accept[std::string(to_string(t))] = p;
  j["operator"] = {{"accept_correct", accept},
                   {"accept_wrong", c.operator_model.accept_wrong},
                   {"review_latency_mean_s", c.operator_model.review_latency_mean_s},
                   {"action_latency_mean_s", c.operator_model.action_latency_mean_s},
                   {"latency_shape", c.operator_model.latency_shape}};
  j["customer"] = {{"reply_mean_s", c.customer_model.reply_mean_s},
                   {"silent_probability", c.customer_model.silent_probability},
                   {"late_probability", c.customer_model.late_probability}};
  j["reply_timeout_ms"] = c.reply_timeout_ms;
  j["drift"] = Json::array();
  for (const auto& d : c.drift) j["drift"].push_back({{"slice_id", d.slice_id}, {"at_ms", d.at_ms}, {"epsilon", d.epsilon}});
  j["guardrails_enabled"] = c.guardrails_enabled;
  j["guardrails"] = c.guardrails;
  j["guardrail_every"] = c.guardrail_every;
  j["customer_prefix"] = c.customer_prefix;
  j["start_ms"] = c.start_ms;
  j["arrival_gap_s"] = c.arrival_gap_s;
  return j;
}

// ---- scenario ---------------------------------------------------------------

ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  validate(config);
  auto audit = std::make_shared<AuditLog>();
  SliceRegistry registry(config.guardrails, audit);
  std::map<std::string, SliceRuntime> runtimes;
  double total_weight = 0.0;
  for (const auto& sc : config.slices) {
    SliceRuntime& rt = runtimes[sc.slice_id];
    rt.config = sc;
    rt.config.thresholds.slice_id = sc.slice_id;
    rt.seed = Hasher{}.add(config.seed).add(std::string_view(sc.slice_id)).digest();
    rt.catalog = make_catalog(sc.slice_id, sc.catalog);
    for (std::size_t k = 0; k < rt.catalog.size(); ++k)
      for (std::size_t i = 0; i < rt.catalog[k].steps.size(); ++i)
        rt.screens.emplace(rt.catalog[k].steps[i].screen.screen_id, std::make_pair(k, i));
    rt.scripted = scripted_policy(rt.catalog);
    if (sc.critic == CriticKind::stub) {
      const SliceRuntime* self = &rt;
      rt.critic = std::make_unique<StubCritic>(
          StubCriticParams::from_separation(sc.separation), Hasher{}.add(rt.seed).add(std::string_view("critic")).digest(),
          [self](const SessionState& s, const ActionRecord& a) { return self->correct(s, a); });
    } else {
      rt.critic = std::make_unique<ConfidenceCritic>();
    }
    rt.outcome.final_record.slice_id = sc.slice_id;
    registry.add_slice(sc.slice_id, sc.stage, rt.config.thresholds);
    total_weight += sc.weight;
  }

  std::priority_queue<Task, std::vector<Task>, std::greater<>> queue;
  const auto per = static_cast<std::size_t>(config.sessions_per_customer);
  for (std::size_t c = 0; c < config.customers; ++c) {
    auto rng = engine(config.seed, {"customer"}, c);
    double u = uniform01(rng) * total_weight;
    const SliceConfig* slice = &config.slices.back();
    for (const auto& sc : config.slices) {
      if (u < sc.weight) {
        slice = &sc;
        break;
      }
      u -= sc.weight;
    }
    char digits[16];
    std::snprintf(digits, sizeof digits, "%06zu", c);
    const std::string customer_id = config.customer_prefix + digits;
    for (std::size_t k = 0; k < per; ++k) {
      Task t;
      t.start = config.start_ms + static_cast<TimestampMs>(std::llround((k * config.customers + c) * config.arrival_gap_s * 1000.0));
      t.root_id = customer_id + "-" + std::to_string(k);
      t.customer = c;
      t.customer_id = customer_id;
      t.slice_id = slice->slice_id;
      auto pick_rng = engine(config.seed, {"script", t.root_id});
      t.script = pick(pick_rng, runtimes.at(slice->slice_id).catalog.size());
      queue.push(std::move(t));
    }
  }

  ScenarioResult result;
  while (!queue.empty()) {
    Task task = queue.top();
    queue.pop();
    SliceRuntime& rt = runtimes.at(task.slice_id);
    const SliceRecord rec = registry.get(task.slice_id);
    SessionRun run(config, rt, task, rec.stage, rec.thresholds, epsilon_at(config, rt.config, task.start), result,
                   options.collect_shadow);
    run.run();
    const TimestampMs closed_at = run.log_.back().ts;
    if (run.continuation_) queue.push(*run.continuation_);

    registry.note_session_closed(task.slice_id);
    auto& out = rt.outcome;
    ++out.sessions;
    rt.window.push_back(run.log_);
    if (rt.window.size() > config.guardrails.window_sessions) rt.window.erase(rt.window.begin());
    if (config.guardrails_enabled && ++rt.closed % config.guardrail_every == 0) {
      const auto metrics = slice_window_metrics(task.slice_id, rt.window);
      const auto status = evaluate_guardrails(metrics, config.guardrails, closed_at);
      out.evaluations.push_back(status);
      if (auto tr = registry.apply_guardrails(status, closed_at)) {
        out.transitions.push_back(*tr);
        if (!out.first_trip_after) out.first_trip_after = out.sessions - 1;
      }
    }
    result.logs.push_back(std::move(run.log_));
  }
  for (auto& [id, rt] : runtimes) {
    rt.outcome.final_record = registry.get(id);
    result.slices.emplace(id, std::move(rt.outcome));
  }
  result.audit = audit->entries();
  return result;
}

Json metric_report(const ScenarioResult& result, TimestampMs reply_timeout_ms) {
  TimestampMs as_of = 0;
  for (const auto& log : result.logs)
    if (!log.empty()) as_of = std::max(as_of, log.back().ts);
  as_of += reply_timeout_ms + 1;
  Json j = metric_summary(result.logs, reply_timeout_ms, as_of);
  std::size_t critical = 0, executed = 0, correct = 0;
  for (const auto& p : result.proposals) {
    if (!p.critical) continue;
    ++critical;
    if (p.score && *p.score >= p.tau && p.stage != Stage::copilot) {
      ++executed;
      if (p.correct) ++correct;
    }
  }
  j["proposals"] = {{"total", result.proposals.size()},
                    {"critical", critical},
                    {"critical_above_tau", executed},
                    {"critical_above_tau_correct", correct}};
  Json slices = Json::object();
  for (const auto& [id, s] : result.slices) {
    Json sj;
    sj["record"] = s.final_record;
    sj["sessions"] = s.sessions;
    sj["evaluations"] = s.evaluations.size();
    sj["transitions"] = Json::array();
    for (const auto& t : s.transitions)
      sj["transitions"].push_back({{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"authority", t.authority}});
    if (s.first_trip_after) sj["first_trip_after"] = *s.first_trip_after;
    if (!s.evaluations.empty()) sj["last_status"] = s.evaluations.back();
    slices[id] = sj;
  }
  j["slices"] = slices;
  return j;
}

std::vector<CurvePoint> coverage_precision_curve(const std::vector<ShadowItem>& stream, const std::vector<double>& taus,
                                                 const StageConfig& gate) {
  StageConfig g = gate;
  g.finalization_human_gated = false;
  std::vector<CurvePoint> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    CurvePoint p;
    p.tau = tau;
    ThresholdPolicy tp;
    tp.default_tau = tau;
    for (const auto& item : stream) {
      SessionState s = item.state;
      s.stage = Stage::automation;
      FixedPolicy policy(item.proposal);
      FixedCritic critic(item.score);
      const auto r = step(s, g, tp, policy, critic, s.last_ts);
      ++p.proposed;
      if (r.decision.action == GateAction::execute) {
        ++p.executed;
        if (item.correct) ++p.correct_executed;
      }
    }
    p.coverage = p.proposed ? double(p.executed) / double(p.proposed) : 0.0;
    p.precision = p.executed ? double(p.correct_executed) / double(p.executed) : 0.0;
    out.push_back(p);
  }
  return out;
}

std::vector<ShadowItem> shadow_stream(ScenarioConfig config) {
  for (auto& s : config.slices) {
    s.stage = Stage::copilot;
    s.gate.shadow_score_in_copilot = true;
  }
  config.guardrails_enabled = false;
  return run_scenario(config, RunOptions{true}).shadow;
}

ExperimentResult run_ab(ScenarioConfig control, ScenarioConfig treatment, const AbOptions& options) {
  const auto c = run_scenario(control);
  const auto t = run_scenario(treatment);
  return ab_analyze(std::span<const SessionLog>(c.logs), std::span<const SessionLog>(t.logs), options);
}

SliceConfig slice_config_from_json(const Json& j) { return slice_from_json(j); }

SliceDecider make_slice_decider(const SliceConfig& slice, std::uint64_t seed) {
  auto catalog = std::make_shared<const std::vector<IssueScript>>(make_catalog(slice.slice_id, slice.catalog));
  auto gold = std::make_shared<std::map<std::string, ActionRecord, std::less<>>>();
  for (const auto& script : *catalog)
    for (const auto& st : script.steps)
      if (st.gold) gold->emplace(st.screen.screen_id, *st.gold);
  const auto slice_seed = Hasher{}.add(seed).add(std::string_view(slice.slice_id)).digest();
  NoiseConfig nc;
  nc.error_rate = slice.epsilon;
  nc.seed = Hasher{}.add(slice_seed).add(std::string_view("policy")).digest();
  SliceDecider d;
  d.catalog = catalog;
  d.policy = std::make_shared<NoisyPolicy>(scripted_policy(*catalog), nc);
  if (slice.critic == CriticKind::stub) {
    d.critic = std::make_shared<StubCritic>(
        StubCriticParams::from_separation(slice.separation), Hasher{}.add(slice_seed).add(std::string_view("critic")).digest(),
        [gold](const SessionState& s, const ActionRecord& a) {
          auto it = gold->find(s.current_snapshot.screen_id);
          return it != gold->end() && same_action(it->second, a);
        });
  } else {
    d.critic = std::make_shared<ConfidenceCritic>();
  }
  return d;
}

double analytic_automation_rate(double epsilon, int critical_steps) {
  return std::pow(1.0 - epsilon, critical_steps);
}

}  // namespace stepgate::sim
