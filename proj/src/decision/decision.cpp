#include "stepgate/decision/decision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "stepgate/common/error.hpp"
#include "stepgate/common/hash.hpp"
#include "stepgate/common/rng.hpp"
#include "stepgate/domain/state.hpp"

namespace stepgate {

PolicyOutcome ScriptedPolicy::propose(const SessionState& state) const {
  const auto* step = lookup(state.current_snapshot.screen_id);
  if (step == nullptr) return NoAction{"no scripted step for screen " + state.current_snapshot.screen_id};
  switch (step->kind) {
    case ScriptedStep::Kind::wait_for_customer: return WaitForCustomer{};
    case ScriptedStep::Kind::abstain: return NoAction{"scripted abstention"};
    case ScriptedStep::Kind::act: break;
  }
  ActionRecord a = step->action;
  a.actor = Actor::policy;
  return PolicyProposal{std::move(a), 1.0};
}

const ScriptedStep* ScriptedPolicy::lookup(const std::string& screen_id) const {
  auto it = steps_.find(screen_id);
  return it == steps_.end() ? nullptr : &it->second;
}

namespace {

constexpr std::array<const char*, 5> kDistractorTexts = {
    "Could you please clarify your request?",
    "Please wait a moment while I check.",
    "Is there anything else I can help you with?",
    "Thank you for contacting us, have a nice day.",
    "I have forwarded your request to the responsible team.",
};

std::string distractor_text(const std::optional<std::string>& avoid, std::mt19937_64& rng) {
  const auto start = static_cast<std::size_t>(rng() % kDistractorTexts.size());
  for (std::size_t i = 0; i < kDistractorTexts.size(); ++i) {
    std::string t = kDistractorTexts[(start + i) % kDistractorTexts.size()];
    if (!avoid || *avoid != t) return t;
  }
  return "Sorry, could you repeat that?";
}

// Builds an action appropriate for the control's kind.
ActionRecord action_on(const UiControl& c, std::mt19937_64& rng) {
  ActionRecord a;
  a.target_control_id = c.control_id;
  switch (c.kind) {
    case ControlKind::button:
    case ControlKind::link:
    case ControlKind::tab: a.action_type = ActionType::click_control; break;
    case ControlKind::input:
      a.action_type = ActionType::fill_input;
      a.payload = c.value ? *c.value + "0" : std::string("0");
      break;
    case ControlKind::radio:
    case ControlKind::combo_box:
    case ControlKind::select: {
      a.action_type = c.kind == ControlKind::radio       ? ActionType::select_radio_button
                      : c.kind == ControlKind::combo_box ? ActionType::select_element_in_combo_box
                                                         : ActionType::select_element_in_select;
      if (c.options && !c.options->empty())
        a.payload = (*c.options)[static_cast<std::size_t>(rng() % c.options->size())];
      else
        a.payload = "other";
      break;
    }
  }
  return a;
}

ActionRecord wrong_text(const ActionRecord& gold, std::mt19937_64& rng) {
  ActionRecord a;
  a.action_type = ActionType::send_text_to_chat;
  a.payload = distractor_text(gold.payload, rng);
  return a;
}

ActionRecord closing() {
  ActionRecord a;
  a.action_type = ActionType::close_chat;
  return a;
}

}  // namespace

ActionRecord default_perturbation(const ActionRecord& gold, const UiSnapshot& snapshot, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  ActionRecord out;
  switch (gold.action_type) {
    case ActionType::send_text_to_chat: {
      if (u < 0.15) {
        out = closing();
      } else if (u < 0.30 && !snapshot.controls.empty()) {
        out = action_on(snapshot.controls[static_cast<std::size_t>(rng() % snapshot.controls.size())], rng);
      } else {
        out = wrong_text(gold, rng);
      }
      break;
    }
    case ActionType::close_chat: {
      if (u < 0.3) {
        out.action_type = ActionType::transfer_chat;
        out.payload = "general_support";
      } else {
        out = wrong_text(gold, rng);
      }
      break;
    }
    case ActionType::transfer_chat: {
      if (u < 0.5) {
        out = closing();
      } else {
        out.action_type = ActionType::transfer_chat;
        out.payload = gold.payload == std::optional<std::string>("general_support") ? "billing_support"
                                                                                     : "general_support";
      }
      break;
    }
    default: {
      std::vector<const UiControl*> others;
      for (const auto& c : snapshot.controls)
        if (!gold.target_control_id || c.control_id != *gold.target_control_id) others.push_back(&c);
      if (u < 0.15) {
        out = closing();
      } else if (u < 0.25 || others.empty()) {
        out = wrong_text(gold, rng);
      } else {
        out = action_on(*others[static_cast<std::size_t>(rng() % others.size())], rng);
      }
      break;
    }
  }
  out.actor = Actor::policy;
  out.timestamp = gold.timestamp;
  if (same_action(out, gold)) out = wrong_text(gold, rng);
  out.actor = Actor::policy;
  return out;
}

NoisyPolicy::NoisyPolicy(std::shared_ptr<const Policy> inner, NoiseConfig config, Perturbation perturb)
    : inner_(std::move(inner)), config_(config), perturb_(std::move(perturb)) {
  if (!(config_.error_rate >= 0.0 && config_.error_rate <= 1.0))
    throw Error(ErrorCode::config_invalid, "error_rate must lie in [0,1]");
}

PolicyOutcome NoisyPolicy::propose(const SessionState& state) const {
  auto outcome = inner_->propose(state);
  auto* proposal = std::get_if<PolicyProposal>(&outcome);
  if (proposal == nullptr) return outcome;

  auto rng = keyed_engine(config_.seed, Hasher{}.add(state.session_id).add(state.next_seq).digest());
  const bool corrupt = uniform01(rng) < config_.error_rate;
  if (corrupt) {
    proposal->action = perturb_(proposal->action, state.current_snapshot, rng);
    proposal->action.actor = Actor::policy;
    proposal->confidence = beta_draw(rng, config_.wrong_a, config_.wrong_b);
  } else {
    proposal->confidence = beta_draw(rng, config_.correct_a, config_.correct_b);
  }
  return outcome;
}

CriticScore ConfidenceCritic::score(const SessionState&, const PolicyProposal& proposal) const {
  return CriticScore{std::clamp(proposal.confidence, 0.0, 1.0), ScoreSource::confidence_baseline};
}

StubCriticParams StubCriticParams::from_separation(double d) {
  StubCriticParams p;
  if (std::isinf(d)) {
    p.perfect = true;
    return p;
  }
  if (d < 0.0) throw Error(ErrorCode::config_invalid, "separation must be non-negative");
  p.correct_a = 1.0 + d;
  p.correct_b = 1.0;
  p.wrong_a = 1.0;
  p.wrong_b = 1.0 + d;
  return p;
}

StubCritic::StubCritic(StubCriticParams params, std::uint64_t seed, CorrectnessOracle oracle)
    : params_(params), seed_(seed), oracle_(std::move(oracle)) {}

CriticScore StubCritic::score(const SessionState& state, const PolicyProposal& proposal) const {
  const bool correct = oracle_(state, proposal.action);
  if (params_.perfect) return CriticScore{correct ? 1.0 : 0.0, ScoreSource::stub};
  auto rng = keyed_engine(seed_, hash_combine(state_hash(state), fingerprint(proposal.action)));
  const double v = correct ? beta_draw(rng, params_.correct_a, params_.correct_b)
                           : beta_draw(rng, params_.wrong_a, params_.wrong_b);
  return CriticScore{std::clamp(v, 0.0, 1.0), ScoreSource::stub};
}

PrfReport critic_prf(std::span<const PrfPoint> predictions) {
  if (predictions.empty()) throw Error(ErrorCode::empty_input, "critic_prf needs at least one prediction");
  PrfReport r;
  for (const auto& p : predictions) {
    const bool execute = p.score >= p.threshold;
    const bool good = p.label == Verdict::accept;
    if (execute && good) ++r.tp;
    else if (execute) ++r.fp;
    else if (good) ++r.fn;
    else ++r.tn;
  }
  auto ratio = [](std::size_t num, std::size_t den) { return den == 0 ? 0.0 : double(num) / double(den); };
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = (r.precision + r.recall) == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace stepgate
