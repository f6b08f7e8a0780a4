#pragma once

// Policy and critic abstractions plus the reference implementations used by
// the simulator and tests.

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>

#include "stepgate/domain/types.hpp"

namespace stepgate {

// Policy abstains; the controller turns this into a deferral.
struct NoAction {
  std::string reason;
};

// Policy has nothing to do until the customer writes back.
struct WaitForCustomer {};

using PolicyOutcome = std::variant<PolicyProposal, NoAction, WaitForCustomer>;

// Implementations must tolerate concurrent calls for different sessions.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyOutcome propose(const SessionState& state) const = 0;
};

class Critic {
 public:
  virtual ~Critic() = default;
  virtual CriticScore score(const SessionState& state, const PolicyProposal& proposal) const = 0;
};

// One scripted step: what the gold workflow does on a given screen.
struct ScriptedStep {
  enum class Kind { act, wait_for_customer, abstain };
  Kind kind = Kind::act;
  ActionRecord action;
};

// Table lookup keyed by screen_id. Unknown screens abstain.
class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::map<std::string, ScriptedStep> steps) : steps_(std::move(steps)) {}
  PolicyOutcome propose(const SessionState& state) const override;

  const ScriptedStep* lookup(const std::string& screen_id) const;

 private:
  std::map<std::string, ScriptedStep> steps_;
};

// Generates a wrong-but-legal alternative to `gold` on `snapshot`. The result
// must differ from gold (same_action false).
using Perturbation = std::function<ActionRecord(const ActionRecord& gold, const UiSnapshot& snapshot,
                                                std::mt19937_64& rng)>;

// Default perturbation: swaps targets/payloads/types within the action
// vocabulary, keeping targets inside the current snapshot.
ActionRecord default_perturbation(const ActionRecord& gold, const UiSnapshot& snapshot, std::mt19937_64& rng);

struct NoiseConfig {
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  // Policy confidence: correct ~ Beta(correct_a, correct_b), wrong ~ Beta(wrong_a, wrong_b).
  double correct_a = 4.0, correct_b = 1.5;
  double wrong_a = 1.5, wrong_b = 2.0;
};

// Replaces the wrapped policy's action with a perturbed one with probability
// error_rate. Draws are keyed on (seed, session, next_seq) so the wrapper is
// stateless and reproducible.
class NoisyPolicy final : public Policy {
 public:
  NoisyPolicy(std::shared_ptr<const Policy> inner, NoiseConfig config, Perturbation perturb = default_perturbation);
  PolicyOutcome propose(const SessionState& state) const override;

  const NoiseConfig& config() const noexcept { return config_; }

 private:
  std::shared_ptr<const Policy> inner_;
  NoiseConfig config_;
  Perturbation perturb_;
};

// Uses the policy's own confidence as the gate signal.
class ConfidenceCritic final : public Critic {
 public:
  CriticScore score(const SessionState& state, const PolicyProposal& proposal) const override;
};

// Ground truth supplied by the simulator: is this proposal the gold action?
using CorrectnessOracle = std::function<bool(const SessionState&, const ActionRecord&)>;

struct StubCriticParams {
  double correct_a = 1.0, correct_b = 1.0;
  double wrong_a = 1.0, wrong_b = 1.0;
  // Perfect separation: correct -> 1.0, wrong -> 0.0.
  bool perfect = false;

  // correct ~ Beta(1+d, 1), wrong ~ Beta(1, 1+d); d = +inf gives a perfect critic
  // and d = 0 an uninformative one.
  static StubCriticParams from_separation(double d);
};

// Test instrument: scores depend on the oracle's verdict and a draw keyed on
// (seed, state_hash, action fingerprint); there is no hidden state.
class StubCritic final : public Critic {
 public:
  StubCritic(StubCriticParams params, std::uint64_t seed, CorrectnessOracle oracle);
  CriticScore score(const SessionState& state, const PolicyProposal& proposal) const override;

  const StubCriticParams& params() const noexcept { return params_; }

 private:
  StubCriticParams params_;
  std::uint64_t seed_;
  CorrectnessOracle oracle_;
};

struct PrfPoint {
  double score = 0.0;
  double threshold = 0.0;
  Verdict label = Verdict::accept;
};

struct PrfReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Execute (score >= threshold) is the positive class; accept labels are the
// true positives. Ratios with an empty denominator are reported as 0.
PrfReport critic_prf(std::span<const PrfPoint> predictions);

}  // namespace stepgate
