#pragma once

// Synthetic support desk: issue scripts with gold workflows per slice, a
// customer model, an operator model, noisy scripted policies and stub critics,
// all driven through the gate controller in virtual time.

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stepgate/calib/guardrails.hpp"
#include "stepgate/calib/registry.hpp"
#include "stepgate/decision/decision.hpp"
#include "stepgate/gate/gate.hpp"
#include "stepgate/kernels/kernels.hpp"
#include "stepgate/metrics/metrics.hpp"

namespace stepgate::sim {

struct ScriptStep {
  UiSnapshot screen;                 // screen_id "<script_id>/<index>"
  std::optional<ActionRecord> gold;  // absent: wait for the customer
  std::vector<std::size_t> next;     // empty after a finalizing step; several at a branch
};

struct IssueScript {
  std::string script_id;
  std::string slice_id;
  std::vector<ScriptStep> steps;
};

// Throws Error(config_invalid) unless every terminal step is finalizing, every
// gold target exists on its screen and continuations are in range.
void validate(const IssueScript& script);

struct CatalogShape {
  int scripts = 4;
  int min_steps = 4;
  int max_steps = 8;
  // Chance that a question sent to the chat is followed by a wait step.
  double wait_probability = 0.5;
  double transfer_probability = 0.4;  // last step transfers instead of closing
  // The catalog is the slice's business rules: fixed by this seed, not by the
  // scenario seed, so reruns with another scenario seed see the same desk.
  std::uint64_t seed = 1;
};

// Deterministic catalog: step 0 opens the procedure, the last step finalizes.
std::vector<IssueScript> make_catalog(const std::string& slice_id, const CatalogShape& shape);

// Table policy over every screen of the catalog.
std::shared_ptr<const ScriptedPolicy> scripted_policy(const std::vector<IssueScript>& catalog);

struct OperatorModel {
  // Probability of accepting a correct proposal, per action type (missing
  // types accept with probability 1). Wrong proposals are accepted with
  // accept_wrong. A rejection is corrected with the gold action.
  std::map<ActionType, double> accept_correct;
  double accept_wrong = 0.0;
  double review_latency_mean_s = 20.0;
  double action_latency_mean_s = 12.0;
  double latency_shape = 2.0;  // gamma shape for both latencies

  double accept_probability(ActionType type, bool correct) const;

  // Measured production acceptance rates: click_control 0.8673,
  // close_chat 0.8481, transfer_chat 0.917, send_text_to_chat 0.5081.
  static OperatorModel measured_defaults();
  // Accepts exactly the correct proposals.
  static OperatorModel precise();
};

struct CustomerModel {
  double reply_mean_s = 45.0;
  double silent_probability = 0.03;  // never replies
  double late_probability = 0.02;    // replies after the timeout
};

enum class CriticKind { stub, confidence };

struct SliceConfig {
  std::string slice_id;
  double epsilon = 0.1;
  double separation = 3.0;  // stub critic d; infinity gives a perfect critic
  CriticKind critic = CriticKind::stub;
  Stage stage = Stage::copilot;
  ThresholdPolicy thresholds;
  StageConfig gate;
  CatalogShape catalog;
  double weight = 1.0;  // share of customers
};

struct DriftEvent {
  std::string slice_id;
  TimestampMs at_ms = 0;  // sessions starting at or after this time
  double epsilon = 0.0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::size_t customers = 1000;
  int sessions_per_customer = 1;
  std::vector<SliceConfig> slices;
  OperatorModel operator_model = OperatorModel::measured_defaults();
  CustomerModel customer_model;
  TimestampMs reply_timeout_ms = kDefaultReplyTimeoutMs;
  std::vector<DriftEvent> drift;
  bool guardrails_enabled = true;
  GuardrailConfig guardrails;
  std::size_t guardrail_every = 10;  // evaluate after every n closed sessions of a slice
  std::string customer_prefix = "cust-";
  TimestampMs start_ms = 1'700'000'000'000;
  double arrival_gap_s = 20.0;
};

// Throws Error(config_invalid).
void validate(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const Json& j);
Json to_json(const ScenarioConfig& config);

// Ground truth for one policy proposal.
struct ProposalRecord {
  std::string session_id;
  std::string slice_id;
  std::int64_t proposal_seq = 0;
  ActionType action_type = ActionType::click_control;
  bool critical = false;
  bool correct = false;
  std::optional<double> score;
  double tau = 0.0;
  Stage stage = Stage::copilot;
};

// A critical proposal with the state it was made in, for threshold replays.
struct ShadowItem {
  SessionState state;
  PolicyProposal proposal;
  CriticScore score;
  bool correct = false;
};

struct SliceOutcome {
  SliceRecord final_record;
  std::size_t sessions = 0;
  std::vector<GuardrailStatus> evaluations;
  std::vector<StageTransition> transitions;
  // Index (0-based, in slice order) of the session after which the first trip fired.
  std::optional<std::size_t> first_trip_after;
};

struct ScenarioResult {
  std::vector<SessionLog> logs;  // in processing order
  std::vector<ProposalRecord> proposals;
  std::vector<ShadowItem> shadow;  // filled when collect_shadow is set
  std::map<std::string, SliceOutcome> slices;
  std::vector<AuditEntry> audit;
};

struct RunOptions {
  bool collect_shadow = false;
};

ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

// Automation rate, AAT, acceptance per tool and per-slice status.
Json metric_report(const ScenarioResult& result, TimestampMs reply_timeout_ms);

struct CurvePoint {
  double tau = 0.0;
  std::size_t proposed = 0;
  std::size_t executed = 0;
  std::size_t correct_executed = 0;
  double coverage = 0.0;
  double precision = 0.0;
};

// Replays each frozen critical proposal through the real gate in automation
// stage at every tau (finalization ungated) and counts executions.
std::vector<CurvePoint> coverage_precision_curve(const std::vector<ShadowItem>& stream, const std::vector<double>& taus,
                                                 const StageConfig& gate = {});

// Runs the scenario with every slice in copilot, shadow scoring on, and
// returns the frozen stream of critical proposals.
std::vector<ShadowItem> shadow_stream(ScenarioConfig config);

// Both arms with disjoint customer prefixes, analysed at the customer level.
ExperimentResult run_ab(ScenarioConfig control, ScenarioConfig treatment, const AbOptions& options = {});

// Noisy scripted policy and critic over a slice's catalog, for hosting a
// simulated slice outside run_scenario (the service).
struct SliceDecider {
  std::shared_ptr<const std::vector<IssueScript>> catalog;
  std::shared_ptr<const Policy> policy;
  std::shared_ptr<const Critic> critic;
};

// One entry of a scenario's "slices" array. Throws ConfigInvalid.
SliceConfig slice_config_from_json(const Json& j);
SliceDecider make_slice_decider(const SliceConfig& slice, std::uint64_t seed);

// (1 - eps)^c: probability that a session with c critical steps (all steps
// critical, perfect critic, no waits) needs no deferral.
double analytic_automation_rate(double epsilon, int critical_steps);

}  // namespace stepgate::sim
