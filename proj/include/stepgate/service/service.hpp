#pragma once

// Hosts live sessions on top of the event store: world inputs (session open,
// customer messages, UI snapshots), policy turns through the gate, operator
// decisions, per-slice administration and guardrail evaluation. Transport
// agnostic; the HTTP layer is a thin mapping onto these calls.

#include <filesystem>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "stepgate/calib/registry.hpp"
#include "stepgate/decision/decision.hpp"
#include "stepgate/gate/gate.hpp"
#include "stepgate/metrics/metrics.hpp"
#include "stepgate/service/store.hpp"

namespace stepgate::service {

enum class Role { viewer, operator_, desk, admin };

std::string_view to_string(Role r);

// viewer: reads; operator: reads + decisions; desk: reads + world inputs;
// admin: everything.
bool role_allows(Role have, Role need) noexcept;

struct Principal {
  std::string name;
  Role role = Role::viewer;
};

struct SliceSetup {
  std::string slice_id;
  Stage stage = Stage::copilot;
  ThresholdPolicy thresholds;
  // {"kind": "none"} abstains on every turn, {"kind": "external", "command": "..."}
  // talks the decision protocol, {"kind": "sim", ...} hosts a simulated slice.
  Json decider = Json{{"kind", "none"}};
};

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::map<std::string, Principal> tokens;  // bearer token -> principal
  double audit_floor = 0.5;                 // thresholds below need force=true
  TimestampMs reply_timeout_ms = kDefaultReplyTimeoutMs;
  StageConfig gate;
  GuardrailConfig guardrails;
  StoreOptions store;
  std::size_t feed_capacity = 10000;
  std::vector<SliceSetup> slices;
};

// Throws ConfigInvalid.
ServiceConfig service_config_from_json(const Json& j);

// Reads the JSON config file (explicit path, else $STEPGATE_CONFIG, else
// defaults) and applies $STEPGATE_PORT and $STEPGATE_DATA_DIR on top.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file);

struct DeferredItem {
  std::string session_id;
  std::string slice_id;
  std::optional<PendingProposal> pending;
  std::optional<DeferralReason> reason;
  bool finalization_review = false;
  TimestampMs held_since = 0;
  TimestampMs age_ms = 0;
};

void to_json(Json& j, const DeferredItem& v);

struct Decider {
  std::shared_ptr<const Policy> policy;
  std::shared_ptr<const Critic> critic;
};

class Service {
 public:
  using Clock = std::function<TimestampMs()>;

  explicit Service(ServiceConfig config, Clock clock = {});
  ~Service();

  const ServiceConfig& config() const noexcept { return config_; }
  EventStore& store() noexcept { return *store_; }
  UpdateFeed& feed() noexcept { return feed_; }
  SliceRegistry& registry() noexcept { return *registry_; }

  // Throws Unauthorized for a missing/unknown token or an insufficient role.
  Principal authorize(const std::optional<std::string>& bearer, Role need) const;

  void set_decider(const std::string& slice_id, Decider decider);

  // ---- world inputs (desk role) ----
  SessionIndex open_session(const std::string& session_id, const std::string& slice_id,
                            const std::string& customer_id);
  // Returns true when the message arrived after the reply timeout: the
  // session is closed and the caller should open a new one.
  bool customer_message(const std::string& session_id, ChatMessage message);
  void ui_snapshot(const std::string& session_id, UiSnapshot snapshot);
  // Closes sessions idle past the reply timeout; returns how many.
  std::size_t sweep_timeouts();

  // ---- operator ----
  std::vector<DeferredItem> list_deferred(const std::optional<std::string>& slice_id = std::nullopt) const;
  // verdict accept | reject ("override"); reject needs the corrective action.
  SessionState decide(const std::string& session_id, Verdict verdict, const std::optional<ActionRecord>& corrective,
                      std::optional<std::int64_t> proposal_seq);
  SessionState operator_act(const std::string& session_id, const ActionRecord& action);
  SessionState hand_back(const std::string& session_id);

  SessionState session(const std::string& session_id) const;  // throws NotFound

  // ---- admin ----
  StageTransition set_stage(const std::string& slice_id, Stage to, const std::string& actor);
  ThresholdPolicy set_threshold(const std::string& slice_id, ThresholdPolicy proposed, std::int64_t expected_version,
                                const std::string& actor, bool force);
  Json guardrails(const std::string& slice_id) const;
  // Report over the last `window` closed sessions (of one slice or all).
  Json metrics(const std::optional<std::string>& slice_id, std::size_t window) const;
  std::vector<SliceRecord> slices() const;
  std::vector<AuditEntry> audit() const;

 private:
  std::vector<SessionEvent> policy_turn(const SessionState& state, TimestampMs now) const;
  // Serialized mutation of one session. `fn` returns the events to append and
  // sets `then_policy` when a policy turn should follow them.
  using Step = std::function<std::vector<SessionEvent>(const SessionState&, TimestampMs, bool& then_policy)>;
  SessionState run(const std::string& session_id, const Step& fn);
  void after_append(const std::vector<SessionEvent>& events);
  void on_closed(const std::string& slice_id, const std::string& session_id);
  void stamp(const std::string& slice_id, const std::function<std::optional<EventBody>(const SessionState&)>& body,
             EventKind kind);
  void persist_registry() const;
  const Decider& decider_for(const std::string& slice_id) const;

  ServiceConfig config_;
  Clock clock_;
  std::unique_ptr<EventStore> store_;
  UpdateFeed feed_;
  std::shared_ptr<AuditLog> audit_;
  std::unique_ptr<SliceRegistry> registry_;
  mutable std::mutex deciders_mutex_;
  std::map<std::string, Decider> deciders_;
  Decider abstain_;
  mutable std::mutex windows_mutex_;
  std::vector<std::pair<std::string, std::string>> closed_;  // (slice, session) in close order
  std::map<std::string, std::deque<std::vector<SessionEvent>>> windows_;  // last W closed logs per slice
  mutable std::mutex registry_file_mutex_;
};

// Builds the decider named by a SliceSetup's `decider` object.
Decider make_decider(const std::string& slice_id, const Json& spec);

}  // namespace stepgate::service
