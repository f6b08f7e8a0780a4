#pragma once

// Per-slice deployment state: stage, versioned thresholds, guardrail trips and
// the retrain/recalibrate/redeploy bookkeeping. One writer per slice at a
// time; threshold updates are compare-and-set on the version.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepgate/calib/calibrate.hpp"
#include "stepgate/calib/guardrails.hpp"
#include "stepgate/domain/threshold.hpp"

namespace stepgate {

struct AuditEntry {
  TimestampMs ts = 0;
  std::string actor;
  std::string action;
  std::string slice_id;
  Json prior;
  Json next;
};

void to_json(Json& j, const AuditEntry& v);
void from_json(const Json& j, AuditEntry& v);

// Append-only JSONL audit trail; in memory, optionally mirrored to a file.
class AuditLog {
 public:
  AuditLog() = default;
  // Loads the existing entries of `file` (a torn last line is ignored) and appends to it.
  explicit AuditLog(const std::filesystem::path& file);

  void append(const AuditEntry& entry);
  std::vector<AuditEntry> entries() const;

 private:
  mutable std::mutex mutex_;
  std::vector<AuditEntry> entries_;
  std::optional<std::ofstream> out_;
};

struct SliceRecord {
  std::string slice_id;
  Stage stage = Stage::logging;
  ThresholdPolicy thresholds;
  std::optional<GuardrailStatus> last_trip;
  std::int64_t sessions_closed = 0;
  // sessions_closed at the most recent trip; automation stays off for one window after it.
  std::optional<std::int64_t> trip_mark;
  bool retrain_ticket_open = false;

  bool operator==(const SliceRecord&) const = default;
};

void to_json(Json& j, const SliceRecord& v);
// last_trip is not restored (GuardrailStatus is report-only).
SliceRecord slice_record_from_json(const Json& j);

class SliceRegistry {
 public:
  SliceRegistry(GuardrailConfig guardrails, std::shared_ptr<AuditLog> audit);

  void add_slice(const std::string& slice_id, Stage stage, ThresholdPolicy thresholds);
  // Reinstates a persisted record as is (service restart).
  void restore(SliceRecord record);
  bool has_slice(const std::string& slice_id) const;
  SliceRecord get(const std::string& slice_id) const;
  std::vector<std::string> slices() const;
  const GuardrailConfig& guardrails() const noexcept { return guardrails_; }

  // Throws IllegalTransition, including promotion to automation within one
  // guardrail window of a trip.
  StageTransition set_stage(const std::string& slice_id, Stage to, const std::string& authority, TimestampMs now,
                            std::optional<std::string> guardrail_id = std::nullopt);

  // Compare-and-set: throws VersionConflict unless expected_version matches.
  // The stored policy gets version expected_version + 1.
  ThresholdPolicy set_threshold(const std::string& slice_id, ThresholdPolicy proposed, std::int64_t expected_version,
                                const std::string& actor, TimestampMs now);

  // Records a guardrail evaluation. A trip in calibration or automation falls
  // the slice back to copilot and opens a retrain ticket; the transition is
  // returned so the caller can stamp it on live sessions.
  std::optional<StageTransition> apply_guardrails(const GuardrailStatus& status, TimestampMs now);

  void note_session_closed(const std::string& slice_id);

  // Fresh copilot feedback -> calibrate_offline -> new version -> calibration.
  // Throws IllegalTransition unless the slice is in copilot and
  // InsufficientFeedback below min_feedback items.
  ThresholdPolicy recalibration_cycle(const std::string& slice_id, std::span<const ScoredVerdict> fresh,
                                      std::size_t min_feedback, const std::string& dataset_id,
                                      const std::string& actor, TimestampMs now);

 private:
  SliceRecord& record(const std::string& slice_id);
  const SliceRecord& record(const std::string& slice_id) const;
  StageTransition set_stage_locked(SliceRecord& r, Stage to, const std::string& authority, TimestampMs now,
                                   std::optional<std::string> guardrail_id);

  GuardrailConfig guardrails_;
  std::shared_ptr<AuditLog> audit_;
  mutable std::mutex mutex_;
  std::map<std::string, SliceRecord> slices_;
};

}  // namespace stepgate
