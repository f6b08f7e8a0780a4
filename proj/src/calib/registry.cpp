#include "stepgate/calib/registry.hpp"

#include "stepgate/common/error.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/gate/gate.hpp"

namespace stepgate {

void to_json(Json& j, const AuditEntry& v) {
  j = Json{{"ts", v.ts}, {"actor", v.actor}, {"action", v.action}, {"slice_id", v.slice_id},
           {"prior", v.prior}, {"next", v.next}};
}

void from_json(const Json& j, AuditEntry& v) {
  v.ts = j.at("ts").get<TimestampMs>();
  v.actor = j.at("actor").get<std::string>();
  v.action = j.at("action").get<std::string>();
  v.slice_id = j.at("slice_id").get<std::string>();
  v.prior = j.value("prior", Json());
  v.next = j.value("next", Json());
}

AuditLog::AuditLog(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  if (std::ifstream in(file); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        entries_.push_back(Json::parse(line).get<AuditEntry>());
      } catch (const std::exception&) {
        if (in.peek() != EOF) throw Error(ErrorCode::io_error, "corrupt audit log " + file.string());
      }
    }
  }
  out_.emplace(file, std::ios::app);
  if (!*out_) throw Error(ErrorCode::io_error, "cannot open audit log " + file.string());
}

void AuditLog::append(const AuditEntry& entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(entry);
  if (out_) {
    *out_ << Json(entry).dump() << '\n';
    out_->flush();
  }
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

void to_json(Json& j, const SliceRecord& v) {
  j = Json{{"slice_id", v.slice_id},
           {"stage", to_string(v.stage)},
           {"thresholds", v.thresholds},
           {"sessions_closed", v.sessions_closed},
           {"retrain_ticket_open", v.retrain_ticket_open}};
  j["last_trip"] = v.last_trip ? Json(*v.last_trip) : Json(nullptr);
  j["trip_mark"] = v.trip_mark ? Json(*v.trip_mark) : Json(nullptr);
}

SliceRecord slice_record_from_json(const Json& j) {
  SliceRecord r;
  r.slice_id = j.at("slice_id").get<std::string>();
  r.stage = enum_from_json<Stage>(j.at("stage"), "stage");
  r.thresholds = j.at("thresholds").get<ThresholdPolicy>();
  r.sessions_closed = j.value("sessions_closed", std::int64_t{0});
  r.retrain_ticket_open = j.value("retrain_ticket_open", false);
  if (auto it = j.find("trip_mark"); it != j.end() && !it->is_null()) r.trip_mark = it->get<std::int64_t>();
  return r;
}

SliceRegistry::SliceRegistry(GuardrailConfig guardrails, std::shared_ptr<AuditLog> audit)
    : guardrails_(std::move(guardrails)), audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()) {}

void SliceRegistry::restore(SliceRecord record) {
  std::lock_guard lock(mutex_);
  record.thresholds.slice_id = record.slice_id;
  slices_[record.slice_id] = std::move(record);
}

void SliceRegistry::add_slice(const std::string& slice_id, Stage stage, ThresholdPolicy thresholds) {
  std::lock_guard lock(mutex_);
  thresholds.slice_id = slice_id;
  SliceRecord r;
  r.slice_id = slice_id;
  r.stage = stage;
  r.thresholds = std::move(thresholds);
  slices_[slice_id] = std::move(r);
}

bool SliceRegistry::has_slice(const std::string& slice_id) const {
  std::lock_guard lock(mutex_);
  return slices_.count(slice_id) > 0;
}

SliceRecord& SliceRegistry::record(const std::string& slice_id) {
  auto it = slices_.find(slice_id);
  if (it == slices_.end()) throw Error(ErrorCode::not_found, "unknown slice " + slice_id);
  return it->second;
}

const SliceRecord& SliceRegistry::record(const std::string& slice_id) const {
  auto it = slices_.find(slice_id);
  if (it == slices_.end()) throw Error(ErrorCode::not_found, "unknown slice " + slice_id);
  return it->second;
}

SliceRecord SliceRegistry::get(const std::string& slice_id) const {
  std::lock_guard lock(mutex_);
  return record(slice_id);
}

std::vector<std::string> SliceRegistry::slices() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, r] : slices_) out.push_back(id);
  return out;
}

StageTransition SliceRegistry::set_stage_locked(SliceRecord& r, Stage to, const std::string& authority,
                                                TimestampMs now, std::optional<std::string> guardrail_id) {
  if (to == Stage::automation && r.trip_mark &&
      r.sessions_closed - *r.trip_mark < static_cast<std::int64_t>(guardrails_.window_sessions))
    throw Error(ErrorCode::illegal_transition,
                r.slice_id + ": automation stays disabled for one guardrail window after a trip");
  auto t = transition_stage(r.slice_id, r.stage, to, authority, std::move(guardrail_id));
  audit_->append({now, authority, "set_stage", r.slice_id, std::string(to_string(r.stage)), std::string(to_string(to))});
  r.stage = to;
  return t;
}

StageTransition SliceRegistry::set_stage(const std::string& slice_id, Stage to, const std::string& authority,
                                         TimestampMs now, std::optional<std::string> guardrail_id) {
  std::lock_guard lock(mutex_);
  return set_stage_locked(record(slice_id), to, authority, now, std::move(guardrail_id));
}

ThresholdPolicy SliceRegistry::set_threshold(const std::string& slice_id, ThresholdPolicy proposed,
                                             std::int64_t expected_version, const std::string& actor,
                                             TimestampMs now) {
  std::lock_guard lock(mutex_);
  auto& r = record(slice_id);
  if (r.thresholds.version != expected_version)
    throw Error(ErrorCode::version_conflict, slice_id + ": threshold version is " +
                                                 std::to_string(r.thresholds.version) + ", expected " +
                                                 std::to_string(expected_version));
  proposed.slice_id = slice_id;
  proposed.version = expected_version + 1;
  audit_->append({now, actor, "set_threshold", slice_id, r.thresholds, proposed});
  r.thresholds = proposed;
  return proposed;
}

std::optional<StageTransition> SliceRegistry::apply_guardrails(const GuardrailStatus& status, TimestampMs now) {
  std::lock_guard lock(mutex_);
  auto& r = record(status.slice_id);
  if (!status.tripped) return std::nullopt;
  r.last_trip = status;
  r.trip_mark = r.sessions_closed;
  if (!r.retrain_ticket_open) {
    r.retrain_ticket_open = true;
    audit_->append({now, "guardrail", "open_retrain_ticket", r.slice_id, nullptr, *status.tripped_rule});
  }
  if (r.stage != Stage::calibration && r.stage != Stage::automation) return std::nullopt;
  return set_stage_locked(r, Stage::copilot, "guardrail", now, status.tripped_rule);
}

void SliceRegistry::note_session_closed(const std::string& slice_id) {
  std::lock_guard lock(mutex_);
  ++record(slice_id).sessions_closed;
}

ThresholdPolicy SliceRegistry::recalibration_cycle(const std::string& slice_id, std::span<const ScoredVerdict> fresh,
                                                   std::size_t min_feedback, const std::string& dataset_id,
                                                   const std::string& actor, TimestampMs now) {
  std::lock_guard lock(mutex_);
  auto& r = record(slice_id);
  if (r.stage != Stage::copilot)
    throw Error(ErrorCode::illegal_transition, slice_id + ": recalibration runs from copilot only");
  if (fresh.size() < min_feedback)
    throw Error(ErrorCode::insufficient_feedback, slice_id + ": " + std::to_string(fresh.size()) +
                                                      " feedback items, need " + std::to_string(min_feedback));
  const auto cal = calibrate_offline(fresh, r.thresholds.precision_target);
  ThresholdPolicy next = r.thresholds;
  next.default_tau = cal.tau;
  next.per_type.clear();
  next.calibrated_on = dataset_id;
  next.version = r.thresholds.version + 1;
  audit_->append({now, actor, "recalibrate", slice_id, r.thresholds, next});
  r.thresholds = next;
  r.retrain_ticket_open = false;
  set_stage_locked(r, Stage::calibration, actor, now, std::nullopt);
  return next;
}

}  // namespace stepgate
