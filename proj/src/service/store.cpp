#include "stepgate/service/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stepgate/common/error.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/domain/state.hpp"

namespace stepgate::service {
namespace fs = std::filesystem;

namespace {

void write_all(const fs::path& path, const std::string& data, int flags) {
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw Error(ErrorCode::io_error, "open " + path.string() + ": " + std::strerror(errno));
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      throw Error(ErrorCode::io_error, "write " + path.string() + ": " + why);
    }
    off += static_cast<std::size_t>(n);
  }
  ::close(fd);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void to_json(Json& j, const SessionIndex& v) {
  j = Json{{"session_id", v.session_id}, {"slice_id", v.slice_id},   {"customer_id", v.customer_id},
           {"stage", to_string(v.stage)}, {"holder", to_string(v.holder)}, {"closed", v.closed},
           {"next_seq", v.next_seq},     {"opened_at", v.opened_at}, {"last_ts", v.last_ts},
           {"held_since", v.held_since}};
  j["last_deferral"] = v.last_deferral ? Json(to_string(*v.last_deferral)) : Json(nullptr);
}

void from_json(const Json& j, SessionIndex& v) {
  v.session_id = j.at("session_id").get<std::string>();
  v.slice_id = j.at("slice_id").get<std::string>();
  v.customer_id = j.at("customer_id").get<std::string>();
  v.stage = enum_from_json<Stage>(j.at("stage"), "stage");
  v.holder = enum_from_json<ControlHolder>(j.at("holder"), "holder");
  v.closed = j.at("closed").get<bool>();
  v.next_seq = j.at("next_seq").get<std::int64_t>();
  v.opened_at = j.at("opened_at").get<TimestampMs>();
  v.last_ts = j.at("last_ts").get<TimestampMs>();
  v.held_since = j.at("held_since").get<TimestampMs>();
  v.last_deferral.reset();
  if (const auto& d = j.at("last_deferral"); !d.is_null()) {
    auto r = parse_enum<DeferralReason>(d.get<std::string>());
    if (!r) throw Error(ErrorCode::malformed_event, "unknown deferral reason");
    v.last_deferral = *r;
  }
}

void note_event(SessionIndex& x, const SessionEvent& e) {
  switch (e.kind) {
    case EventKind::session_opened: {
      const auto& o = e.as<SessionOpened>();
      x.session_id = e.session_id;
      x.slice_id = o.slice_id;
      x.customer_id = o.customer_id;
      x.stage = o.stage;
      x.opened_at = e.ts;
      x.holder = o.stage == Stage::logging ? ControlHolder::operator_ : ControlHolder::policy;
      if (o.stage == Stage::logging) x.held_since = e.ts;
      break;
    }
    case EventKind::deferral:
      x.holder = ControlHolder::operator_;
      x.held_since = e.ts;
      x.last_deferral = e.as<Deferral>().reason;
      break;
    case EventKind::stage_transition: x.stage = e.as<StageTransition>().to; break;
    case EventKind::session_closed: x.closed = true; break;
    default: break;
  }
  x.next_seq = e.event_seq + 1;
  x.last_ts = e.ts;
}

bool valid_session_id(std::string_view id) noexcept {
  if (id.empty() || id.size() > 200 || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

EventStore::EventStore(fs::path dir, StoreOptions options) : dir_(std::move(dir)), options_(options) {
  if (options_.snapshot_every == 0 || options_.keep_snapshots == 0)
    throw Error(ErrorCode::config_invalid, "snapshot_every and keep_snapshots must be positive");
  fs::create_directories(dir_ / "sessions");
  fs::create_directories(dir_ / "snapshots");
  std::vector<std::string> ids;
  for (const auto& f : fs::directory_iterator(dir_ / "sessions"))
    if (f.path().extension() == ".jsonl") ids.push_back(f.path().stem().string());
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) recover_session(id);
}

fs::path EventStore::log_path(const std::string& id) const { return dir_ / "sessions" / (id + ".jsonl"); }
fs::path EventStore::snapshot_dir(const std::string& id) const { return dir_ / "snapshots" / id; }

void EventStore::recover_session(const std::string& id) {
  const auto path = log_path(id);
  const std::string data = slurp(path);
  std::vector<SessionEvent> events;
  std::size_t good_end = 0, pos = 0;
  bool torn = false;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      torn = true;  // partial last line
      break;
    }
    const std::string line = data.substr(pos, nl - pos);
    try {
      SessionEvent e = event_from_jsonl(line);
      if (e.session_id != id || e.event_seq != static_cast<std::int64_t>(events.size()))
        throw Error(ErrorCode::io_error, "sequence break");
      events.push_back(std::move(e));
    } catch (const std::exception& ex) {
      if (nl + 1 < data.size())
        throw Error(ErrorCode::io_error, path.string() + ": corrupt line at offset " + std::to_string(pos) + ": " + ex.what());
      torn = true;
      break;
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (torn) {
    ++recovery_.torn_tails;
    fs::resize_file(path, good_end);
  }
  if (events.empty()) {
    fs::remove(path);
    return;
  }

  auto entry = std::make_unique<Entry>();
  std::int64_t snap_seq = -1;
  if (const auto sdir = snapshot_dir(id); fs::exists(sdir)) {
    std::vector<std::pair<std::int64_t, fs::path>> snaps;
    for (const auto& f : fs::directory_iterator(sdir)) {
      if (f.path().extension() != ".json") {
        fs::remove(f.path());  // leftover temp file from an interrupted snapshot
        continue;
      }
      try {
        snaps.emplace_back(std::stoll(f.path().stem().string()), f.path());
      } catch (const std::exception&) {
      }
    }
    std::sort(snaps.rbegin(), snaps.rend());
    for (const auto& [seq, file] : snaps) {
      if (seq >= static_cast<std::int64_t>(events.size())) continue;
      try {
        const Json j = Json::parse(slurp(file));
        SessionState st = j.at("state").get<SessionState>();
        SessionIndex ix = j.at("index").get<SessionIndex>();
        if (st.next_seq != seq + 1) continue;
        entry->state = std::move(st);
        entry->index = std::move(ix);
        snap_seq = seq;
        ++recovery_.snapshots_used;
        break;
      } catch (const std::exception&) {
      }
    }
  }
  for (std::size_t i = static_cast<std::size_t>(snap_seq + 1); i < events.size(); ++i) {
    apply_event(entry->state, events[i]);
    note_event(entry->index, events[i]);
    ++recovery_.events_replayed;
  }
  entry->index.holder = entry->state.control_holder;
  entry->since_snapshot = events.size() - static_cast<std::size_t>(snap_seq + 1);
  ++recovery_.sessions;
  std::unique_lock lock(map_mutex_);
  entries_[id] = std::move(entry);
}

EventStore::Entry* EventStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : it->second.get();
}

EventStore::Entry& EventStore::find_or_create(const std::string& id) {
  if (auto* e = find(id)) return *e;
  std::unique_lock lock(map_mutex_);
  auto& slot = entries_[id];
  if (!slot) slot = std::make_unique<Entry>();
  return *slot;
}

std::vector<SessionEvent> EventStore::mutate(const std::string& id, const Mutation& fn) {
  if (!valid_session_id(id)) throw Error(ErrorCode::malformed_event, "invalid session id '" + id + "'");
  Entry& entry = find_or_create(id);
  std::lock_guard lock(entry.mutex);
  const bool exists = entry.state.next_seq > 0;
  std::vector<SessionEvent> events = fn(exists ? &entry.state : nullptr);
  if (events.empty()) return events;

  SessionState next = entry.state;
  SessionIndex index = entry.index;
  std::string blob;
  for (const auto& e : events) {
    if (e.session_id != id) throw Error(ErrorCode::malformed_event, "event for another session");
    apply_event(next, e);
    note_event(index, e);
    blob += to_jsonl(e);
    blob += '\n';
  }
  index.holder = next.control_holder;
  write_all(log_path(id), blob, O_WRONLY | O_CREAT | O_APPEND);
  entry.state = std::move(next);
  entry.index = std::move(index);
  entry.since_snapshot += events.size();
  if (entry.since_snapshot >= options_.snapshot_every) {
    write_snapshot(entry);
    entry.since_snapshot = 0;
  }
  std::lock_guard l(listener_mutex_);
  if (listener_) listener_(events);
  return events;
}

void EventStore::append(const std::string& id, std::vector<SessionEvent> events) {
  mutate(id, [&](const SessionState*) { return std::move(events); });
}

void EventStore::write_snapshot(const Entry& entry) {
  const auto& id = entry.state.session_id;
  const auto sdir = snapshot_dir(id);
  fs::create_directories(sdir);
  const std::int64_t seq = entry.state.next_seq - 1;
  const Json j{{"state", entry.state}, {"index", entry.index}};
  const auto tmp = sdir / (std::to_string(seq) + ".tmp");
  write_all(tmp, j.dump(), O_WRONLY | O_CREAT | O_TRUNC);
  fs::rename(tmp, sdir / (std::to_string(seq) + ".json"));
  std::vector<std::int64_t> seqs;
  for (const auto& f : fs::directory_iterator(sdir))
    if (f.path().extension() == ".json") seqs.push_back(std::stoll(f.path().stem().string()));
  std::sort(seqs.rbegin(), seqs.rend());
  for (std::size_t i = options_.keep_snapshots; i < seqs.size(); ++i)
    fs::remove(sdir / (std::to_string(seqs[i]) + ".json"));
}

std::optional<SessionState> EventStore::state(const std::string& id) const {
  auto* e = find(id);
  if (!e) return std::nullopt;
  std::lock_guard lock(e->mutex);
  if (e->state.next_seq == 0) return std::nullopt;
  return e->state;
}

std::optional<SessionIndex> EventStore::index(const std::string& id) const {
  auto* e = find(id);
  if (!e) return std::nullopt;
  std::lock_guard lock(e->mutex);
  if (e->state.next_seq == 0) return std::nullopt;
  return e->index;
}

std::vector<SessionIndex> EventStore::index() const {
  std::vector<Entry*> all;
  {
    std::shared_lock lock(map_mutex_);
    for (const auto& [id, e] : entries_) all.push_back(e.get());
  }
  std::vector<SessionIndex> out;
  for (auto* e : all) {
    std::lock_guard lock(e->mutex);
    if (e->state.next_seq > 0) out.push_back(e->index);
  }
  return out;
}

std::vector<SessionEvent> EventStore::read(const std::string& id, std::int64_t after_seq) const {
  auto* e = find(id);
  if (!e) throw Error(ErrorCode::not_found, "no session '" + id + "'");
  std::string data;
  {
    std::lock_guard lock(e->mutex);
    if (e->state.next_seq == 0) throw Error(ErrorCode::not_found, "no session '" + id + "'");
    data = slurp(log_path(id));
  }
  std::vector<SessionEvent> out;
  std::istringstream in(data);
  std::string line;
  std::int64_t seq = 0;
  while (std::getline(in, line)) {
    if (seq++ <= after_seq) continue;
    out.push_back(event_from_jsonl(line));
  }
  return out;
}

void EventStore::set_listener(std::function<void(const std::vector<SessionEvent>&)> listener) {
  std::lock_guard lock(listener_mutex_);
  listener_ = std::move(listener);
}

void UpdateFeed::publish(const std::vector<SessionEvent>& events) {
  {
    std::lock_guard lock(mutex_);
    for (const auto& e : events) {
      buffer_.push_back(Update{++head_, e});
      if (buffer_.size() > capacity_) buffer_.pop_front();
    }
  }
  cv_.notify_all();
}

std::vector<Update> UpdateFeed::since(std::uint64_t after, std::chrono::milliseconds wait, std::size_t max) const {
  std::unique_lock lock(mutex_);
  const std::uint64_t oldest = buffer_.empty() ? head_ + 1 : buffer_.front().cursor;
  if (after > head_ || after + 1 < oldest)
    throw Error(ErrorCode::cursor_too_old, "cursor " + std::to_string(after) + " outside [" +
                                               std::to_string(oldest - 1) + ", " + std::to_string(head_) + "]");
  cv_.wait_for(lock, wait, [&] { return head_ > after || closed_; });
  std::vector<Update> out;
  if (buffer_.empty()) return out;
  // The buffer may have moved on while waiting.
  if (after + 1 < buffer_.front().cursor) throw Error(ErrorCode::cursor_too_old, "cursor fell out of the buffer");
  for (auto i = static_cast<std::size_t>(after + 1 - buffer_.front().cursor); i < buffer_.size() && out.size() < max; ++i)
    out.push_back(buffer_[i]);
  return out;
}

std::uint64_t UpdateFeed::head() const {
  std::lock_guard lock(mutex_);
  return head_;
}

void UpdateFeed::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool UpdateFeed::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

}  // namespace stepgate::service
