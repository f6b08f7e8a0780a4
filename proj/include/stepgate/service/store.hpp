#pragma once

// Event-sourced persistence: one append-only JSONL log per session plus
// periodic SessionState snapshots. Recovery loads the newest readable
// snapshot and replays the log tail; a torn last line is truncated away.
//
// Layout under the data directory:
//   sessions/<id>.jsonl          events, one per line
//   snapshots/<id>/<seq>.json    state after event <seq>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "stepgate/domain/codec.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate::service {

struct StoreOptions {
  std::size_t snapshot_every = 100;  // events between snapshots
  std::size_t keep_snapshots = 2;
};

// Per-session index entry kept next to the projection.
struct SessionIndex {
  std::string session_id;
  std::string slice_id;
  std::string customer_id;
  Stage stage = Stage::logging;
  ControlHolder holder = ControlHolder::operator_;
  bool closed = false;
  std::int64_t next_seq = 0;
  TimestampMs opened_at = 0;
  TimestampMs last_ts = 0;
  TimestampMs held_since = 0;  // when the operator last took control
  std::optional<DeferralReason> last_deferral;
};

void to_json(Json& j, const SessionIndex& v);
void from_json(const Json& j, SessionIndex& v);

struct RecoveryReport {
  std::size_t sessions = 0;
  std::size_t torn_tails = 0;
  std::size_t snapshots_used = 0;
  std::size_t events_replayed = 0;
};

// Session ids become file names: [A-Za-z0-9_.-], not starting with '.'.
bool valid_session_id(std::string_view id) noexcept;

class EventStore {
 public:
  // Creates the layout if missing and recovers every session found.
  explicit EventStore(std::filesystem::path dir, StoreOptions options = {});

  const RecoveryReport& recovery() const noexcept { return recovery_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  // Serialized read-modify-write of one session. `fn` sees the current state
  // (nullptr for an unknown session) and returns the events to append; they
  // are validated by folding, written in one write(2), then published.
  // Throws whatever `fn` or the fold throws; nothing is written then.
  using Mutation = std::function<std::vector<SessionEvent>(const SessionState*)>;
  std::vector<SessionEvent> mutate(const std::string& session_id, const Mutation& fn);

  // Appends pre-built events (seq must continue the log).
  void append(const std::string& session_id, std::vector<SessionEvent> events);

  std::optional<SessionState> state(const std::string& session_id) const;
  std::optional<SessionIndex> index(const std::string& session_id) const;
  std::vector<SessionIndex> index() const;
  // Events with event_seq > after_seq, read from disk. Throws NotFound.
  std::vector<SessionEvent> read(const std::string& session_id, std::int64_t after_seq = -1) const;

  // Called after every durable append, under the session lock, so each
  // session's events reach the listener in order.
  void set_listener(std::function<void(const std::vector<SessionEvent>&)> listener);

 private:
  struct Entry {
    mutable std::mutex mutex;
    SessionState state;
    SessionIndex index;
    std::size_t since_snapshot = 0;
  };

  Entry* find(const std::string& session_id) const;
  Entry& find_or_create(const std::string& session_id);
  void recover_session(const std::string& session_id);
  void write_snapshot(const Entry& entry);
  std::filesystem::path log_path(const std::string& session_id) const;
  std::filesystem::path snapshot_dir(const std::string& session_id) const;

  std::filesystem::path dir_;
  StoreOptions options_;
  RecoveryReport recovery_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
  std::mutex listener_mutex_;
  std::function<void(const std::vector<SessionEvent>&)> listener_;
};

void note_event(SessionIndex& index, const SessionEvent& event);

struct Update {
  std::uint64_t cursor = 0;
  SessionEvent event;
};

// Bounded in-memory feed of appended events with a global cursor. Cursors
// start at 1 with every process; a cursor older than the buffer (or newer
// than the head, after a restart) raises CursorTooOld and the client resyncs.
class UpdateFeed {
 public:
  explicit UpdateFeed(std::size_t capacity = 10000) : capacity_(capacity) {}

  void publish(const std::vector<SessionEvent>& events);
  // Updates after `after`, waiting up to `wait` for the first one.
  std::vector<Update> since(std::uint64_t after, std::chrono::milliseconds wait, std::size_t max = 1000) const;
  std::uint64_t head() const;
  void close();
  bool closed() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::deque<Update> buffer_;
  std::uint64_t head_ = 0;
  bool closed_ = false;
};

}  // namespace stepgate::service
