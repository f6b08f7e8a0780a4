#pragma once

// Simulated desk adapter: plays the BPM world and the operators against a
// Service, one service call per tick. Screens come from sim catalogs; the
// customer and operator draws are keyed, so two desks with the same config
// issue the same calls as long as the service answers the same way.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stepgate/service/service.hpp"
#include "stepgate/sim/sim.hpp"

namespace stepgate::service {

struct DeskSlice {
  std::string slice_id;
  std::vector<sim::IssueScript> catalog;
};

struct DeskConfig {
  std::vector<DeskSlice> slices;  // sessions go round-robin over these
  std::string prefix = "desk-";
  std::size_t sessions = 1000;
  std::size_t concurrency = 16;
  std::uint64_t seed = 1;
  double accept_correct = 0.9;
  double accept_wrong = 0.05;
  double silent_probability = 0.03;
  TimestampMs start_ms = 1'700'000'000'000;
  TimestampMs tick_ms = 1000;
  std::size_t sweep_every = 10;  // ticks between reply-timeout sweeps
};

class Desk {
 public:
  explicit Desk(DeskConfig config);

  // The clock the service under test must use.
  TimestampMs now() const noexcept { return now_; }
  bool done() const noexcept { return opened_ == config_.sessions && active_.empty(); }
  std::size_t ticks() const noexcept { return ticks_; }
  std::size_t calls() const noexcept { return calls_; }
  // Session ids in open order.
  const std::vector<std::string>& session_ids() const noexcept { return ids_; }

  // Advances the clock and makes at most one service call.
  void tick(Service& service);

 private:
  struct Live {
    std::string id;
    std::size_t slice = 0;
    std::size_t script = 0;
    std::size_t cur = 0;
    std::int64_t snapshot_seq = 0;
    std::int64_t seen = -1;
    int phase = 0;  // 0 opening message due, 1 first screen due, 2 running
    std::optional<ActionRecord> react;
    std::optional<std::string> reply_due;
    bool handback_due = false;
    bool silent = false;
    int replies = 0;
    std::size_t visits = 0;
  };

  const sim::ScriptStep& step_of(const Live& s) const;
  void open(Service& service);
  void visit(Service& service, Live& s);
  void show(Service& service, Live& s);
  void reply(Service& service, Live& s);
  std::mt19937_64 draw(const Live& s, std::string_view label, std::int64_t index) const;

  DeskConfig config_;
  TimestampMs now_;
  std::size_t opened_ = 0;
  std::size_t ticks_ = 0;
  std::size_t calls_ = 0;
  std::vector<Live> active_;
  std::vector<std::string> ids_;
  std::mt19937_64 rng_;
};

}  // namespace stepgate::service
