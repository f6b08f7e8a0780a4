#pragma once

// Adapters that delegate policy/critic calls to an external process speaking
// a JSON line protocol (see docs/decision-protocol.md).

#include <memory>
#include <mutex>
#include <string>

#include "stepgate/decision/decision.hpp"
#include "stepgate/domain/codec.hpp"

namespace stepgate {

class LineTransport {
 public:
  virtual ~LineTransport() = default;
  virtual void write_line(const std::string& line) = 0;
  // Returns false on end of stream.
  virtual bool read_line(std::string& line) = 0;
};

// Spawns `/bin/sh -c command` and talks to it over stdin/stdout.
class SubprocessTransport final : public LineTransport {
 public:
  explicit SubprocessTransport(const std::string& command);
  ~SubprocessTransport() override;
  SubprocessTransport(const SubprocessTransport&) = delete;
  SubprocessTransport& operator=(const SubprocessTransport&) = delete;

  void write_line(const std::string& line) override;
  bool read_line(std::string& line) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Request/response correlation by id; one outstanding request at a time per
// client (calls are serialized by an internal mutex).
class DecisionClient {
 public:
  explicit DecisionClient(std::unique_ptr<LineTransport> transport) : transport_(std::move(transport)) {}

  Json call(const std::string& method, Json params);

 private:
  std::unique_ptr<LineTransport> transport_;
  std::mutex mutex_;
  std::int64_t next_id_ = 1;
};

class ExternalPolicy final : public Policy {
 public:
  explicit ExternalPolicy(std::shared_ptr<DecisionClient> client) : client_(std::move(client)) {}
  PolicyOutcome propose(const SessionState& state) const override;

 private:
  std::shared_ptr<DecisionClient> client_;
};

class ExternalCritic final : public Critic {
 public:
  explicit ExternalCritic(std::shared_ptr<DecisionClient> client) : client_(std::move(client)) {}
  CriticScore score(const SessionState& state, const PolicyProposal& proposal) const override;

 private:
  std::shared_ptr<DecisionClient> client_;
};

}  // namespace stepgate
