#include "stepgate/decision/external.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "stepgate/common/error.hpp"

namespace stepgate {

SubprocessTransport::SubprocessTransport(const std::string& command) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
    throw Error(ErrorCode::io_error, std::string("pipe: ") + std::strerror(errno));
  pid_ = fork();
  if (pid_ < 0) throw Error(ErrorCode::io_error, std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  // A dead child must surface as an error, not a SIGPIPE.
  std::signal(SIGPIPE, SIG_IGN);
}

SubprocessTransport::~SubprocessTransport() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

void SubprocessTransport::write_line(const std::string& line) {
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io_error, std::string("write to decision process: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool SubprocessTransport::read_line(std::string& line) {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    char chunk[4096];
    const auto n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Json DecisionClient::call(const std::string& method, Json params) {
  std::lock_guard lock(mutex_);
  const auto id = next_id_++;
  transport_->write_line(Json{{"id", id}, {"method", method}, {"params", std::move(params)}}.dump());
  std::string line;
  while (transport_->read_line(line)) {
    Json response;
    try {
      response = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::protocol_error, std::string("unparseable response: ") + e.what());
    }
    // Responses to abandoned requests are skipped; anything else is an error.
    if (!response.contains("id")) throw Error(ErrorCode::protocol_error, "response without id");
    if (response["id"].get<std::int64_t>() < id) continue;
    if (response["id"].get<std::int64_t>() != id) throw Error(ErrorCode::protocol_error, "response id from the future");
    if (response.contains("error")) throw Error(ErrorCode::protocol_error, response["error"].dump());
    if (!response.contains("result")) throw Error(ErrorCode::protocol_error, "response without result");
    return response["result"];
  }
  throw Error(ErrorCode::protocol_error, "decision process closed its output");
}

PolicyOutcome ExternalPolicy::propose(const SessionState& state) const {
  const Json result = client_->call("propose", Json{{"state", state}});
  if (result.contains("abstain")) return NoAction{result["abstain"].get<std::string>()};
  if (result.value("wait_for_customer", false)) return WaitForCustomer{};
  PolicyProposal p;
  try {
    p.action = result.at("action").get<ActionRecord>();
    p.confidence = result.value("confidence", 1.0);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::protocol_error, std::string("bad proposal: ") + e.what());
  }
  p.action.actor = Actor::policy;
  if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) throw Error(ErrorCode::protocol_error, "confidence outside [0,1]");
  return p;
}

CriticScore ExternalCritic::score(const SessionState& state, const PolicyProposal& proposal) const {
  const Json result = client_->call("score", Json{{"state", state}, {"proposal", proposal}});
  const double v = result.at("value").get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::protocol_error, "score outside [0,1]");
  return CriticScore{v, ScoreSource::external};
}

}  // namespace stepgate
