#pragma once

// HTTP+JSON mapping of the Service (routes in docs/api.md). Bearer tokens come
// from the Authorization header or, for EventSource clients, ?access_token=.

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "stepgate/common/error.hpp"
#include "stepgate/service/service.hpp"

namespace httplib {
class Server;
}

namespace stepgate::service {

// HTTP status for a library error code.
int http_status(ErrorCode code) noexcept;

class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port or throws IoError.
  int bind(const std::string& host, int port);
  // Serves until stop(); also sweeps reply timeouts every sweep_interval_ms.
  void listen(int sweep_interval_ms = 5000);
  void stop();

 private:
  void routes();

  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace stepgate::service
