#include "stepgate/service/http.hpp"

#include <httplib.h>

#include <chrono>
#include <condition_variable>

#include "stepgate/domain/names.hpp"
#include "stepgate/ingest/markup.hpp"

namespace stepgate::service {

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::not_found: return 404;
    case ErrorCode::cursor_too_old: return 410;
    case ErrorCode::stale_decision:
    case ErrorCode::version_conflict:
    case ErrorCode::illegal_transition:
    case ErrorCode::no_pending_proposal:
    case ErrorCode::session_closed:
    case ErrorCode::not_policy_turn:
    case ErrorCode::not_operator_turn:
    case ErrorCode::handback_without_deferral:
      return 409;
    case ErrorCode::io_error:
    case ErrorCode::protocol_error:
      return 500;
    case ErrorCode::config_invalid:
    case ErrorCode::missing_correction:
      return 422;
    default: return 400;
  }
}

namespace {

using httplib::Request;
using httplib::Response;

std::optional<std::string> bearer(const Request& req) {
  if (req.has_header("Authorization")) {
    const auto h = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (h.rfind(prefix, 0) == 0) return h.substr(prefix.size());
    return std::nullopt;
  }
  if (req.has_param("access_token")) return req.get_param_value("access_token");
  return std::nullopt;
}

void reply(Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(Response& res, ErrorCode code, const std::string& message) {
  reply(res, Json{{"error", to_string(code)}, {"message", message}}, http_status(code));
}

Json body_of(const Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::malformed_event, std::string("request body is not JSON: ") + e.what());
  }
}

std::optional<std::string> param(const Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

std::uint64_t to_u64(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::malformed_event, std::string(what) + " must be a non-negative integer");
  }
}

ActionRecord action_from_body(Json j) {
  if (!j.is_object()) throw Error(ErrorCode::malformed_action, "action must be an object");
  if (!j.contains("actor")) j["actor"] = "operator";
  ActionRecord a;
  try {
    a = j.get<ActionRecord>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::malformed_action, e.what());
  }
  validate(a);
  return a;
}

Json update_json(const Update& u) {
  return Json{{"cursor", u.cursor},
              {"session_id", u.event.session_id},
              {"event_seq", u.event.event_seq},
              {"kind", to_string(u.event.kind)},
              {"event", u.event}};
}

Json state_json(const SessionState& s) { return Json(s); }

}  // namespace

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) { routes(); }

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p <= 0) throw Error(ErrorCode::io_error, "cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw Error(ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen(int sweep_interval_ms) {
  std::mutex m;
  std::condition_variable cv;
  std::thread sweeper([&] {
    std::unique_lock lock(m);
    while (!stopping_) {
      cv.wait_for(lock, std::chrono::milliseconds(sweep_interval_ms), [&] { return stopping_.load(); });
      if (stopping_) break;
      try {
        service_.sweep_timeouts();
      } catch (const std::exception&) {
      }
    }
  });
  server_->listen_after_bind();
  {
    std::lock_guard lock(m);
    stopping_ = true;
  }
  cv.notify_all();
  sweeper.join();
}

void HttpServer::stop() {
  stopping_ = true;
  service_.feed().close();
  if (server_) server_->stop();
}

void HttpServer::routes() {
  auto& s = *server_;
  Service* svc = &service_;

  // Wraps a handler with authorization and error mapping.
  auto guarded = [svc](Role need, auto handler) {
    return [svc, need, handler](const Request& req, Response& res) {
      try {
        const Principal who = svc->authorize(bearer(req), need);
        handler(req, res, who);
      } catch (const Error& e) {
        fail(res, e.code(), e.what());
      } catch (const Json::exception& e) {
        fail(res, ErrorCode::malformed_event, e.what());
      } catch (const std::exception& e) {
        fail(res, ErrorCode::io_error, e.what());
      }
    };
  };

  s.Get("/v1/health", [svc](const Request&, Response& res) {
    reply(res, Json{{"status", "ok"}, {"cursor", svc->feed().head()}});
  });

  s.Get("/v1/sessions", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          const auto slice = param(req, "slice");
          const auto status = param(req, "status");
          if (status && *status != "open" && *status != "closed")
            throw Error(ErrorCode::malformed_event, "status must be open or closed");
          Json out = Json::array();
          for (const auto& ix : svc->store().index()) {
            if (slice && ix.slice_id != *slice) continue;
            if (status && (*status == "closed") != ix.closed) continue;
            out.push_back(ix);
          }
          reply(res, Json{{"sessions", out}});
        }));

  s.Post("/v1/sessions", guarded(Role::desk, [svc](const Request& req, Response& res, const Principal&) {
           const Json b = body_of(req);
           const auto ix = svc->open_session(b.at("session_id").get<std::string>(), b.at("slice_id").get<std::string>(),
                                            b.value("customer_id", std::string()));
           reply(res, ix, 201);
         }));

  s.Get(R"(/v1/sessions/([^/]+))", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          const std::string id = req.matches[1];
          Json j{{"state", state_json(svc->session(id))}};
          j["index"] = *svc->store().index(id);
          reply(res, j);
        }));

  s.Get(R"(/v1/sessions/([^/]+)/events)", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          const std::string id = req.matches[1];
          std::int64_t after = -1;
          if (auto a = param(req, "after")) after = static_cast<std::int64_t>(to_u64(*a, "after"));
          Json out = Json::array();
          for (const auto& e : svc->store().read(id, after)) out.push_back(e);
          reply(res, Json{{"session_id", id}, {"events", out}});
        }));

  s.Post(R"(/v1/sessions/([^/]+)/messages)", guarded(Role::desk, [svc](const Request& req, Response& res, const Principal&) {
           const std::string id = req.matches[1];
           const Json b = body_of(req);
           ChatMessage m;
           m.text = b.at("text").get<std::string>();
           m.message_id = b.value("message_id", std::string());
           m.timestamp = b.value("timestamp", TimestampMs{0});
           const bool opens_new = svc->customer_message(id, std::move(m));
           reply(res, Json{{"opens_new_session", opens_new}, {"state", state_json(svc->session(id))}});
         }));

  s.Post(R"(/v1/sessions/([^/]+)/snapshots)", guarded(Role::desk, [svc](const Request& req, Response& res, const Principal&) {
           const std::string id = req.matches[1];
           const Json b = body_of(req);
           UiSnapshot snap;
           if (auto it = b.find("markup"); it != b.end()) {
             snap = ingest::parse_markup(it->get<std::string>()).snapshot;
             snap.snapshot_seq = b.value("snapshot_seq", std::int64_t{-1});
           } else {
             Json j = b;
             if (!j.contains("snapshot_seq")) j["snapshot_seq"] = -1;
             snap = j.get<UiSnapshot>();
           }
           svc->ui_snapshot(id, std::move(snap));
           reply(res, Json{{"state", state_json(svc->session(id))}});
         }));

  s.Get("/v1/deferred", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          reply(res, Json{{"items", svc->list_deferred(param(req, "slice"))}, {"cursor", svc->feed().head()}});
        }));

  s.Post(R"(/v1/sessions/([^/]+)/decide)", guarded(Role::operator_, [svc](const Request& req, Response& res, const Principal&) {
           const std::string id = req.matches[1];
           const Json b = body_of(req);
           const auto v = b.at("verdict").get<std::string>();
           Verdict verdict;
           if (v == "accept") verdict = Verdict::accept;
           else if (v == "override" || v == "reject") verdict = Verdict::reject;
           else throw Error(ErrorCode::malformed_event, "verdict must be accept or override");
           std::optional<ActionRecord> fix;
           if (auto it = b.find("corrective_action"); it != b.end() && !it->is_null()) fix = action_from_body(*it);
           std::optional<std::int64_t> seq;
           if (auto it = b.find("proposal_seq"); it != b.end() && !it->is_null()) seq = it->get<std::int64_t>();
           reply(res, Json{{"state", state_json(svc->decide(id, verdict, fix, seq))}});
         }));

  s.Post(R"(/v1/sessions/([^/]+)/actions)", guarded(Role::operator_, [svc](const Request& req, Response& res, const Principal&) {
           const std::string id = req.matches[1];
           reply(res, Json{{"state", state_json(svc->operator_act(id, action_from_body(body_of(req))))}});
         }));

  s.Post(R"(/v1/sessions/([^/]+)/handback)", guarded(Role::operator_, [svc](const Request& req, Response& res, const Principal&) {
           const std::string id = req.matches[1];
           reply(res, Json{{"state", state_json(svc->hand_back(id))}});
         }));

  s.Get("/v1/admin/slices", guarded(Role::viewer, [svc](const Request&, Response& res, const Principal&) {
          reply(res, Json{{"slices", svc->slices()}});
        }));

  s.Post(R"(/v1/admin/slices/([^/]+)/stage)", guarded(Role::admin, [svc](const Request& req, Response& res, const Principal& who) {
           const std::string slice = req.matches[1];
           const auto name = body_of(req).at("stage").get<std::string>();
           const auto stage = parse_enum<Stage>(name);
           if (!stage) throw Error(ErrorCode::config_invalid, "unknown stage '" + name + "'");
           const auto t = svc->set_stage(slice, *stage, who.name);
           reply(res, Json{{"slice_id", t.slice_id}, {"from", to_string(t.from)}, {"to", to_string(t.to)},
                           {"authority", t.authority}});
         }));

  s.Post(R"(/v1/admin/slices/([^/]+)/threshold)",
         guarded(Role::admin, [svc](const Request& req, Response& res, const Principal& who) {
           const std::string slice = req.matches[1];
           const Json b = body_of(req);
           ThresholdPolicy p = svc->registry().get(slice).thresholds;
           p.default_tau = b.value("default_tau", p.default_tau);
           if (auto it = b.find("per_type"); it != b.end()) {
             p.per_type.clear();
             for (const auto& [name, tau] : it->items()) {
               auto t = parse_enum<ActionType>(name);
               if (!t) throw Error(ErrorCode::config_invalid, "unknown action type '" + name + "'");
               p.per_type[*t] = tau.get<double>();
             }
           }
           p.precision_target = b.value("precision_target", p.precision_target);
           p.calibrated_on = b.value("calibrated_on", p.calibrated_on);
           Json check = p;
           check.get<ThresholdPolicy>();  // range checks
           const auto next = svc->set_threshold(slice, p, b.at("expected_version").get<std::int64_t>(), who.name,
                                               b.value("force", false));
           reply(res, next);
         }));

  s.Get(R"(/v1/admin/slices/([^/]+)/guardrails)", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          reply(res, svc->guardrails(req.matches[1]));
        }));

  s.Get("/v1/admin/audit", guarded(Role::admin, [svc](const Request&, Response& res, const Principal&) {
          reply(res, Json{{"entries", svc->audit()}});
        }));

  s.Get("/v1/metrics", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          std::size_t window = 200;
          if (auto w = param(req, "window")) window = to_u64(*w, "window");
          reply(res, svc->metrics(param(req, "slice"), window));
        }));

  s.Get("/v1/updates", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          std::uint64_t cursor = 0;
          if (auto c = param(req, "cursor")) cursor = to_u64(*c, "cursor");
          std::uint64_t wait_ms = 0;
          if (auto w = param(req, "wait_ms")) wait_ms = std::min<std::uint64_t>(to_u64(*w, "wait_ms"), 30000);
          try {
            Json out = Json::array();
            std::uint64_t last = cursor;
            for (const auto& u : svc->feed().since(cursor, std::chrono::milliseconds(wait_ms))) {
              out.push_back(update_json(u));
              last = u.cursor;
            }
            reply(res, Json{{"cursor", last}, {"updates", out}});
          } catch (const Error& e) {
            if (e.code() != ErrorCode::cursor_too_old) throw;
            reply(res, Json{{"error", to_string(ErrorCode::cursor_too_old)}, {"message", e.what()}, {"head", svc->feed().head()}}, 410);
          }
        }));

  // Server-sent events: one "update" event per appended session event, id = cursor.
  s.Get("/v1/stream", guarded(Role::viewer, [svc](const Request& req, Response& res, const Principal&) {
          std::uint64_t cursor = svc->feed().head();
          if (auto c = param(req, "cursor")) cursor = to_u64(*c, "cursor");
          else if (req.has_header("Last-Event-ID")) cursor = to_u64(req.get_header_value("Last-Event-ID"), "Last-Event-ID");
          try {
            svc->feed().since(cursor, std::chrono::milliseconds(0), 0);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::cursor_too_old) throw;
            reply(res, Json{{"error", to_string(ErrorCode::cursor_too_old)}, {"message", e.what()}, {"head", svc->feed().head()}}, 410);
            return;
          }
          auto position = std::make_shared<std::uint64_t>(cursor);
          res.set_header("Cache-Control", "no-cache");
          res.set_chunked_content_provider("text/event-stream", [svc, position](std::size_t, httplib::DataSink& sink) {
            if (svc->feed().closed()) {
              sink.done();
              return true;
            }
            std::string chunk;
            try {
              for (const auto& u : svc->feed().since(*position, std::chrono::milliseconds(1000))) {
                chunk += "id: " + std::to_string(u.cursor) + "\nevent: update\ndata: " + update_json(u).dump() + "\n\n";
                *position = u.cursor;
              }
            } catch (const Error&) {
              const std::string msg = "event: resync\ndata: {\"error\":\"CursorTooOld\"}\n\n";
              sink.write(msg.data(), msg.size());
              sink.done();
              return true;
            }
            if (chunk.empty()) chunk = ": keepalive\n\n";
            return sink.write(chunk.data(), chunk.size());
          });
        }));
}

}  // namespace stepgate::service
