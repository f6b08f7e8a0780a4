// stepgate command line: offline pipelines (ingest, anon, dataset, metrics),
// the simulator and the service.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "stepgate/anon/anon.hpp"
#include "stepgate/common/error.hpp"
#include "stepgate/dataset/dataset.hpp"
#include "stepgate/domain/names.hpp"
#include "stepgate/ingest/ingest.hpp"
#include "stepgate/metrics/metrics.hpp"
#include "stepgate/service/http.hpp"
#include "stepgate/service/service.hpp"
#include "stepgate/sim/sim.hpp"

using namespace stepgate;
namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path);
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  return out;
}

Json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::config_invalid, path + ": " + e.what());
  }
}

// Event files hold SessionEvents of any number of sessions; they are grouped
// per session in order of first appearance.
std::vector<SessionLog> read_logs(const std::string& path) {
  auto in = open_in(path);
  std::vector<SessionLog> logs;
  std::map<std::string, std::size_t> at;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    SessionEvent e;
    try {
      e = event_from_jsonl(line);
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::malformed_event, path + ":" + std::to_string(n) + ": " + ex.what());
    }
    auto [it, fresh] = at.emplace(e.session_id, logs.size());
    if (fresh) logs.emplace_back();
    logs[it->second].push_back(std::move(e));
  }
  return logs;
}

// Closed sessions of a service data directory in close order.
std::vector<SessionLog> read_data_dir(const fs::path& dir) {
  std::vector<SessionLog> logs;
  if (!fs::exists(dir / "sessions")) throw Error(ErrorCode::not_found, "no sessions under " + dir.string());
  for (const auto& f : fs::directory_iterator(dir / "sessions")) {
    if (f.path().extension() != ".jsonl") continue;
    for (auto& log : read_logs(f.path().string()))
      if (!log.empty() && log.back().kind == EventKind::session_closed) logs.push_back(std::move(log));
  }
  std::sort(logs.begin(), logs.end(), [](const SessionLog& a, const SessionLog& b) {
    return std::tie(a.back().ts, a.back().session_id) < std::tie(b.back().ts, b.back().session_id);
  });
  return logs;
}

void write_logs(std::ostream& out, const std::vector<SessionLog>& logs) {
  for (const auto& log : logs)
    for (const auto& e : log) out << to_jsonl(e) << '\n';
}

TimestampMs last_ts(const std::vector<SessionLog>& logs) {
  TimestampMs t = 0;
  for (const auto& log : logs)
    if (!log.empty()) t = std::max(t, log.back().ts);
  return t;
}

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepgate: staged human-in-the-loop workflow automation"};
  app.require_subcommand(1);

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "raw desk logs to session events, dialogs and validation reports");
  ingest->require_subcommand(1);
  std::string in_path, out_path, date, rules_path, issues_path;
  std::size_t max_turns = 256;

  auto* parse = ingest->add_subcommand("parse", "raw log lines -> SessionEvents");
  parse->add_option("--in", in_path, "raw log (JSONL)")->required();
  parse->add_option("--out", out_path, "events (JSONL)")->required();
  parse->add_option("--issues", issues_path, "skipped lines (JSONL)");
  parse->callback([&] {
    auto in = open_in(in_path);
    const auto raw = ingest::read_raw_log(in);
    const auto sessions = ingest::parse_sessions(raw);
    auto out = open_out(out_path);
    std::size_t events = 0, issues = 0;
    std::optional<std::ofstream> issue_out;
    if (!issues_path.empty()) issue_out = open_out(issues_path);
    for (const auto& s : sessions) {
      for (const auto& e : s.events) out << to_jsonl(e) << '\n';
      events += s.events.size();
      issues += s.issues.size();
      if (issue_out)
        for (const auto& i : s.issues)
          *issue_out << Json{{"session_id", s.session_id}, {"seq", i.seq}, {"code", to_string(i.code)},
                             {"detail", i.detail}, {"tag", i.tag}}
                            .dump()
                     << '\n';
    }
    print(Json{{"lines", raw.size()}, {"sessions", sessions.size()}, {"events", events}, {"issues", issues}});
  });

  auto* dialogs = ingest->add_subcommand("dialogs", "SessionEvents -> model-ready dialog samples");
  dialogs->add_option("--in", in_path, "events (JSONL)")->required();
  dialogs->add_option("--out", out_path, "samples (JSONL)")->required();
  dialogs->add_option("--max-turns", max_turns, "context budget in turns");
  dialogs->callback([&] {
    auto out = open_out(out_path);
    std::size_t samples = 0, truncated = 0, skipped = 0;
    for (const auto& log : read_logs(in_path)) {
      ingest::DialogBuild built;
      try {
        built = ingest::build_dialog_samples(log, ingest::DialogOptions{max_turns});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::no_actions) throw;
        ++skipped;
        continue;
      }
      for (const auto& s : built.samples) out << Json(s).dump() << '\n';
      samples += built.samples.size();
      truncated += built.truncations.size();
    }
    print(Json{{"samples", samples}, {"truncated", truncated}, {"sessions_without_actions", skipped}});
  });

  auto* validate = ingest->add_subcommand("validate", "daily validation report over a raw log");
  validate->add_option("--in", in_path, "raw log (JSONL)")->required();
  validate->add_option("--date", date, "UTC day YYYY-MM-DD; sessions opened that day are checked")->required();
  validate->add_option("--rules", rules_path, "validation config (JSON)");
  validate->add_option("--out", out_path, "report (JSON)");
  validate->callback([&] {
    auto in = open_in(in_path);
    const auto raw = ingest::read_raw_log(in);
    std::vector<ingest::ParsedSession> day;
    for (auto& s : ingest::parse_sessions(raw))
      if (!s.events.empty() && ingest::utc_date(s.events.front().ts) == date) day.push_back(std::move(s));
    ingest::ValidationConfig cfg;
    if (!rules_path.empty()) cfg = ingest::validation_config_from_json(read_json(rules_path));
    const Json report = ingest::to_json(ingest::validate_daily(day, cfg, date));
    if (!out_path.empty()) open_out(out_path) << report.dump(2) << '\n';
    print(report);
  });

  // ---- anon ----
  auto* anon = app.add_subcommand("anon", "mask personal data");
  anon->require_subcommand(1);
  std::string dict_path, ledger_path;
  auto* anon_run = anon->add_subcommand("run", "mask every session of an event file");
  anon_run->add_option("--dict", dict_path, "masking dictionary (JSON); built-in defaults when omitted");
  anon_run->add_option("--in", in_path, "events (JSONL)")->required();
  anon_run->add_option("--out", out_path, "masked events (JSONL)")->required();
  anon_run->add_option("--ledger", ledger_path, "per-session masking ledger (JSONL)");
  anon_run->callback([&] {
    const auto dict = dict_path.empty() ? anon::default_dictionary() : anon::dictionary_from_json(read_json(dict_path));
    const anon::Masker masker(dict);
    auto out = open_out(out_path);
    std::optional<std::ofstream> ledger;
    if (!ledger_path.empty()) ledger = open_out(ledger_path);
    std::size_t sessions = 0, placeholders = 0;
    for (const auto& log : read_logs(in_path)) {
      const auto r = masker.mask_session(log);
      for (const auto& e : r.events) out << to_jsonl(e) << '\n';
      if (ledger) *ledger << anon::to_json(r.ledger).dump() << '\n';
      ++sessions;
      placeholders += r.ledger.placeholders.size();
    }
    print(Json{{"sessions", sessions}, {"placeholders", placeholders}});
  });

  // ---- dataset ----
  auto* dataset = app.add_subcommand("dataset", "training and evaluation datasets");
  dataset->require_subcommand(1);
  std::string spec_path, out_dir;
  auto* build = dataset->add_subcommand("build", "sample, mix, split and extract preference pairs");
  build->add_option("--spec", spec_path, "dataset spec (JSON)")->required();
  build->add_option("--in", in_path, "masked events (JSONL)")->required();
  build->add_option("--out", out_dir, "output directory")->required();
  build->add_option("--max-turns", max_turns, "context budget in turns");
  build->callback([&] {
    const auto spec = dataset::spec_from_json(read_json(spec_path));
    const auto logs = read_logs(in_path);
    const auto built = dataset::build_dataset(logs, spec, ingest::DialogOptions{max_turns});
    const fs::path dir = out_dir;
    {
      auto out = open_out(dir / "train.jsonl");
      for (const auto& s : built.train) out << Json(s).dump() << '\n';
    }
    {
      auto out = open_out(dir / "holdout.jsonl");
      for (const auto& s : built.holdout) out << Json(s).dump() << '\n';
    }
    {
      auto out = open_out(dir / "pairs.jsonl");
      for (const auto& p : built.pairs.pairs) out << Json(p).dump() << '\n';
    }
    Json split{{"train_sessions", built.split.train_sessions}, {"holdout_sessions", built.split.holdout_sessions}};
    open_out(dir / "split.json") << split.dump(2) << '\n';
    Json histogram = Json::object();
    for (const auto& [t, n] : built.pairs.rejected_histogram) histogram[std::string(to_string(t))] = n;
    print(Json{{"train", built.train.size()},
               {"holdout", built.holdout.size()},
               {"pairs", built.pairs.pairs.size()},
               {"skipped_identical_pairs", built.pairs.skipped_identical},
               {"rejected_histogram", histogram},
               {"truncated", built.truncations.size()},
               {"spec", dataset::to_json(spec)}});
  });

  // ---- metrics ----
  auto* metrics = app.add_subcommand("metrics", "offline and online metrics");
  metrics->require_subcommand(1);
  std::string kind = "summary", control_path, treatment_path, templates_path, data_dir, slice;
  TimestampMs reply_timeout = kDefaultReplyTimeoutMs;
  std::optional<TimestampMs> as_of;
  std::size_t window = 0, resamples = 2000;
  std::uint64_t seed = 1;
  double theta = kDefaultFuzzyThreshold;
  auto* report = metrics->add_subcommand("report", "one report as JSON");
  report->add_option("--kind", kind, "report kind")
      ->check(CLI::IsMember({"summary", "accuracy", "acceptance", "automation", "aat", "ab", "buckets"}));
  report->add_option("--in", in_path, "events (JSONL); predictions (JSONL) for accuracy");
  report->add_option("--data-dir", data_dir, "service data directory (closed sessions, close order)");
  report->add_option("--slice", slice, "restrict to one slice");
  report->add_option("--window", window, "last N closed sessions (0 = all)");
  report->add_option("--control", control_path, "control arm events (ab)");
  report->add_option("--treatment", treatment_path, "treatment arm events (ab)");
  report->add_option("--templates", templates_path, "JSON array of registered reply templates (buckets)");
  report->add_option("--theta", theta, "fuzzy edit threshold");
  report->add_option("--reply-timeout-ms", reply_timeout, "customer reply timeout T");
  report->add_option("--as-of", as_of, "evaluation time in ms (default: last event)");
  report->add_option("--resamples", resamples, "bootstrap resamples (ab)");
  report->add_option("--seed", seed, "bootstrap seed (ab)");
  report->callback([&] {
    if (kind == "accuracy") {
      if (in_path.empty()) throw Error(ErrorCode::config_invalid, "--in predictions file is required");
      auto in = open_in(in_path);
      std::vector<PredictionPair> pairs;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const Json j = Json::parse(line);
        PredictionPair p{j.at("predicted").get<ActionRecord>(), j.at("gold").get<ActionRecord>(), Provenance::predefined};
        if (auto it = j.find("provenance"); it != j.end())
        {
          const auto v = parse_enum<Provenance>(it->get<std::string>());
          if (!v) throw Error(ErrorCode::config_invalid, "unknown provenance " + it->dump());
          p.provenance = *v;
        }
        pairs.push_back(std::move(p));
      }
      print(Json(accuracy_report(pairs, theta)));
      return;
    }
    if (kind == "ab") {
      if (control_path.empty() || treatment_path.empty())
        throw Error(ErrorCode::config_invalid, "--control and --treatment are required");
      const auto c = read_logs(control_path);
      const auto t = read_logs(treatment_path);
      Json j = ab_analyze(c, t, AbOptions{resamples, seed, true});
      j["delta_percent"] = percent_rounded(j["delta_relative"].get<double>());
      print(j);
      return;
    }
    std::vector<SessionLog> logs;
    if (!data_dir.empty()) logs = read_data_dir(data_dir);
    else if (!in_path.empty()) logs = read_logs(in_path);
    else throw Error(ErrorCode::config_invalid, "--in or --data-dir is required");
    if (!slice.empty())
      std::erase_if(logs, [&](const SessionLog& l) {
        return l.empty() || l.front().kind != EventKind::session_opened || l.front().as<SessionOpened>().slice_id != slice;
      });
    if (window > 0 && logs.size() > window) logs.erase(logs.begin(), logs.end() - static_cast<std::ptrdiff_t>(window));
    const TimestampMs t = as_of.value_or(last_ts(logs));
    if (kind == "summary") {
      Json j = metric_summary(logs, reply_timeout, t);
      j["slice_id"] = slice.empty() ? Json(nullptr) : Json(slice);
      j["window"] = window;
      print(j);
    } else if (kind == "acceptance") {
      print(acceptance_json(acceptance_rate(collect_feedback(logs))));
    } else if (kind == "automation") {
      print(Json(automation_rate(logs, reply_timeout, t)));
    } else if (kind == "aat") {
      const auto per = aat_per_customer(logs);
      print(Json{{"aat_s", aat(logs)}, {"customers", per.size()}, {"sessions", logs.size()}});
    } else {
      TemplateRegistry templates;
      if (!templates_path.empty()) templates.templates = read_json(templates_path).get<std::vector<std::string>>();
      std::vector<ReviewedProposal> rejected;
      for (auto& r : collect_feedback(logs))
        if (r.feedback.verdict == Verdict::reject) rejected.push_back(std::move(r));
      print(Json(bucket_report(rejected, templates, theta)));
    }
  });

  // ---- sim ----
  auto* simc = app.add_subcommand("sim", "synthetic desk experiments");
  simc->require_subcommand(1);
  std::string scenario_path;
  std::size_t points = 50;
  auto* sim_run = simc->add_subcommand("run", "run a scenario and write its logs and report");
  sim_run->add_option("--scenario", scenario_path, "scenario (JSON)")->required();
  sim_run->add_option("--out", out_dir, "output directory")->required();
  sim_run->callback([&] {
    const auto cfg = sim::scenario_from_json(read_json(scenario_path));
    const auto result = sim::run_scenario(cfg);
    const fs::path dir = out_dir;
    {
      auto out = open_out(dir / "events.jsonl");
      write_logs(out, result.logs);
    }
    {
      auto out = open_out(dir / "proposals.jsonl");
      for (const auto& p : result.proposals)
        out << Json{{"session_id", p.session_id}, {"slice_id", p.slice_id},   {"proposal_seq", p.proposal_seq},
                    {"action_type", to_string(p.action_type)}, {"critical", p.critical}, {"correct", p.correct},
                    {"score", p.score ? Json(*p.score) : Json(nullptr)}, {"tau", p.tau}, {"stage", to_string(p.stage)}}
                   .dump()
            << '\n';
    }
    const Json report = sim::metric_report(result, cfg.reply_timeout_ms);
    open_out(dir / "report.json") << report.dump(2) << '\n';
    print(report);
  });

  auto* sim_curve = simc->add_subcommand("curve", "coverage-precision curve over a tau grid");
  sim_curve->add_option("--scenario", scenario_path, "scenario (JSON)")->required();
  sim_curve->add_option("--points", points, "grid size over [0, 1]");
  sim_curve->add_option("--out", out_path, "CSV output");
  sim_curve->callback([&] {
    if (points < 2) throw Error(ErrorCode::config_invalid, "--points must be at least 2");
    const auto cfg = sim::scenario_from_json(read_json(scenario_path));
    const auto stream = sim::shadow_stream(cfg);
    std::vector<double> taus;
    for (std::size_t i = 0; i < points; ++i) taus.push_back(static_cast<double>(i) / static_cast<double>(points - 1));
    StageConfig gate = cfg.slices.front().gate;
    const auto curve = sim::coverage_precision_curve(stream, taus, gate);
    Json j = Json::array();
    for (const auto& p : curve)
      j.push_back(Json{{"tau", p.tau},
                       {"proposed", p.proposed},
                       {"executed", p.executed},
                       {"correct_executed", p.correct_executed},
                       {"coverage", p.coverage},
                       {"precision", p.precision}});
    if (!out_path.empty()) {
      auto out = open_out(out_path);
      out << "tau,proposed,executed,correct_executed,coverage,precision\n";
      for (const auto& p : curve)
        out << p.tau << ',' << p.proposed << ',' << p.executed << ',' << p.correct_executed << ',' << p.coverage << ','
            << p.precision << '\n';
    }
    print(Json{{"stream", stream.size()}, {"curve", j}});
  });

  auto* sim_ab = simc->add_subcommand("ab", "A/B experiment between two scenarios");
  sim_ab->add_option("--control", control_path, "control scenario (JSON)")->required();
  sim_ab->add_option("--treatment", treatment_path, "treatment scenario (JSON)")->required();
  sim_ab->add_option("--resamples", resamples, "bootstrap resamples");
  sim_ab->add_option("--seed", seed, "bootstrap seed");
  sim_ab->callback([&] {
    auto c = sim::scenario_from_json(read_json(control_path));
    auto t = sim::scenario_from_json(read_json(treatment_path));
    Json j = sim::run_ab(std::move(c), std::move(t), AbOptions{resamples, seed, true});
    j["delta_percent"] = percent_rounded(j["delta_relative"].get<double>());
    print(j);
  });

  // ---- serve ----
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  std::string config_path;
  int sweep_ms = 5000;
  serve->add_option("--config", config_path, "service config (JSON); $STEPGATE_CONFIG otherwise");
  serve->add_option("--sweep-ms", sweep_ms, "reply-timeout sweep interval");
  serve->callback([&] {
    auto cfg = service::load_service_config(config_path.empty() ? std::nullopt
                                                                : std::optional<fs::path>(config_path));
    if (cfg.tokens.empty()) std::cerr << "warning: no tokens configured, every request is treated as admin\n";
    service::Service svc(cfg);
    service::HttpServer server(svc);
    const int port = server.bind(cfg.host, cfg.port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << cfg.host << ':' << port << " data " << cfg.data_dir.string() << " recovered "
              << svc.store().recovery().sessions << " sessions\n";
    server.listen(sweep_ms);
    g_server = nullptr;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
