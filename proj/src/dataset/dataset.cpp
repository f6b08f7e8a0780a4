#include "stepgate/dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stepgate/common/error.hpp"
#include "stepgate/common/rng.hpp"
#include "stepgate/domain/names.hpp"

namespace stepgate::dataset {
namespace {

template <typename T>
void shuffle_keyed(std::vector<T>& v, std::uint64_t seed, std::string_view label) {
  auto rng = keyed_engine(seed, label, 0);
  std::shuffle(v.begin(), v.end(), rng);
}

[[noreturn]] void insufficient(std::size_t want, std::size_t have, const std::string& what) {
  throw Error(ErrorCode::insufficient_data,
              "need " + std::to_string(want) + " " + what + " samples, have " + std::to_string(have));
}

}  // namespace

std::string_view to_string(Balancing b) {
  switch (b) {
    case Balancing::none: return "none";
    case Balancing::by_screen: return "by_screen";
    case Balancing::by_tool: return "by_tool";
  }
  return "?";
}

void validate(const DatasetSpec& spec) {
  if (spec.size == 0) throw Error(ErrorCode::config_invalid, "dataset size must be positive");
  if (!(spec.holdout > 0.0 && spec.holdout < 1.0)) throw Error(ErrorCode::config_invalid, "holdout must be in (0,1)");
  if (spec.mix && spec.mix->n_predefined + spec.mix->n_rejected != spec.size)
    throw Error(ErrorCode::config_invalid, "mix must add up to the dataset size");
}

DatasetSpec spec_from_json(const Json& j) {
  DatasetSpec s;
  s.size = j.at("size").get<std::size_t>();
  const std::string b = j.value("balancing", std::string("none"));
  if (b == "none") s.balancing = Balancing::none;
  else if (b == "by_screen") s.balancing = Balancing::by_screen;
  else if (b == "by_tool") s.balancing = Balancing::by_tool;
  else throw Error(ErrorCode::config_invalid, "unknown balancing " + b);
  if (j.contains("mix"))
    s.mix = Mix{j.at("mix").at("n_predefined").get<std::size_t>(), j.at("mix").at("n_rejected").get<std::size_t>()};
  s.holdout = j.value("holdout", s.holdout);
  s.seed = j.value("seed", s.seed);
  validate(s);
  return s;
}

Json to_json(const DatasetSpec& s) {
  Json j{{"size", s.size}, {"balancing", to_string(s.balancing)}, {"holdout", s.holdout}, {"seed", s.seed}};
  if (s.mix) j["mix"] = {{"n_predefined", s.mix->n_predefined}, {"n_rejected", s.mix->n_rejected}};
  return j;
}

std::string screen_of(const DialogSample& sample) {
  for (auto it = sample.turns.rbegin(); it != sample.turns.rend(); ++it)
    if (it->kind == ingest::TurnKind::ui_snapshot) return std::get<UiSnapshot>(it->body).screen_id;
  return "none";
}

std::vector<DialogSample> sample_dataset(std::span<const DialogSample> samples, std::size_t n, Balancing balancing,
                                         std::uint64_t seed) {
  if (samples.size() < n) insufficient(n, samples.size(), "");
  if (balancing == Balancing::none) {
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle_keyed(idx, seed, "sample:none");
    std::vector<DialogSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(samples[idx[i]]);
    return out;
  }

  std::map<std::string, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string key = balancing == Balancing::by_tool ? std::string(stepgate::to_string(samples[i].target.action_type))
                                                            : screen_of(samples[i]);
    buckets[key].push_back(i);
  }
  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t next = 0;
  };
  std::vector<Cursor> live;
  for (auto& [key, members] : buckets) {
    shuffle_keyed(members, seed, "bucket:" + key);
    live.push_back({std::move(members), 0});
  }

  std::vector<DialogSample> out;
  out.reserve(n);
  for (std::uint64_t round = 0; out.size() < n; ++round) {
    std::vector<std::size_t> visit(live.size());
    for (std::size_t i = 0; i < visit.size(); ++i) visit[i] = i;
    auto rng = keyed_engine(seed, "round", round);
    std::shuffle(visit.begin(), visit.end(), rng);
    for (std::size_t b : visit) {
      if (out.size() == n) break;
      out.push_back(samples[live[b].order[live[b].next++]]);
    }
    std::erase_if(live, [](const Cursor& c) { return c.next == c.order.size(); });
  }
  return out;
}

std::vector<DialogSample> mix_with_rejections(std::span<const DialogSample> predefined,
                                              std::span<const DialogSample> rejected, std::size_t n_pre,
                                              std::size_t n_rej, std::uint64_t seed) {
  if (predefined.size() < n_pre) insufficient(n_pre, predefined.size(), "predefined");
  if (rejected.size() < n_rej) insufficient(n_rej, rejected.size(), "rejected");
  std::vector<DialogSample> out = sample_dataset(predefined, n_pre, Balancing::none, seed);
  for (auto& s : out) s.provenance = Provenance::predefined;
  for (auto& s : sample_dataset(rejected, n_rej, Balancing::none, seed ^ 0x9E3779B97F4A7C15ULL)) {
    s.provenance = Provenance::rejected;
    out.push_back(std::move(s));
  }
  shuffle_keyed(out, seed, "mix");
  return out;
}

std::vector<DialogSample> rejection_samples(const SessionLog& log, const ingest::DialogOptions& options) {
  std::vector<DialogSample> out;
  for (const auto& r : collect_feedback(log)) {
    if (r.feedback.verdict != Verdict::reject) continue;
    if (!r.feedback.corrective_action)
      throw Error(ErrorCode::missing_correction, ingest::sample_id(r.session_id, r.proposal_seq) + " has no correction");
    DialogSample s;
    s.session_id = r.session_id;
    s.sample_id = ingest::sample_id(r.session_id, r.proposal_seq);
    s.turns = ingest::context_before(log, r.proposal_seq, options, &s.truncated);
    s.target = *r.feedback.corrective_action;
    s.provenance = Provenance::rejected;
    out.push_back(std::move(s));
  }
  return out;
}

Split split_sessions(std::vector<std::string> ids, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorCode::config_invalid, "holdout must be in (0,1)");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  shuffle_keyed(ids, seed, "split");
  std::size_t k = static_cast<std::size_t>(std::llround(fraction * double(ids.size())));
  if (ids.size() >= 2) k = std::clamp<std::size_t>(k, 1, ids.size() - 1);
  Split s;
  s.holdout_sessions.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(k, ids.size())));
  s.train_sessions.assign(ids.begin() + static_cast<std::ptrdiff_t>(std::min(k, ids.size())), ids.end());
  std::sort(s.holdout_sessions.begin(), s.holdout_sessions.end());
  std::sort(s.train_sessions.begin(), s.train_sessions.end());
  return s;
}

void to_json(Json& j, const PreferencePair& v) {
  j = Json{{"sample_id", v.sample_id}, {"session_id", v.session_id}, {"preferred", v.preferred}, {"rejected", v.rejected}};
}

void from_json(const Json& j, PreferencePair& v) {
  v.sample_id = j.at("sample_id").get<std::string>();
  v.session_id = j.at("session_id").get<std::string>();
  v.preferred = j.at("preferred").get<ActionRecord>();
  v.rejected = j.at("rejected").get<ActionRecord>();
}

PairExtraction extract_preference_pairs(std::span<const ReviewedProposal> feedback) {
  PairExtraction out;
  for (const auto& r : feedback) {
    if (r.feedback.verdict != Verdict::reject) continue;
    if (!r.feedback.corrective_action)
      throw Error(ErrorCode::missing_correction, ingest::sample_id(r.session_id, r.proposal_seq) + " has no correction");
    if (same_action(*r.feedback.corrective_action, r.proposal.action)) {
      ++out.skipped_identical;
      continue;
    }
    out.pairs.push_back({ingest::sample_id(r.session_id, r.proposal_seq), r.session_id, *r.feedback.corrective_action,
                         r.proposal.action});
    ++out.rejected_histogram[r.proposal.action.action_type];
  }
  return out;
}

BuiltDataset build_dataset(std::span<const SessionLog> sessions, const DatasetSpec& spec,
                           const ingest::DialogOptions& options) {
  validate(spec);
  BuiltDataset out;
  std::vector<std::string> ids;
  for (const auto& log : sessions)
    if (!log.empty()) ids.push_back(log.front().session_id);
  out.split = split_sessions(ids, spec.holdout, spec.seed);
  const std::set<std::string> held(out.split.holdout_sessions.begin(), out.split.holdout_sessions.end());

  std::vector<DialogSample> predefined, rejected;
  std::vector<ReviewedProposal> train_feedback;
  for (const auto& log : sessions) {
    if (log.empty()) continue;
    const bool is_holdout = held.count(log.front().session_id) > 0;
    bool has_operator_action = false;
    for (const auto& e : log)
      has_operator_action |= e.kind == EventKind::action_executed && e.as<ActionRecord>().actor == Actor::operator_;
    if (has_operator_action) {
      auto built = ingest::build_dialog_samples(log, options);
      out.truncations.insert(out.truncations.end(), built.truncations.begin(), built.truncations.end());
      auto& dest = is_holdout ? out.holdout : predefined;
      dest.insert(dest.end(), std::make_move_iterator(built.samples.begin()),
                  std::make_move_iterator(built.samples.end()));
    }
    if (is_holdout) continue;
    for (auto& s : rejection_samples(log, options)) rejected.push_back(std::move(s));
    for (auto& r : collect_feedback(log)) train_feedback.push_back(std::move(r));
  }

  if (spec.mix && spec.mix->n_rejected > 0) {
    auto pre = sample_dataset(predefined, spec.mix->n_predefined, spec.balancing, spec.seed);
    if (rejected.size() < spec.mix->n_rejected) insufficient(spec.mix->n_rejected, rejected.size(), "rejected");
    out.train = mix_with_rejections(pre, rejected, pre.size(), spec.mix->n_rejected, spec.seed);
  } else {
    out.train = sample_dataset(predefined, spec.size, spec.balancing, spec.seed);
  }
  out.pairs = extract_preference_pairs(train_feedback);
  return out;
}

}  // namespace stepgate::dataset
