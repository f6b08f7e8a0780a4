#pragma once

// Training and evaluation sets from masked sessions: balanced sampling,
// mixing historical samples with copilot rejections, session-level holdout
// and preference pairs.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepgate/domain/codec.hpp"
#include "stepgate/ingest/ingest.hpp"
#include "stepgate/metrics/metrics.hpp"

namespace stepgate::dataset {

using ingest::DialogSample;

enum class Balancing { none, by_screen, by_tool };

std::string_view to_string(Balancing b);

inline constexpr std::array<std::size_t, 5> kAblationSizes = {4000, 8000, 16000, 32000, 64000};

struct Mix {
  std::size_t n_predefined = 0;
  std::size_t n_rejected = 0;
};

struct DatasetSpec {
  std::size_t size = 0;
  Balancing balancing = Balancing::none;
  std::optional<Mix> mix;  // when set, size must equal n_predefined + n_rejected
  double holdout = 0.1;
  std::uint64_t seed = 1;
};

// Throws Error(config_invalid) when the invariants do not hold.
void validate(const DatasetSpec& spec);
DatasetSpec spec_from_json(const Json& j);
Json to_json(const DatasetSpec& spec);

// Screen of the latest snapshot in the context, or "none".
std::string screen_of(const DialogSample& sample);

// none: uniform draw of N without replacement. by_screen / by_tool: rounds
// over the buckets in a seeded order, one draw per surviving bucket per round,
// without replacement inside a bucket; exhausted buckets drop out.
// Throws Error(insufficient_data) when fewer than N samples exist.
std::vector<DialogSample> sample_dataset(std::span<const DialogSample> samples, std::size_t n, Balancing balancing,
                                         std::uint64_t seed);

// n_pre uniform draws from predefined plus n_rej from rejected, provenance
// tags set, shuffled together. Throws Error(insufficient_data).
std::vector<DialogSample> mix_with_rejections(std::span<const DialogSample> predefined,
                                              std::span<const DialogSample> rejected, std::size_t n_pre,
                                              std::size_t n_rej, std::uint64_t seed);

// One sample per rejected review: context is the dialog before the proposal,
// target the operator's corrective action. Id "<session>#<proposal_seq>".
// Throws Error(missing_correction) for a reject without a correction.
std::vector<DialogSample> rejection_samples(const SessionLog& log, const ingest::DialogOptions& options = {});

struct Split {
  std::vector<std::string> train_sessions;
  std::vector<std::string> holdout_sessions;
};

// Sessions, not samples, are assigned to the holdout so that no session
// straddles both sides. At least one session lands on each side when there
// are two or more.
Split split_sessions(std::vector<std::string> session_ids, double fraction, std::uint64_t seed);

struct PreferencePair {
  std::string sample_id;  // context by reference
  std::string session_id;
  ActionRecord preferred;
  ActionRecord rejected;

  bool operator==(const PreferencePair&) const = default;
};

void to_json(Json& j, const PreferencePair& v);
void from_json(const Json& j, PreferencePair& v);

struct PairExtraction {
  std::vector<PreferencePair> pairs;
  std::map<ActionType, std::size_t> rejected_histogram;
  std::size_t skipped_identical = 0;  // correction equal to the proposal
};

// One pair per reject; accepts produce none. Throws Error(missing_correction).
PairExtraction extract_preference_pairs(std::span<const ReviewedProposal> feedback);

struct BuiltDataset {
  std::vector<DialogSample> train;
  std::vector<DialogSample> holdout;
  PairExtraction pairs;
  Split split;
  std::vector<ingest::TruncationNote> truncations;
};

// Holdout sessions are chosen first; their predefined samples form the
// holdout set. Training samples are drawn from the remaining sessions.
BuiltDataset build_dataset(std::span<const SessionLog> sessions, const DatasetSpec& spec,
                           const ingest::DialogOptions& options = {});

}  // namespace stepgate::dataset
