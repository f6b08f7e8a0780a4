#pragma once

#include <cstddef>
#include <span>

#include "stepgate/domain/threshold.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate {

struct ScoredVerdict {
  double score = 0.0;
  Verdict verdict = Verdict::accept;
};

enum class PrecisionEstimator { ratio, wilson_lower };

// Precision of `accepts` out of `n` under the chosen estimator; 0 for n = 0.
double estimate_precision(std::size_t accepts, std::size_t n, PrecisionEstimator est);

struct CalibrationResult {
  double tau = kSentinelTau;
  bool infeasible = false;  // no finite threshold reaches the target
  double precision = 0.0;   // at tau, over the input
  std::size_t covered = 0;  // inputs with score >= tau
};

// Smallest candidate threshold (distinct scores, then the sentinel) whose
// precision over {score >= tau} reaches `target`. Throws EmptyFeedback.
CalibrationResult calibrate_offline(std::span<const ScoredVerdict> feedback, double target,
                                    PrecisionEstimator est = PrecisionEstimator::ratio);

struct RefineConfig {
  double target = 0.9;
  double max_decrease = 0.02;  // delta
  std::size_t min_window = 50;
  PrecisionEstimator estimator = PrecisionEstimator::ratio;
};

struct RefineResult {
  double tau = kSentinelTau;
  double window_precision = 0.0;  // at the incoming tau
  bool changed = false;
};

// Rolling refinement on a window of reviewed outcomes. Below target: raise tau
// to the smallest candidate >= tau restoring the target (sentinel if none).
// At or above target: lower by at most max_decrease while the target holds.
// Throws WindowTooSmall.
RefineResult refine_online(std::span<const ScoredVerdict> window, double tau, const RefineConfig& config);

}  // namespace stepgate
