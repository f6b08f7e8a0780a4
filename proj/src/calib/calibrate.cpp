#include "stepgate/calib/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stepgate/common/error.hpp"

namespace stepgate {
namespace {

// Candidates in ascending order with counts of inputs scoring >= candidate.
struct Sweep {
  std::vector<double> score;
  std::vector<std::size_t> n_at_least;
  std::vector<std::size_t> acc_at_least;
};

Sweep sweep(std::span<const ScoredVerdict> data) {
  std::vector<ScoredVerdict> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  Sweep s;
  std::size_t n = 0, acc = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double v = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == v; ++i) {
      ++n;
      acc += sorted[i].verdict == Verdict::accept;
    }
    s.score.push_back(v);
    s.n_at_least.push_back(n);
    s.acc_at_least.push_back(acc);
  }
  std::reverse(s.score.begin(), s.score.end());
  std::reverse(s.n_at_least.begin(), s.n_at_least.end());
  std::reverse(s.acc_at_least.begin(), s.acc_at_least.end());
  return s;
}

}  // namespace

double estimate_precision(std::size_t accepts, std::size_t n, PrecisionEstimator est) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(accepts) / static_cast<double>(n);
  if (est == PrecisionEstimator::ratio) return p;
  constexpr double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double denom = 1.0 + z * z / nn;
  const double centre = p + z * z / (2.0 * nn);
  const double margin = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn));
  return std::max(0.0, (centre - margin) / denom);
}

CalibrationResult calibrate_offline(std::span<const ScoredVerdict> feedback, double target, PrecisionEstimator est) {
  if (feedback.empty()) throw Error(ErrorCode::empty_feedback, "calibration needs at least one feedback item");
  if (!(target > 0.0 && target <= 1.0)) throw Error(ErrorCode::config_invalid, "precision target must lie in (0,1]");
  const Sweep s = sweep(feedback);
  for (std::size_t i = 0; i < s.score.size(); ++i) {
    const double p = estimate_precision(s.acc_at_least[i], s.n_at_least[i], est);
    if (p >= target) return CalibrationResult{s.score[i], false, p, s.n_at_least[i]};
  }
  return CalibrationResult{kSentinelTau, true, 0.0, 0};
}

RefineResult refine_online(std::span<const ScoredVerdict> window, double tau, const RefineConfig& config) {
  if (window.size() < config.min_window)
    throw Error(ErrorCode::window_too_small, "window of " + std::to_string(window.size()) + " below minimum " +
                                                 std::to_string(config.min_window));
  const Sweep s = sweep(window);
  auto precision_at = [&](std::size_t i) { return estimate_precision(s.acc_at_least[i], s.n_at_least[i], config.estimator); };
  // First candidate >= t.
  auto first_at_or_above = [&](double t) {
    return static_cast<std::size_t>(std::lower_bound(s.score.begin(), s.score.end(), t) - s.score.begin());
  };

  RefineResult r;
  r.tau = tau;
  const std::size_t at = first_at_or_above(tau);
  r.window_precision = at < s.score.size() ? precision_at(at) : 0.0;

  // An empty cover counts as meeting the target: nothing executes at tau.
  if (at == s.score.size() || r.window_precision >= config.target) {
    // Lower as far as delta allows while the window still meets the target.
    for (std::size_t i = first_at_or_above(tau - config.max_decrease); i < at; ++i) {
      if (precision_at(i) >= config.target) {
        r.tau = s.score[i];
        break;
      }
    }
  } else {
    r.tau = kSentinelTau;
    for (std::size_t i = at + 1; i < s.score.size(); ++i) {
      if (precision_at(i) >= config.target) {
        r.tau = s.score[i];
        break;
      }
    }
  }
  r.changed = r.tau != tau;
  return r;
}

}  // namespace stepgate
