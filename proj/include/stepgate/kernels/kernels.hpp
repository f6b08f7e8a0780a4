#pragma once

// Data-parallel kernels. Each has a serial reference and an OpenMP version
// that must produce bit-identical output (every work item draws from its own
// keyed RNG stream and writes its own output slot).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stepgate::kernels {

// Levenshtein distance over Unicode code points (UTF-8 input; invalid bytes
// count as single code points).
std::size_t levenshtein(std::string_view a, std::string_view b);

// 1 - lev / max(len); 1.0 for two empty strings.
double similarity(std::string_view a, std::string_view b);

std::vector<double> similarity_batch_serial(std::span<const std::pair<std::string, std::string>> pairs);
std::vector<double> similarity_batch(std::span<const std::pair<std::string, std::string>> pairs);

// Relative change of group means, (mean_t - mean_c) / mean_c, under B
// customer-level resamples drawn with replacement.
std::vector<double> bootstrap_relative_delta_serial(std::span<const double> control, std::span<const double> treatment,
                                                    std::size_t resamples, std::uint64_t seed);
std::vector<double> bootstrap_relative_delta(std::span<const double> control, std::span<const double> treatment,
                                             std::size_t resamples, std::uint64_t seed);

struct GatedItem {
  double score = 0.0;
  bool correct = false;
};

struct GridPoint {
  double tau = 0.0;
  std::size_t executed = 0;
  std::size_t correct_executed = 0;
  double coverage = 0.0;   // executed / items
  double precision = 0.0;  // correct_executed / executed, 0 when nothing executes
};

std::vector<GridPoint> threshold_sweep_serial(std::span<const GatedItem> items, std::span<const double> taus);
std::vector<GridPoint> threshold_sweep(std::span<const GatedItem> items, std::span<const double> taus);

// Number of OpenMP threads the parallel variants use (1 without OpenMP).
int parallel_threads();

}  // namespace stepgate::kernels
