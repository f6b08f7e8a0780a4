#include "stepgate/kernels/kernels.hpp"

#include <algorithm>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stepgate/common/rng.hpp"

namespace stepgate::kernels {
namespace {

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (int k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc >> 6) != 0x2) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(0xDC00u + c);  // lone byte, mapped outside valid scalar range
      ++i;
    } else {
      out.push_back(cp);
      i += static_cast<std::size_t>(len);
    }
  }
  return out;
}

double relative_delta(double mean_c, double mean_t) { return mean_c == 0.0 ? 0.0 : (mean_t - mean_c) / mean_c; }

double resample_mean(std::span<const double> xs, std::mt19937_64& rng) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) sum += xs[static_cast<std::size_t>(rng() % xs.size())];
  return sum / static_cast<double>(xs.size());
}

double one_resample(std::span<const double> control, std::span<const double> treatment, std::uint64_t seed,
                    std::size_t b) {
  auto rng = keyed_engine(seed, "bootstrap", b);
  const double mc = resample_mean(control, rng);
  const double mt = resample_mean(treatment, rng);
  return relative_delta(mc, mt);
}

GridPoint sweep_point(std::span<const GatedItem> items, double tau) {
  GridPoint g;
  g.tau = tau;
  for (const auto& it : items)
    if (it.score >= tau) {
      ++g.executed;
      g.correct_executed += it.correct;
    }
  g.coverage = items.empty() ? 0.0 : double(g.executed) / double(items.size());
  g.precision = g.executed == 0 ? 0.0 : double(g.correct_executed) / double(g.executed);
  return g;
}

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto x = decode_utf8(a);
  const auto y = decode_utf8(b);
  if (x.empty()) return y.size();
  if (y.empty()) return x.size();
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double similarity(std::string_view a, std::string_view b) {
  const std::size_t la = decode_utf8(a).size(), lb = decode_utf8(b).size();
  const std::size_t longest = std::max(la, lb);
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::vector<double> similarity_batch_serial(std::span<const std::pair<std::string, std::string>> pairs) {
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = similarity(pairs[i].first, pairs[i].second);
  return out;
}

std::vector<double> similarity_batch(std::span<const std::pair<std::string, std::string>> pairs) {
  std::vector<double> out(pairs.size());
  const auto n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = similarity(pairs[k].first, pairs[k].second);
  }
  return out;
}

std::vector<double> bootstrap_relative_delta_serial(std::span<const double> control, std::span<const double> treatment,
                                                    std::size_t resamples, std::uint64_t seed) {
  std::vector<double> out(resamples);
  for (std::size_t b = 0; b < resamples; ++b) out[b] = one_resample(control, treatment, seed, b);
  return out;
}

std::vector<double> bootstrap_relative_delta(std::span<const double> control, std::span<const double> treatment,
                                             std::size_t resamples, std::uint64_t seed) {
  std::vector<double> out(resamples);
  const auto n = static_cast<std::int64_t>(resamples);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < n; ++b)
    out[static_cast<std::size_t>(b)] = one_resample(control, treatment, seed, static_cast<std::size_t>(b));
  return out;
}

std::vector<GridPoint> threshold_sweep_serial(std::span<const GatedItem> items, std::span<const double> taus) {
  std::vector<GridPoint> out(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) out[i] = sweep_point(items, taus[i]);
  return out;
}

std::vector<GridPoint> threshold_sweep(std::span<const GatedItem> items, std::span<const double> taus) {
  std::vector<GridPoint> out(taus.size());
  const auto n = static_cast<std::int64_t>(taus.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = sweep_point(items, taus[static_cast<std::size_t>(i)]);
  return out;
}

int parallel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace stepgate::kernels
