// Serial reference vs OpenMP variant of each kernel.

#include <benchmark/benchmark.h>

#include <random>

#include "stepgate/kernels/kernels.hpp"

using namespace stepgate::kernels;

namespace {

std::vector<double> durations(std::size_t n, double mean, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> g(2.0, mean / 2.0);
  std::vector<double> out(n);
  for (auto& x : out) x = g(rng);
  return out;
}

std::vector<std::pair<std::string, std::string>> text_pairs(std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(20, 120), ch('a', 'z');
  auto word = [&] {
    std::string s(static_cast<std::size_t>(len(rng)), ' ');
    for (auto& c : s) c = static_cast<char>(ch(rng));
    return s;
  };
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(word(), word());
  return out;
}

std::vector<GatedItem> gated(std::size_t n) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GatedItem> out(n);
  for (auto& it : out) {
    it.score = u(rng);
    it.correct = u(rng) < it.score;
  }
  return out;
}

std::vector<double> grid(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

template <bool Parallel>
void BM_bootstrap(benchmark::State& state) {
  const auto c = durations(static_cast<std::size_t>(state.range(0)), 180.0, 1);
  const auto t = durations(static_cast<std::size_t>(state.range(0)), 140.0, 2);
  for (auto _ : state) {
    auto r = Parallel ? bootstrap_relative_delta(c, t, 2000, 3) : bootstrap_relative_delta_serial(c, t, 2000, 3);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * 2000);
}

template <bool Parallel>
void BM_similarity(benchmark::State& state) {
  const auto pairs = text_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto r = Parallel ? similarity_batch(pairs) : similarity_batch_serial(pairs);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_sweep(benchmark::State& state) {
  const auto items = gated(static_cast<std::size_t>(state.range(0)));
  const auto taus = grid(50);
  for (auto _ : state) {
    auto r = Parallel ? threshold_sweep(items, taus) : threshold_sweep_serial(items, taus);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_bootstrap<false>)->Name("bootstrap/serial")->Arg(1000)->Arg(17000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bootstrap<true>)->Name("bootstrap/omp")->Arg(1000)->Arg(17000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_similarity<false>)->Name("similarity/serial")->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_similarity<true>)->Name("similarity/omp")->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep<false>)->Name("sweep/serial")->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep<true>)->Name("sweep/omp")->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
