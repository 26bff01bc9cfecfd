#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "sfeat/match.hpp"

namespace {

sfeat::KeypointSet random_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  sfeat::KeypointSet s;
  s.dim = dim;
  s.keypoints.resize(n);
  s.descriptors.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    float norm = 0.0f;
    for (std::size_t k = 0; k < dim; ++k) {
      const float v = g(rng);
      s.descriptors[i * dim + k] = v;
      norm += v * v;
    }
    for (std::size_t k = 0; k < dim; ++k) s.descriptors[i * dim + k] /= std::sqrt(norm);
  }
  return s;
}

void BM_MutualMatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_set(n, 128, 1), b = random_set(n, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sfeat::match(a, b, sfeat::MatchPolicy::kMutual));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MutualMatch)->RangeMultiplier(2)->Range(625, 5000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_NearestMatch(benchmark::State& state) {
  const auto a = random_set(5000, 128, 3), b = random_set(5000, 128, 4);
  for (auto _ : state) benchmark::DoNotOptimize(sfeat::match(a, b, sfeat::MatchPolicy::kNearest));
}
BENCHMARK(BM_NearestMatch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
