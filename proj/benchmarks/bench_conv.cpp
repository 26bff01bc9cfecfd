#include <benchmark/benchmark.h>

#include <random>

#include "sfeat/network.hpp"
#include "sfeat/ops.hpp"

namespace {

sfeat::ad::Tensor random_tensor(const sfeat::ad::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  sfeat::ad::Tensor t(shape);
  for (double& v : t.data) v = u(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto in = random_tensor({c, 64, 64}, 1), k = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) {
    sfeat::ad::Graph g;
    benchmark::DoNotOptimize(sfeat::ad::conv2d(g.constant(in), g.constant(k), {1, 1, 1}).value().data.data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto in = random_tensor({32, 64, 64}, 3), k = random_tensor({32, 32, 3, 3}, 4);
  for (auto _ : state) {
    sfeat::ad::Graph g;
    auto x = g.leaf(in);
    auto w = g.leaf(k);
    g.backward(sfeat::ad::sum(sfeat::ad::conv2d(x, w, {1, 2, 2})));
    benchmark::DoNotOptimize(w.grad().data.data());
  }
}
BENCHMARK(BM_Conv3x3Backward)->Unit(benchmark::kMillisecond);

void BM_DepthwiseSeparable(benchmark::State& state) {
  const auto in = random_tensor({32, 64, 64}, 5), dw = random_tensor({32, 1, 3, 3}, 6),
             pw = random_tensor({32, 32, 1, 1}, 7);
  for (auto _ : state) {
    sfeat::ad::Graph g;
    benchmark::DoNotOptimize(
        sfeat::ad::depthwise_separable_conv(g.constant(in), g.constant(dw), g.constant(pw), 2).value().data.data());
  }
}
BENCHMARK(BM_DepthwiseSeparable)->Unit(benchmark::kMicrosecond);

void BM_NetworkForward(benchmark::State& state) {
  const auto net = sfeat::Network::build(sfeat::BackboneConfig::desk(), 1);
  const auto img = random_tensor({3, 64, 64}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(img).descriptors.data.data());
}
BENCHMARK(BM_NetworkForward)->Unit(benchmark::kMillisecond);

}  // namespace
