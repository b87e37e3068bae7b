#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "densedyn/dynamics.hpp"
#include "densedyn/layers.hpp"
#include "densedyn/lld.hpp"
#include "densedyn/model.hpp"
#include "densedyn/pca.hpp"

using namespace densedyn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Prng prng(seed);
  for (double& v : t.data()) v = prng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor in = random_tensor({8, 3, side, side}, 1);
  const Tensor w = random_tensor({3, 3, 3, 3}, 2);
  const Tensor b = random_tensor({3}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, w, b));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(128);

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor in = random_tensor({8, 3, 128, 128}, 1);
  const Tensor w = random_tensor({3, 3, 3, 3}, 2);
  const Tensor g = random_tensor({8, 3, 128, 128}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(in, w, g));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2dBackward);

void BM_AdaptivePool(benchmark::State& state) {
  const Tensor in = random_tensor({32, 3, 128, 128}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(adaptive_avg_pool(in, 20, 20));
}
BENCHMARK(BM_AdaptivePool);

void BM_Linear(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor in = random_tensor({batch, 1200}, 5);
  const Tensor w = random_tensor({1024, 1200}, 6);
  const Tensor b = random_tensor({1024}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(linear(in, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Linear)->Arg(1)->Arg(32);

void BM_NetworkForward(benchmark::State& state) {
  Prng init(7);
  const DscNetwork net = build_network(DscConfig{}, init);
  const Tensor batch = random_tensor({32, 3, 128, 128}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(batch, Mode::kEval, nullptr));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_NetworkForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Prng init(7);
  DscNetwork net = build_network(DscConfig{}, init);
  const Tensor batch = random_tensor({32, 3, 128, 128}, 9);
  std::vector<int> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 5);
  Prng drop(1);
  for (auto _ : state) benchmark::DoNotOptimize(net.loss_and_grad(batch, labels, drop));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_PcaHidden(benchmark::State& state) {
  const Tensor x = random_tensor({200, 1024}, 10);
  for (auto _ : state) benchmark::DoNotOptimize(pca(x, 5));
}
BENCHMARK(BM_PcaHidden)->Unit(benchmark::kMillisecond);

void BM_LayerCorrelation(benchmark::State& state) {
  std::vector<Tensor> conv;
  for (std::uint64_t l = 0; l < 5; ++l) conv.push_back(random_tensor({200, 3, 32, 32}, 11 + l));
  for (auto _ : state) benchmark::DoNotOptimize(layer_pair_correlation(conv));
}
BENCHMARK(BM_LayerCorrelation)->Unit(benchmark::kMillisecond);

void BM_LldSelect(benchmark::State& state) {
  std::vector<double> y(60);
  Prng prng(12);
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double x = static_cast<double>(t);
    y[t] = 0.2 + 0.4 / (1 + std::exp(-0.8 * (x - 12))) + 0.38 / (1 + std::exp(-0.3 * (x - 30))) + 0.005 * prng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(select_component_count(y, 3));
}
BENCHMARK(BM_LldSelect)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
