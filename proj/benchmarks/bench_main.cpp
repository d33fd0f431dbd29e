#include <benchmark/benchmark.h>

#include <random>

#include "hyper3d/layers.hpp"
#include "hyper3d/mapgen.hpp"
#include "hyper3d/metrics.hpp"
#include "hyper3d/network.hpp"
#include "hyper3d/synthfield.hpp"

using namespace hyper3d;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.values()) v = u(eng);
  return t;
}

// first dense block layer: 1 -> 32 filters on a (5, 5, 8) cube
void BM_Conv3dFirstLayer(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({batch, 5, 5, 8, 1}, 1);
  const Tensor k = random_tensor({3, 3, 3, 1, 32}, 2);
  const Tensor b = random_tensor({32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(layers::conv3d_forward(x, k, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Conv3dFirstLayer)->Arg(1)->Arg(96);

// widest dense block layer: 96 -> 32 filters
void BM_Conv3dLastLayer(benchmark::State& state) {
  const Tensor x = random_tensor({96, 5, 5, 8, 96}, 4);
  const Tensor k = random_tensor({3, 3, 3, 96, 32}, 5);
  const Tensor b = random_tensor({32}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(layers::conv3d_forward(x, k, b));
  state.SetItemsProcessed(state.iterations() * 96);
}
BENCHMARK(BM_Conv3dLastLayer)->Unit(benchmark::kMillisecond);

void BM_NetworkForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.out_size = static_cast<std::size_t>(state.range(0));
  const Hyper3DNetReg net(cfg, 1);
  const Tensor x = random_tensor(net.input_shape(96), 7);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, Mode::kEval));
  state.SetItemsProcessed(state.iterations() * 96);
}
BENCHMARK(BM_NetworkForward)->Arg(5)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Hyper3DNetReg net(ModelConfig{}, 1);
  const Tensor x = random_tensor(net.input_shape(96), 8);
  const Tensor grad = random_tensor(net.output_shape(96), 9);
  ForwardCache cache;
  for (auto _ : state) {
    net.forward(x, Mode::kTrain, &cache, 11);
    benchmark::DoNotOptimize(net.backward(cache, grad));
  }
  state.SetItemsProcessed(state.iterations() * 96);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

FieldRaster synthetic_yield(std::size_t side) {
  SynthSpec spec;
  spec.height = side;
  spec.width = side;
  return generate(spec).years.front().yield;
}

void BM_SsimMap(benchmark::State& state) {
  const FieldRaster a = synthetic_yield(static_cast<std::size_t>(state.range(0)));
  FieldRaster b = a;
  for (double& v : b.values()) v *= 1.05;
  const std::size_t window = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ssim_map(a, b, window));
}
BENCHMARK(BM_SsimMap)->Args({128, 3})->Args({128, 11})->Unit(benchmark::kMillisecond);

// overlap averaging with a cheap linear stand-in for the network
void BM_PredictMap(benchmark::State& state) {
  const std::size_t N = static_cast<std::size_t>(state.range(0));
  SynthSpec spec;
  spec.height = 64;
  spec.width = 64;
  const YearData year = generate(spec).years.front();
  const Predictor stub{5, N, kFeatureChannels, [N](const Tensor& x) {
                         const std::size_t b = x.dim(0);
                         Tensor y = N == 1 ? Tensor({b, 1}) : Tensor({b, N, N});
                         const std::size_t per = x.size() / b;
                         for (std::size_t s = 0; s < b; ++s)
                           for (std::size_t o = 0; o < N * N; ++o) y[s * N * N + o] = x[s * per + o];
                         return y;
                       }};
  for (auto _ : state) benchmark::DoNotOptimize(predict_map(stub, year.features, year.yield));
}
BENCHMARK(BM_PredictMap)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
