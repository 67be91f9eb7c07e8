#include <benchmark/benchmark.h>

#include "capvae/graph.hpp"
#include "capvae/layers.hpp"
#include "capvae/ops.hpp"
#include "capvae/rng.hpp"

namespace {

using namespace capvae;

nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed) {
  nn::Tensor t(std::move(shape), 0.0f);
  CounterRng rng(seed);
  for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_DenseForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  CounterRng rng(1);
  nn::DenseLayer<float> layer("bench", width, width, rng);
  const auto x = random_tensor({batch, width}, 2);
  for (auto _ : state) {
    nn::Graph<float> g;
    auto y = nn::sum(nn::relu(layer(g.constant(x))));
    g.backward(y);
    benchmark::DoNotOptimize(layer.weight.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_DenseForwardBackward)->Args({64, 256})->Args({64, 1024});

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto res = static_cast<std::size_t>(state.range(0));
  const auto ci = static_cast<std::size_t>(state.range(1));
  CounterRng rng(3);
  nn::Conv2dLayer<float> layer("bench", ci, 32, 4, 2, rng);
  const auto x = random_tensor({64, ci, res, res}, 4);
  for (auto _ : state) {
    nn::Graph<float> g;
    auto y = nn::sum(layer(g.constant(x)));
    g.backward(y);
    benchmark::DoNotOptimize(layer.weight.grad.data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({32, 1})->Args({16, 32});

void BM_ConvTransposeForwardBackward(benchmark::State& state) {
  const auto res = static_cast<std::size_t>(state.range(0));
  const auto co = static_cast<std::size_t>(state.range(1));
  CounterRng rng(5);
  nn::ConvTranspose2dLayer<float> layer("bench", 32, co, 4, 2, rng);
  const auto x = random_tensor({64, 32, res, res}, 6);
  for (auto _ : state) {
    nn::Graph<float> g;
    auto y = nn::sum(layer(g.constant(x)));
    g.backward(y);
    benchmark::DoNotOptimize(layer.weight.grad.data());
  }
}
BENCHMARK(BM_ConvTransposeForwardBackward)->Args({8, 32})->Args({16, 1});

}  // namespace
