#include <benchmark/benchmark.h>

#include <random>

#include "rulforge/ops.hpp"

using namespace rulforge;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto C = static_cast<std::size_t>(state.range(0));
  const auto L = static_cast<std::size_t>(state.range(1));
  const auto x = random_tensor({8, C, L}, 1);
  const auto w = random_tensor({C, C, 3}, 2);
  const auto b = random_tensor({C}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv1d_forward(x, w, b, 4, PaddingMode::CausalLeft));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(8 * C * C * 3 * L));
}
BENCHMARK(BM_Conv1dForward)->Args({16, 200})->Args({200, 200});

void BM_Conv1dBackward(benchmark::State& state) {
  const auto C = static_cast<std::size_t>(state.range(0));
  const auto L = static_cast<std::size_t>(state.range(1));
  const auto x = random_tensor({8, C, L}, 1);
  const auto w = random_tensor({C, C, 3}, 2);
  const auto g = random_tensor({8, C, L}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv1d_backward(g, x, w, 4, PaddingMode::CausalLeft));
  }
}
BENCHMARK(BM_Conv1dBackward)->Args({16, 200})->Args({200, 200});

}  // namespace
