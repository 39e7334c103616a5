// SPDX-License-Identifier: Apache-2.0
#include <random>

#include <benchmark/benchmark.h>

#include "backtest_fixture.hpp"
#include "hflab/backtest.hpp"
#include "hflab/models.hpp"
#include "hflab/nn/loss.hpp"
#include "hflab/nn/ops.hpp"

using namespace hflab;

namespace {

nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return nn::Tensor(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1);
  const auto b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Attention(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({32, L, 66}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::scaled_dot_attention(x, x, x, 6));
}
BENCHMARK(BM_Attention)->Arg(32)->Arg(100);

void BM_HfformerForward(benchmark::State& state) {
  const auto model = models::make_model(models::default_hfformer(1, 100), 1);
  const auto x = random_tensor({32, 100, features::kNumFeatures}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x));
}
BENCHMARK(BM_HfformerForward)->Unit(benchmark::kMillisecond);

void BM_HfformerBackward(benchmark::State& state) {
  const auto model = models::make_model(models::default_hfformer(1, 100), 1);
  const auto x = random_tensor({32, 100, features::kNumFeatures}, 4);
  const auto y = random_tensor({32, 1}, 5);
  for (auto _ : state) {
    model->params().zero_grad();
    nn::mse_loss(model->forward(x), y).backward();
  }
}
BENCHMARK(BM_HfformerBackward)->Unit(benchmark::kMillisecond);

void BM_RunStrategy(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const auto stream = testing::random_walk_stream(rng, 20000);
  const auto sig = testing::random_signal_matrix(rng, 20000);
  backtest::BacktestConfig cfg;
  cfg.main_horizon = 25;
  cfg.signal_horizons = backtest::strategy_horizons(3, 25);
  for (auto _ : state) benchmark::DoNotOptimize(backtest::run_strategy(stream, sig, cfg));
}
BENCHMARK(BM_RunStrategy)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
