#include <benchmark/benchmark.h>

#include <random>

#include "hcmen/gradcheck_suite.hpp"
#include "hcmen/init.hpp"
#include "hcmen/model.hpp"
#include "hcmen/ops.hpp"
#include "hcmen/ssm.hpp"

namespace {

using namespace hcmen;

void BM_SelectiveScan(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  ParamStore<float> store;
  const auto p = make_ssm_params<float>(store, "ssm", 64, 8, rng);
  const auto x = uniform_tensor<float>({len, 64}, 1.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(selective_scan(p, x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelectiveScan)->RangeMultiplier(2)->Range(1024, 8192)->Complexity(benchmark::oN);

void BM_MambaBlockTrainStep(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  ParamStore<float> store;
  const auto p = make_mamba_block<float>(store, "m", {}, rng);
  const auto x = uniform_tensor<float>({len, 32}, 1.0, rng);
  for (auto _ : state) {
    auto y = sum(mamba_block(p, x));
    backward(y);
    store.zero_grad();
  }
}
BENCHMARK(BM_MambaBlockTrainStep)->Arg(48)->Arg(192);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const auto a = uniform_tensor<float>({n, n}, 1.0, rng);
  const auto b = uniform_tensor<float>({n, n}, 1.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_ModelForward(benchmark::State& state) {
  auto cfg = tiny_gradcheck_config();
  cfg.batch_size = 8;
  HcmenModel<float> model(cfg);
  const auto batch = tiny_gradcheck_batch(cfg, 0);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(batch));
}
BENCHMARK(BM_ModelForward);

}  // namespace

BENCHMARK_MAIN();
