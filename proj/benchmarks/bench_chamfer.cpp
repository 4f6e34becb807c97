#include <benchmark/benchmark.h>

#include "bevworld/eval/chamfer.hpp"
#include "bevworld/numerics/rng.hpp"

using namespace bevworld;

static num::Tensor cloud(int n, uint64_t seed) {
  num::Rng rng(seed);
  num::Tensor t = num::Tensor::zeros({n, 3});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-18.0, 18.0);
  return t;
}

static void BM_Chamfer(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = cloud(n, 1);
  const auto b = cloud(n, 2);
  for (auto _ : state) {
    auto r = eval::chamfer(a, b, 20.0);
    benchmark::DoNotOptimize(r.cd);
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_Chamfer)->Arg(128)->Arg(512)->Arg(2048)->Complexity();

BENCHMARK_MAIN();
