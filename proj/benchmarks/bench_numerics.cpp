#include <benchmark/benchmark.h>

#include "bevworld/numerics/graph.hpp"
#include "bevworld/numerics/rng.hpp"

using namespace bevworld::num;

namespace {

Tensor random_tensor(const Shape& shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

static void BM_MatmulForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Var a = constant(random_tensor({n, n}, 1));
  Var b = constant(random_tensor({n, n}, 2));
  for (auto _ : state) {
    Var c = matmul(a, b);
    benchmark::DoNotOptimize(c->value.data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(128)->Arg(256)->Complexity();

static void BM_MlpTrainStep(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  Var x = constant(random_tensor({rows, 32}, 3));
  Var w1 = leaf(random_tensor({32, 64}, 4));
  Var w2 = leaf(random_tensor({64, 10}, 5));
  for (auto _ : state) {
    w1->grad = Tensor::zeros(w1->value.shape());
    w2->grad = Tensor::zeros(w2->value.shape());
    w1->backward_ran = w2->backward_ran = false;
    Var loss = mean_all(square(matmul(tanh(matmul(x, w1)), w2)));
    backward(loss);
    benchmark::DoNotOptimize(w1->grad.data());
  }
}
BENCHMARK(BM_MlpTrainStep)->Arg(1024)->Arg(8192);
