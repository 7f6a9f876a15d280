#include <benchmark/benchmark.h>

#include "nmtk/rng.hpp"
#include "nmtk/tensor.hpp"

using namespace nmtk;

namespace {

Tensor<float> random_matrix(int64_t rows, int64_t cols, uint64_t stream) {
  RngStream rng(7, stream);
  Tensor<float> t({rows, cols});
  for (auto& v : t.values()) v = static_cast<float>(rng.next_u01() - 0.5);
  return t;
}

}  // namespace

static void BM_MatmulNT(benchmark::State& state) {
  int64_t n = state.range(0);
  NoGradGuard<float> ng;
  Tensor<float> a = random_matrix(n, n, 1);
  Tensor<float> b = random_matrix(n, n, 2);
  for (auto _ : state) {
    Tensor<float> c = matmul_nt(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatmulNT)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

static void BM_Softmax(benchmark::State& state) {
  int64_t rows = state.range(0);
  NoGradGuard<float> ng;
  Tensor<float> x = random_matrix(rows, 512, 3);
  for (auto _ : state) {
    Tensor<float> y = softmax(x);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * rows * 512);
}
BENCHMARK(BM_Softmax)->Arg(8)->Arg(64)->Arg(512);

static void BM_LayerNorm(benchmark::State& state) {
  int64_t rows = state.range(0);
  NoGradGuard<float> ng;
  Tensor<float> x = random_matrix(rows, 512, 4);
  Tensor<float> gain({512}), bias({512});
  for (auto& v : gain.values()) v = 1.0f;
  for (auto _ : state) {
    Tensor<float> y = layer_norm(x, gain, bias, 1e-6f);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * rows * 512);
}
BENCHMARK(BM_LayerNorm)->Arg(8)->Arg(64)->Arg(512);

static void BM_TrainingStepBackward(benchmark::State& state) {
  int64_t n = state.range(0);
  Tensor<float> a = random_matrix(n, n, 5);
  a.set_requires_grad(true);
  Tensor<float> b = random_matrix(n, n, 6);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tensor<float> loss = sum(matmul_nt(a, b));
    backward(loss);
    clear_tape<float>();
    a.zero_grad();
    b.zero_grad();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainingStepBackward)->Arg(32)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
