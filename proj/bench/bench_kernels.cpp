// Serial reference kernels against the blocked OpenMP kernels.
#include <benchmark/benchmark.h>

#include "bicl/kernels.hpp"
#include "bicl/rng.hpp"

using namespace bicl;

namespace {

template <class T>
Matrix<T> random_matrix(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<T> m(r, c);
  for (T& v : m.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return m;
}

enum class Op { NN, TN, NT };

template <class T, Op op, bool parallel>
void BM_gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int m = static_cast<int>(state.range(2));
  // Shapes are given as C (n x m) = op(A) op(B) with inner dimension k.
  const auto a = op == Op::TN ? random_matrix<T>(k, n, 1) : random_matrix<T>(n, k, 1);
  const auto b = op == Op::NT ? random_matrix<T>(m, k, 2) : random_matrix<T>(k, m, 2);
  Matrix<T> c(n, m);
  for (auto _ : state) {
    if constexpr (parallel) {
      if constexpr (op == Op::NN) kernels::gemm<T>(a.cref(), b.cref(), c.ref());
      if constexpr (op == Op::TN) kernels::gemm_tn<T>(a.cref(), b.cref(), c.ref());
      if constexpr (op == Op::NT) kernels::gemm_nt<T>(a.cref(), b.cref(), c.ref());
    } else {
      if constexpr (op == Op::NN) kernels::serial::gemm<T>(a.cref(), b.cref(), c.ref());
      if constexpr (op == Op::TN) kernels::serial::gemm_tn<T>(a.cref(), b.cref(), c.ref());
      if constexpr (op == Op::NT) kernels::serial::gemm_nt<T>(a.cref(), b.cref(), c.ref());
    }
    benchmark::DoNotOptimize(c.values().data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * k * m);
  state.counters["threads"] = kernels::max_threads();
}

// Training shapes: hidden 64 with 101 columns, the FF block at 256, and a square case.
void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 15, 101})->Args({64, 64, 101})->Args({256, 64, 101})->Args({64, 256, 101})->Args({256, 256, 256});
}

}  // namespace

BENCHMARK(BM_gemm<float, Op::NN, false>)->Apply(shapes)->Name("gemm/f32/serial");
BENCHMARK(BM_gemm<float, Op::NN, true>)->Apply(shapes)->Name("gemm/f32/omp");
BENCHMARK(BM_gemm<double, Op::NN, false>)->Apply(shapes)->Name("gemm/f64/serial");
BENCHMARK(BM_gemm<double, Op::NN, true>)->Apply(shapes)->Name("gemm/f64/omp");
BENCHMARK(BM_gemm<float, Op::TN, false>)->Apply(shapes)->Name("gemm_tn/f32/serial");
BENCHMARK(BM_gemm<float, Op::TN, true>)->Apply(shapes)->Name("gemm_tn/f32/omp");
BENCHMARK(BM_gemm<float, Op::NT, false>)->Apply(shapes)->Name("gemm_nt/f32/serial");
BENCHMARK(BM_gemm<float, Op::NT, true>)->Apply(shapes)->Name("gemm_nt/f32/omp");

BENCHMARK_MAIN();
