// Serial reference vs OpenMP matmul kernels at the shapes training uses.
#include <benchmark/benchmark.h>

#include <vector>

#include "rff/kernels.hpp"
#include "rff/rng.hpp"

namespace {

struct Operands {
  std::vector<float> a, b, c;
};

Operands make(std::size_t m, std::size_t k, std::size_t n) {
  rff::Rng rng(42);
  Operands o{std::vector<float>(m * k), std::vector<float>(k * n), std::vector<float>(m * n)};
  for (auto& v : o.a) v = static_cast<float>(rng.normal());
  for (auto& v : o.b) v = static_cast<float>(rng.normal());
  return o;
}

template <auto Kernel>
void run(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  auto o = make(m, k, n);
  for (auto _ : state) {
    Kernel(o.a, o.b, o.c, m, k, n);
    benchmark::DoNotOptimize(o.c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(m * k * n));
}

void shapes(benchmark::internal::Benchmark* b) {
  // batch x d_x x hidden (mapper trunk), batch x hidden x d_z, full-size trunk
  b->Args({64, 128, 128})->Args({64, 256, 128})->Args({64, 128, 64})->Args({512, 2048, 1024});
}

}  // namespace

BENCHMARK(run<rff::kernels::gemm_nn_serial<float>>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(run<rff::kernels::gemm_nn<float>>)->Name("gemm_nn/omp")->Apply(shapes);
BENCHMARK(run<rff::kernels::gemm_nt_serial<float>>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(run<rff::kernels::gemm_nt<float>>)->Name("gemm_nt/omp")->Apply(shapes);
BENCHMARK(run<rff::kernels::gemm_tn_serial<float>>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(run<rff::kernels::gemm_tn<float>>)->Name("gemm_tn/omp")->Apply(shapes);

BENCHMARK_MAIN();
