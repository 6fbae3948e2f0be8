#include <vector>

#include "doctest.h"
#include "rff/kernels.hpp"
#include "rff/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace rff;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, std::size_t n, double zero_fraction = 0.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = rng.uniform() < zero_fraction ? T(0) : static_cast<T>(rng.normal());
  return v;
}

template <typename T>
void check_all_variants(std::size_t m, std::size_t k, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto a = random_vec<T>(rng, m * k, 0.3);
  auto b = random_vec<T>(rng, k * n);
  auto at = random_vec<T>(rng, k * m, 0.3);
  auto bt = random_vec<T>(rng, n * k);
  std::vector<T> ref(m * n), par(m * n);

  kernels::gemm_nn_serial<T>(a, b, ref, m, k, n);
  kernels::gemm_nn<T>(a, b, par, m, k, n);
  CHECK(ref == par);

  kernels::gemm_nt_serial<T>(a, bt, ref, m, k, n);
  kernels::gemm_nt<T>(a, bt, par, m, k, n);
  CHECK(ref == par);

  kernels::gemm_tn_serial<T>(at, b, ref, m, k, n);
  kernels::gemm_tn<T>(at, b, par, m, k, n);
  CHECK(ref == par);
}

}  // namespace

TEST_CASE("serial reference computes the plain triple loop") {
  std::vector<float> a{1, 2, 3, 4, 5, 6};  // 2x3
  std::vector<float> b{1, 0, 0, 1, 1, 1};  // 3x2
  std::vector<float> c(4);
  kernels::gemm_nn_serial<float>(a, b, c, 2, 3, 2);
  CHECK(c == std::vector<float>{4, 5, 10, 11});
  // a^T (3x2) * a-as-2x3 (2x3) -> 3x3 Gram matrix of the columns
  std::vector<float> g(9);
  kernels::gemm_tn_serial<float>(a, a, g, 3, 2, 3);
  CHECK(g == std::vector<float>{17, 22, 27, 22, 29, 36, 27, 36, 45});
  std::vector<float> h(4);
  kernels::gemm_nt_serial<float>(a, a, h, 2, 3, 2);
  CHECK(h == std::vector<float>{14, 32, 32, 77});
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {64, 128, 96}, {130, 17, 250}, {7, 300, 1}};
  std::uint64_t seed = 11;
  for (const auto& s : shapes) {
    check_all_variants<float>(s[0], s[1], s[2], seed++);
    check_all_variants<double>(s[0], s[1], s[2], seed++);
  }
}

#ifdef _OPENMP
TEST_CASE("parallel kernels stay bit-identical across thread counts") {
  const int saved = omp_get_max_threads();
  for (int threads : {1, 2, 3, 8}) {
    omp_set_num_threads(threads);
    check_all_variants<float>(97, 129, 65, 100 + threads);
  }
  omp_set_num_threads(saved);
}
#endif
