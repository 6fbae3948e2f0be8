#include "rff/kernels.hpp"

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rff::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelThreshold = 1 << 16;

bool worth_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return m > 1 && m * k * n >= kParallelThreshold;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void gemm_nn_serial(std::span<const T> a, std::span<const T> b, std::span<T> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Accum<T> acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<Accum<T>>(a[i * k + p]) * static_cast<Accum<T>>(b[p * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel if (worth_parallel(m, k, n))
  {
    std::vector<Accum<T>> acc(n);
#pragma omp for schedule(static)
    for (long i = 0; i < rows; ++i) {
      std::fill(acc.begin(), acc.end(), Accum<T>(0));
      const T* arow = pa + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const Accum<T> aip = arow[p];
        const T* brow = pb + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<Accum<T>>(brow[j]);
      }
      T* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
    }
  }
}

template <typename T>
void gemm_nt_serial(std::span<const T> a, std::span<const T> b, std::span<T> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Accum<T> acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<Accum<T>>(a[i * k + p]) * static_cast<Accum<T>>(b[j * k + p]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  // b^T laid out k x n turns this into the streaming nn kernel.
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn<T>(a, bt, c, m, k, n);
}

template <typename T>
void gemm_tn_serial(std::span<const T> a, std::span<const T> b, std::span<T> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Accum<T> acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<Accum<T>>(a[p * m + i]) * static_cast<Accum<T>>(b[p * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel if (worth_parallel(m, k, n))
  {
    // Each thread owns a contiguous block of output rows and sweeps p in
    // ascending order over it, preserving the serial summation order.
    long begin = 0;
    long end = rows;
#ifdef _OPENMP
    const long nt = omp_get_num_threads();
    const long tid = omp_get_thread_num();
    const long chunk = (rows + nt - 1) / nt;
    begin = std::min(rows, tid * chunk);
    end = std::min(rows, begin + chunk);
#endif
    const std::size_t span_rows = static_cast<std::size_t>(end - begin);
    std::vector<Accum<T>> acc(span_rows * n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const T* arow = pa + p * m;
      const T* brow = pb + p * n;
      for (std::size_t r = 0; r < span_rows; ++r) {
        const Accum<T> api = arow[begin + static_cast<long>(r)];
        if (api == 0) continue;  // adding +0.0 products leaves acc unchanged
        Accum<T>* out = acc.data() + r * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) out[j] += api * static_cast<Accum<T>>(brow[j]);
      }
    }
    for (std::size_t r = 0; r < span_rows; ++r)
      for (std::size_t j = 0; j < n; ++j)
        pc[(begin + static_cast<long>(r)) * n + j] = static_cast<T>(acc[r * n + j]);
  }
}

#define RFF_INSTANTIATE(T)                                                                \
  template void gemm_nn_serial<T>(std::span<const T>, std::span<const T>, std::span<T>,  \
                                  std::size_t, std::size_t, std::size_t);                \
  template void gemm_nn<T>(std::span<const T>, std::span<const T>, std::span<T>,         \
                           std::size_t, std::size_t, std::size_t);                       \
  template void gemm_nt_serial<T>(std::span<const T>, std::span<const T>, std::span<T>,  \
                                  std::size_t, std::size_t, std::size_t);                \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>,         \
                           std::size_t, std::size_t, std::size_t);                       \
  template void gemm_tn_serial<T>(std::span<const T>, std::span<const T>, std::span<T>,  \
                                  std::size_t, std::size_t, std::size_t);                \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>,         \
                           std::size_t, std::size_t, std::size_t);

RFF_INSTANTIATE(float)
RFF_INSTANTIATE(double)
RFF_INSTANTIATE(long double)

#undef RFF_INSTANTIATE

}  // namespace rff::kernels
