#pragma once

#include <cstddef>
#include <span>
#include <type_traits>

namespace rff {
// Accumulator for reductions over T: double, or long double for the
// extended-precision reference path.
template <typename T>
using Accum = std::conditional_t<(sizeof(T) > sizeof(double)), long double, double>;
}  // namespace rff

// Dense matrix-multiply kernels behind the tape's matmul primitive.
//
// Every kernel accumulates each output element in Accum<T> (double for float/double), summing over the
// shared dimension in ascending index order. The OpenMP variants partition
// work over output rows only, so they produce results bit-identical to the
// serial reference for any thread count.
namespace rff::kernels {

// c[m x n] = a[m x k] * b[k x n]
template <typename T>
void gemm_nn_serial(std::span<const T> a, std::span<const T> b, std::span<T> c,
                    std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);

// c[m x n] = a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt_serial(std::span<const T> a, std::span<const T> b, std::span<T> c,
                    std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);

// c[m x n] = a[k x m]^T * b[k x n]
template <typename T>
void gemm_tn_serial(std::span<const T> a, std::span<const T> b, std::span<T> c,
                    std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n);

// Threads available to the parallel kernels (1 when built without OpenMP).
int max_threads();

}  // namespace rff::kernels
