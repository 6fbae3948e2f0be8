#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "rff/tensor.hpp"

namespace rff {

// Deterministic random stream. All stochastic choices in the library draw
// from one of these so that a seed fully determines a run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  template <typename T = float>
  BasicTensor<T> normal_tensor(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    BasicTensor<T> t(rows, cols);
    for (auto& v : t.data()) v = static_cast<T>(stddev * normal());
    return t;
  }

  template <typename T = float>
  BasicTensor<T> uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi) {
    BasicTensor<T> t(rows, cols);
    for (auto& v : t.data()) v = static_cast<T>(lo + (hi - lo) * uniform());
    return t;
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[index(i)]);
    return p;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Independent sub-stream seed for (seed, stream) pairs.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed ^ (stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rff
