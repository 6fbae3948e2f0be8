#pragma once

#include <cmath>
#include <string>

#include "rff/rng.hpp"
#include "rff/tape.hpp"

namespace rff {

// Frozen layers enter the tape as constants: they shape the forward value
// but never receive gradient.
enum class Grad { kTrainable, kFrozen };

template <typename T>
Var<T> use(Tape<T>& tape, BasicParameter<T>& p, Grad g) {
  return g == Grad::kTrainable ? tape.param(p) : tape.constant(p.value);
}

// y = x W + b with W stored in_dim x out_dim.
template <typename T>
struct BasicLinear {
  BasicParameter<T> weight;
  BasicParameter<T> bias;

  BasicLinear() = default;
  BasicLinear(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", BasicTensor<T>(in, out)),
        bias(name + ".bias", BasicTensor<T>(1, out)) {}

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  // LeCun-normal weights, zero bias.
  void init(Rng& rng) {
    weight.value = rng.normal_tensor<T>(in_dim(), out_dim(), 1.0 / std::sqrt(double(in_dim())));
    bias.value.fill(T(0));
  }

  Var<T> forward(Tape<T>& tape, Var<T> x, Grad g = Grad::kTrainable) {
    if (x.cols() != in_dim())
      throw DimensionError(weight.name + ": input has " + std::to_string(x.cols()) +
                           " columns, layer expects " + std::to_string(in_dim()));
    return ad::add_bias(ad::matmul(x, use(tape, weight, g)), use(tape, bias, g));
  }

  ParamList<T> params() { return {&weight, &bias}; }
};

using Linear = BasicLinear<float>;

}  // namespace rff
