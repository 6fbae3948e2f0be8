#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rff/errors.hpp"
#include "rff/tensor.hpp"

namespace rff {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers mirror the parameter shapes.
template <typename T>
class BasicAdam {
 public:
  BasicAdam(AdamConfig cfg, ParamList<T> params) : cfg_(cfg), params_(std::move(params)) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  // Applies one update from the gradients currently stored on the
  // parameters. A non-finite gradient aborts before anything is modified.
  void step() {
    for (auto* p : params_) {
      if (!p->grad.same_shape(p->value))
        throw DimensionError("adam: gradient shape " + p->grad.shape() + " for parameter '" +
                             p->name + "' of shape " + p->value.shape());
      if (!p->grad.all_finite())
        throw NumericError("adam: non-finite gradient for parameter '" + p->name + "'");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
        p.value[i] = static_cast<T>(p.value[i] - update);
      }
    }
  }

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const BasicTensor<T>& first_moment(std::size_t k) const { return m_.at(k); }
  const BasicTensor<T>& second_moment(std::size_t k) const { return v_.at(k); }

 private:
  AdamConfig cfg_;
  ParamList<T> params_;
  std::vector<BasicTensor<T>> m_;
  std::vector<BasicTensor<T>> v_;
  long step_ = 0;
};

using Adam = BasicAdam<float>;

// Projects every entry of the given parameters into [-bound, bound].
template <typename T>
void clip_weights(const ParamList<T>& params, double bound) {
  if (!(bound > 0.0)) throw ConfigError("clip bound must be > 0, got " + std::to_string(bound));
  const T c = static_cast<T>(bound);
  for (auto* p : params)
    for (auto& v : p->value.data()) v = std::min(c, std::max(-c, v));
}

}  // namespace rff
