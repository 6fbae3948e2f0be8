#pragma once

#include <string>

#include "rff/nn.hpp"

namespace rff {

// Stochastic map from a visual feature to a diagonal Gaussian over the
// redundancy-free space: affine + ReLU trunk, then separate affine heads for
// the mean and the log-variance (no activation on either head).
template <typename T>
struct BasicMapper {
  BasicLinear<T> trunk;
  BasicLinear<T> mu_head;
  BasicLinear<T> logvar_head;

  BasicMapper() = default;
  BasicMapper(std::size_t in_dim, std::size_t hidden, std::size_t z_dim)
      : trunk("mapper.trunk", in_dim, hidden),
        mu_head("mapper.mu", hidden, z_dim),
        logvar_head("mapper.logvar", hidden, z_dim) {}

  std::size_t in_dim() const { return trunk.in_dim(); }
  std::size_t hidden_dim() const { return trunk.out_dim(); }
  std::size_t z_dim() const { return mu_head.out_dim(); }

  // The log-variance head starts at zero so the initial posterior has unit
  // variance everywhere.
  void init(Rng& rng) {
    trunk.init(rng);
    mu_head.init(rng);
    logvar_head.init(rng);
    logvar_head.weight.value.fill(T(0));
  }

  ParamList<T> params() {
    ParamList<T> out;
    for (auto* l : {&trunk, &mu_head, &logvar_head})
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
};

using Mapper = BasicMapper<float>;

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

template <typename T>
struct PosteriorVars {
  Var<T> mu;
  Var<T> log_var;  // already clamped
};

// Value-level posterior for a batch.
struct GaussianPosterior {
  Tensor mu;
  Tensor log_var;
};

template <typename T>
PosteriorVars<T> posterior(Tape<T>& tape, BasicMapper<T>& m, Var<T> x, Grad g = Grad::kTrainable) {
  auto h = ad::relu(m.trunk.forward(tape, x, g));
  auto mu = m.mu_head.forward(tape, h, g);
  auto lv = ad::clamp(m.logvar_head.forward(tape, h, g), static_cast<T>(kLogVarMin),
                      static_cast<T>(kLogVarMax));
  return {mu, lv};
}

// z = mu + exp(log_var / 2) * eps, with eps supplied by the caller.
template <typename T>
Var<T> sample_reparam(const PosteriorVars<T>& post, Var<T> eps) {
  if (!eps.value().same_shape(post.mu.value()))
    throw DimensionError("sample_reparam: eps " + eps.value().shape() + " vs mu " +
                         post.mu.value().shape());
  auto stddev = ad::exp(ad::scale(post.log_var, T(0.5)));
  return ad::add(post.mu, ad::mul(stddev, eps));
}

// Batch mean of KL(N(mu, diag exp(log_var)) || N(0, I)). Each entry
// contributes mu^2 + (exp(lv) - lv - 1), both nonnegative, so the float sum
// carries no catastrophic cancellation.
template <typename T>
Var<T> kl_to_marginal(const PosteriorVars<T>& post) {
  const auto n = static_cast<T>(post.mu.rows());
  auto excess = ad::shift(ad::sub(ad::exp(post.log_var), post.log_var), T(-1));
  auto per_entry = ad::add(ad::square(post.mu), excess);
  return ad::scale(ad::sum(per_entry), T(0.5) / n);
}

GaussianPosterior map_posterior(Mapper& m, const Tensor& x);
Tensor sample_reparam(const GaussianPosterior& post, const Tensor& eps);
double kl_to_marginal(const GaussianPosterior& post);

// Posterior mean; the deterministic map used at inference time.
Tensor map_point(Mapper& m, const Tensor& x);

}  // namespace rff
