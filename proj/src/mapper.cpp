#include "rff/mapper.hpp"

namespace rff {

GaussianPosterior map_posterior(Mapper& m, const Tensor& x) {
  Tape<float> tape;
  auto post = posterior(tape, m, tape.constant(x), Grad::kFrozen);
  return {post.mu.value(), post.log_var.value()};
}

Tensor sample_reparam(const GaussianPosterior& post, const Tensor& eps) {
  Tape<float> tape;
  PosteriorVars<float> vars{tape.constant(post.mu), tape.constant(post.log_var)};
  return sample_reparam(vars, tape.constant(eps)).value();
}

double kl_to_marginal(const GaussianPosterior& post) {
  if (!post.mu.same_shape(post.log_var))
    throw DimensionError("kl_to_marginal: mu " + post.mu.shape() + " vs log_var " +
                         post.log_var.shape());
  Tape<float> tape;
  PosteriorVars<float> vars{tape.constant(post.mu), tape.constant(post.log_var)};
  return kl_to_marginal(vars).value().item();
}

Tensor map_point(Mapper& m, const Tensor& x) {
  Tape<float> tape;
  return posterior(tape, m, tape.constant(x), Grad::kFrozen).mu.value();
}

}  // namespace rff
