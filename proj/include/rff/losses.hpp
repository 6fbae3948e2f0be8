#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rff/nn.hpp"

namespace rff {

template <typename T>
BasicTensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  BasicTensor<T> out(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes)
      throw ContractError("one_hot: label " + std::to_string(labels[r]) + " outside [0, " +
                          std::to_string(classes) + ")");
    out(r, static_cast<std::size_t>(labels[r])) = T(1);
  }
  return out;
}

// Structured ranking hinge on embeddings z (rows) against the descriptor of
// the true class and one other class:
//   mean_i max(0, margin - a_pos_i . z_i + a_neg_i . z_i)
// `attributes` has one descriptor row per class id.
template <typename T>
Var<T> sje_hinge(Var<T> z, const BasicTensor<T>& attributes, std::span<const int> pos,
                 std::span<const int> neg, T margin) {
  Tape<T>& tape = *z.tape;
  if (pos.size() != z.rows() || neg.size() != z.rows())
    throw DimensionError("sje_hinge: label count does not match batch");
  if (attributes.cols() != z.cols())
    throw DimensionError("sje_hinge: embedding dim " + std::to_string(z.cols()) +
                         " vs descriptor dim " + std::to_string(attributes.cols()));
  for (std::size_t i = 0; i < pos.size(); ++i)
    if (pos[i] == neg[i])
      throw ContractError("sje_hinge: negative class equals positive class on row " +
                          std::to_string(i));
  std::vector<std::size_t> pi(pos.begin(), pos.end()), ni(neg.begin(), neg.end());
  auto a_pos = tape.constant(attributes.gather_rows(pi));
  auto a_neg = tape.constant(attributes.gather_rows(ni));
  auto gap = ad::row_sum(ad::mul(ad::sub(a_neg, a_pos), z));
  return ad::mean(ad::hinge(ad::shift(gap, margin)));
}

// Same hinge with the descriptor rows given directly.
template <typename T>
Var<T> sje_hinge(Var<T> z, Var<T> a_pos, Var<T> a_neg, T margin) {
  auto gap = ad::row_sum(ad::mul(ad::sub(a_neg, a_pos), z));
  return ad::mean(ad::hinge(ad::shift(gap, margin)));
}

// Center-margin loss, batch mean of
//   max(0, margin + |z - c_y|^2 - |z - c_y'|^2).
// Labels index rows of `centers`.
template <typename T>
Var<T> center_margin_loss(Var<T> z, std::span<const int> y, std::span<const int> y_other,
                          Var<T> centers, T margin) {
  Tape<T>& tape = *z.tape;
  const std::size_t k = centers.rows();
  if (centers.cols() != z.cols())
    throw DimensionError("center_margin_loss: z dim " + std::to_string(z.cols()) +
                         " vs center dim " + std::to_string(centers.cols()));
  if (y.size() != z.rows() || y_other.size() != z.rows())
    throw DimensionError("center_margin_loss: label count does not match batch");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == y_other[i])
      throw ContractError("center_margin_loss: y' equals y on row " + std::to_string(i));
  auto c_pos = ad::matmul(tape.constant(one_hot<T>(y, k)), centers);
  auto c_neg = ad::matmul(tape.constant(one_hot<T>(y_other, k)), centers);
  auto d_pos = ad::row_sum(ad::square(ad::sub(z, c_pos)));
  auto d_neg = ad::row_sum(ad::square(ad::sub(z, c_neg)));
  return ad::mean(ad::hinge(ad::shift(ad::sub(d_pos, d_neg), margin)));
}

enum class AdversarialMode { kWganClip, kMinimax };

AdversarialMode parse_adversarial_mode(std::string_view s);
std::string to_string(AdversarialMode m);

// log D(z) and log(1 - D(z)) for D = sigmoid(s), computed stably as negated
// two-way cross-entropies over logits [0, s].
template <typename T>
Var<T> log_sigmoid_pair(Var<T> scores, int target) {
  Tape<T>& tape = *scores.tape;
  auto lift = tape.constant(BasicTensor<T>::from_rows({{T(0), T(1)}}));
  auto logits = ad::matmul(scores, lift);
  std::vector<int> labels(scores.rows(), target);
  return ad::scale(ad::softmax_cross_entropy(logits, std::span<const int>(labels)), T(-1));
}

template <typename T>
struct AdversarialLosses {
  Var<T> critic;     // minimized by the critic
  Var<T> generator;  // minimized by the generator side
};

// Critic and generator-side objectives from critic scores on real and fake
// batches (scores are rows x 1).
//   wgan-clip: critic E[D(fake)] - E[D(real)], generator -E[D(fake)]
//   minimax:   critic -(E[log D(real)] + E[log(1 - D(fake))]),
//              generator E[log(1 - D(fake))]
template <typename T>
AdversarialLosses<T> adversarial_losses(Var<T> real_scores, Var<T> fake_scores,
                                        AdversarialMode mode) {
  if (real_scores.cols() != 1 || fake_scores.cols() != 1)
    throw DimensionError("adversarial_losses: critic scores must be a column");
  if (mode == AdversarialMode::kWganClip) {
    auto fake_mean = ad::mean(fake_scores);
    return {ad::sub(fake_mean, ad::mean(real_scores)), ad::scale(fake_mean, T(-1))};
  }
  auto log_d_real = log_sigmoid_pair(real_scores, 1);
  auto log_not_d_fake = log_sigmoid_pair(fake_scores, 0);
  return {ad::scale(ad::add(log_d_real, log_not_d_fake), T(-1)), log_not_d_fake};
}

}  // namespace rff
