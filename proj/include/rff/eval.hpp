#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rff/dataset.hpp"
#include "rff/mapper.hpp"
#include "rff/nn.hpp"

namespace rff {

// Percentages in [0, 100].
struct GzslMetrics {
  double unseen = 0.0;  // U
  double seen = 0.0;    // S
  double harmonic = 0.0;  // H
};

// 2SU / (S + U); 0 when either is 0 (including the 0/0 case).
double harmonic_mean(double unseen, double seen);

// Mean over `classes` of the within-class top-1 accuracy, times 100. Every
// class counts equally regardless of its number of examples.
double per_class_top1(std::span<const int> predictions, std::span<const int> labels,
                      std::span<const int> classes);

// Affine softmax classifier. Column j scores class `classes[j]`. Inputs are
// multiplied by `input_scale` before the affine map.
struct SoftmaxModel {
  Linear layer;
  std::vector<int> classes;
  float input_scale = 1.0f;

  std::size_t in_dim() const { return layer.in_dim(); }
  Tensor logits(const Tensor& x);
  std::vector<int> predict(const Tensor& x);
  // Class id -> column, or throws ContractError.
  int column_of(int class_id) const;
};

struct SoftmaxTrainConfig {
  int epochs = 300;
  double lr = 1e-3;
  int batch = 0;  // 0 = full batch
  bool rescale_inputs = true;
  std::uint64_t seed = 0;
};

// Cross-entropy training from a zero initialisation. Rows with labels not in
// `classes` are a ContractError; a class without rows is a ContractError
// listing the missing ids. With rescale_inputs the inputs are divided by
// their root-mean-square entry, a single scalar fitted on the training set.
SoftmaxModel train_softmax(const Tensor& x, std::span<const int> labels,
                           const std::vector<int>& classes, const SoftmaxTrainConfig& cfg);

// Final GZSL classifier over every seen and unseen class, trained on real
// seen features and synthetic unseen features in the redundancy-free space.
SoftmaxModel train_final_softmax(const Tensor& real_seen_z, std::span<const int> real_labels,
                                 const Tensor& synthetic_unseen_z,
                                 std::span<const int> synthetic_labels,
                                 const std::vector<int>& all_classes,
                                 const SoftmaxTrainConfig& cfg);

// Nearest-descriptor rule: argmax over candidates of a_c . embedding, ties to
// the smallest class id.
int predict_embed(std::span<const float> embedding, const Tensor& attributes,
                  std::span<const int> candidates);
std::vector<int> predict_embed(Mapper& mapper, const Tensor& x, const Tensor& attributes,
                               std::span<const int> candidates);

// U/S/H from predictions over the bundle's test partition.
GzslMetrics gzsl_metrics(const DatasetBundle& bundle, std::span<const int> test_predictions);

enum class EvalMode { kGeneration, kEmbedding };

struct Evaluation {
  GzslMetrics metrics;
  std::vector<int> predictions;  // aligned with bundle.test_index
};

// Generation mode: softmax over posterior means of the test features.
Evaluation evaluate_generation(const DatasetBundle& bundle, Mapper& mapper, SoftmaxModel& model);
// Embedding mode: nearest descriptor over all classes.
Evaluation evaluate_embedding(const DatasetBundle& bundle, Mapper& mapper);

}  // namespace rff
