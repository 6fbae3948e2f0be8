#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rff/tensor.hpp"

namespace rff {

// Features, labels and class descriptors with a seen/unseen class split and a
// train/test example partition. Training examples come from seen classes
// only; the test partition mixes seen and unseen classes.
struct DatasetBundle {
  Tensor features;     // N x d_x
  std::vector<int> labels;
  Tensor attributes;   // C x d_a, row = class id
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;

  std::size_t num_examples() const { return labels.size(); }
  std::size_t num_classes() const { return attributes.rows(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t attribute_dim() const { return attributes.cols(); }

  bool is_seen(int c) const;

  // Throws LoadError naming the violated invariant. Partition invariants are
  // checked only when `partitions` is set.
  void validate(bool partitions = true) const;

  Tensor rows(const std::vector<std::size_t>& idx) const { return features.gather_rows(idx); }
  std::vector<int> labels_of(const std::vector<std::size_t>& idx) const;
};

struct SyntheticSpec {
  int seen_classes = 10;
  int unseen_classes = 5;
  int per_class = 100;
  int signal_dim = 16;
  int redundancy_dim = 112;
  int attribute_dim = 8;
  int clusters = 4;
  double noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

// Class-conditional signal block (a fixed random linear image of the class
// descriptor plus noise) concatenated with a label-independent redundancy
// block drawn from background clusters shared by all classes. Examples are
// returned class-major with empty train/test partitions. When `clusters` is
// given it receives the background cluster id of every example.
DatasetBundle make_synthetic(const SyntheticSpec& spec, std::vector<int>* clusters = nullptr);

// Per seen class: floor(fraction * n) examples (at least 1, at most n - 1)
// go to train; the remaining seen examples and every unseen example go to
// test. Within a class the choice is a seeded shuffle.
DatasetBundle split_gzsl(DatasetBundle bundle, double train_fraction, std::uint64_t seed = 0);

// Directory format: features.csv, labels.csv, attributes.csv, splits.txt.
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_dataset(const std::filesystem::path& dir);

}  // namespace rff
