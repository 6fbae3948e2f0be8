#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "rff/dataset.hpp"
#include "rff/eval.hpp"
#include "rff/io.hpp"
#include "rff/rng.hpp"

using namespace rff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rff_test_dataset_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_toy(const fs::path& dir) {
  io::write_text(dir / "features.csv", "1,0\n0,1\n1,1\n2,0\n0,2\n2,2\n");
  io::write_text(dir / "labels.csv", "0\n0\n1\n1\n2\n2\n");
  io::write_text(dir / "attributes.csv", "1,0\n0,1\n1,1\n");
  io::write_text(dir / "splits.txt", "seen: 0,1\nunseen: 2\ntrain: 0,2\ntest: 1,3,4,5\n");
}

std::string load_error(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("toy directory loads and validates") {
  auto dir = scratch("toy");
  write_toy(dir);
  auto b = load_dataset(dir);
  CHECK(b.num_classes() == 3);
  CHECK(b.num_examples() == 6);
  CHECK(b.seen_classes == std::vector<int>{0, 1});
  CHECK(b.unseen_classes == std::vector<int>{2});
}

TEST_CASE("load errors name the problem") {
  auto dir = scratch("bad");
  write_toy(dir);
  io::write_text(dir / "labels.csv", "0\n0\n1\n1\n2\n3\n");
  CHECK(load_error(dir).find("label out of range") != std::string::npos);

  write_toy(dir);
  io::write_text(dir / "splits.txt", "seen: 0,1\nunseen: 1,2\ntrain: 0,2\ntest: 1,3,4,5\n");
  CHECK(load_error(dir).find("split overlap") != std::string::npos);

  write_toy(dir);
  io::write_text(dir / "splits.txt", "seen: 0,1\nunseen: 2\ntrain: 0,2\ntest: 0,1,3,4,5\n");
  CHECK(load_error(dir).find("split overlap") != std::string::npos);

  write_toy(dir);
  io::write_text(dir / "features.csv", "1,0\n0,1\n1,1\n2,0\n0,2\n");
  CHECK(load_error(dir).find("dimension mismatch") != std::string::npos);

  write_toy(dir);
  fs::remove(dir / "attributes.csv");
  CHECK(load_error(dir).find("missing file") != std::string::npos);
}

TEST_CASE("synthetic benchmark: determinism, balance and shared clusters") {
  SyntheticSpec spec;
  std::vector<int> cl1, cl2;
  auto a = make_synthetic(spec, &cl1);
  auto b = make_synthetic(spec, &cl2);
  CHECK(a.features == b.features);
  CHECK(a.attributes == b.attributes);
  CHECK(a.labels == b.labels);
  CHECK(cl1 == cl2);
  CHECK(a.feature_dim() == static_cast<std::size_t>(spec.signal_dim + spec.redundancy_dim));
  CHECK(a.num_classes() == 15);

  std::vector<int> count(a.num_classes(), 0);
  for (int y : a.labels) count[y]++;
  for (int c : count) CHECK(c == spec.per_class);

  std::vector<std::set<int>> users(spec.clusters);
  for (std::size_t i = 0; i < a.labels.size(); ++i) users[cl1[i]].insert(a.labels[i]);
  for (const auto& u : users) CHECK(u.size() >= 2);

  spec.seed = 2;
  CHECK_FALSE(make_synthetic(spec).features == a.features);

  SyntheticSpec bad;
  bad.unseen_classes = 1;
  CHECK_THROWS_AS(make_synthetic(bad), ConfigError);
}

TEST_CASE("linear probe on the signal block separates the seen classes") {
  SyntheticSpec spec;
  spec.unseen_classes = 2;
  auto b = split_gzsl(make_synthetic(spec), 0.8, 1);
  auto signal = [&](const std::vector<std::size_t>& idx) {
    Tensor out(idx.size(), spec.signal_dim);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < spec.signal_dim; ++j) out(i, j) = b.features(idx[i], j);
    return out;
  };
  std::vector<std::size_t> test_seen;
  for (auto i : b.test_index)
    if (b.is_seen(b.labels[i])) test_seen.push_back(i);
  SoftmaxTrainConfig cfg;
  cfg.epochs = 300;
  auto probe = train_softmax(signal(b.train_index), b.labels_of(b.train_index), b.seen_classes, cfg);
  auto pred = probe.predict(signal(test_seen));
  auto truth = b.labels_of(test_seen);
  CHECK(per_class_top1(pred, truth, b.seen_classes) >= 95.0);
}

TEST_CASE("redundancy block is label-independent given the cluster (permutation test)") {
  SyntheticSpec spec;
  std::vector<int> clusters;
  auto b = make_synthetic(spec, &clusters);
  const int k = static_cast<int>(b.num_classes());
  const std::size_t d0 = spec.signal_dim, dr = spec.redundancy_dim;

  // Statistic: within-cluster spread of per-label means of the redundancy
  // block, summed over clusters and coordinates.
  auto statistic = [&](const std::vector<int>& labels) {
    double total = 0.0;
    for (int c = 0; c < spec.clusters; ++c) {
      std::vector<std::vector<double>> sum(k, std::vector<double>(dr, 0.0));
      std::vector<int> n(k, 0);
      std::vector<double> grand(dr, 0.0);
      int nc = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (clusters[i] != c) continue;
        ++n[labels[i]];
        ++nc;
        for (std::size_t j = 0; j < dr; ++j) {
          sum[labels[i]][j] += b.features(i, d0 + j);
          grand[j] += b.features(i, d0 + j);
        }
      }
      for (int y = 0; y < k; ++y) {
        if (!n[y]) continue;
        for (std::size_t j = 0; j < dr; ++j) {
          const double diff = sum[y][j] / n[y] - grand[j] / nc;
          total += n[y] * diff * diff;
        }
      }
    }
    return total;
  };
  const double observed = statistic(b.labels);
  Rng rng(77);
  const int perms = 200;
  int as_extreme = 0;
  for (int p = 0; p < perms; ++p) {
    // Shuffle labels within each cluster so cluster membership is preserved.
    std::vector<int> shuffled = b.labels;
    for (int c = 0; c < spec.clusters; ++c) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < shuffled.size(); ++i)
        if (clusters[i] == c) idx.push_back(i);
      auto perm = rng.permutation(idx.size());
      std::vector<int> vals;
      for (auto i : idx) vals.push_back(b.labels[i]);
      for (std::size_t t = 0; t < idx.size(); ++t) shuffled[idx[t]] = vals[perm[t]];
    }
    if (statistic(shuffled) >= observed) ++as_extreme;
  }
  const double p_value = (as_extreme + 1.0) / (perms + 1.0);
  CHECK(p_value > 0.05);
}

TEST_CASE("gzsl split partitions the examples") {
  SyntheticSpec spec;
  auto b = split_gzsl(make_synthetic(spec), 0.8, 3);
  b.validate();
  std::vector<int> train_per_class(b.num_classes(), 0);
  for (auto i : b.train_index) {
    CHECK(b.is_seen(b.labels[i]));
    train_per_class[b.labels[i]]++;
  }
  for (int c : b.seen_classes) CHECK(train_per_class[c] == 80);
  std::vector<std::size_t> all = b.train_index;
  all.insert(all.end(), b.test_index.begin(), b.test_index.end());
  std::sort(all.begin(), all.end());
  CHECK(all.size() == b.num_examples());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  CHECK_THROWS_AS(split_gzsl(make_synthetic(spec), 1.0, 3), ConfigError);
  SyntheticSpec one;
  one.per_class = 1;
  CHECK_THROWS_AS(split_gzsl(make_synthetic(one), 0.5, 3), ContractError);
}

TEST_CASE("save then load reproduces the bundle") {
  SyntheticSpec spec;
  spec.per_class = 12;
  auto b = split_gzsl(make_synthetic(spec), 0.8, 4);
  auto dir = scratch("roundtrip");
  save_dataset(b, dir);
  auto r = load_dataset(dir);
  CHECK(r.labels == b.labels);
  CHECK(r.seen_classes == b.seen_classes);
  CHECK(r.unseen_classes == b.unseen_classes);
  CHECK(r.train_index == b.train_index);
  CHECK(r.test_index == b.test_index);
  REQUIRE(r.features.same_shape(b.features));
  double worst = 0.0;
  for (std::size_t i = 0; i < b.features.size(); ++i)
    worst = std::max(worst, double(std::abs(r.features[i] - b.features[i])));
  for (std::size_t i = 0; i < b.attributes.size(); ++i)
    worst = std::max(worst, double(std::abs(r.attributes[i] - b.attributes[i])));
  CHECK(worst <= 1e-6);
}
