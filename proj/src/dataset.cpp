#include "rff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "rff/errors.hpp"
#include "rff/io.hpp"
#include "rff/rng.hpp"

namespace rff {

bool DatasetBundle::is_seen(int c) const {
  return std::find(seen_classes.begin(), seen_classes.end(), c) != seen_classes.end();
}

std::vector<int> DatasetBundle::labels_of(const std::vector<std::size_t>& idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels.at(i));
  return out;
}

void DatasetBundle::validate(bool partitions) const {
  const std::size_t n = labels.size();
  const int c = static_cast<int>(num_classes());
  if (features.rows() != n)
    throw LoadError("dimension mismatch: " + std::to_string(features.rows()) +
                    " feature rows vs " + std::to_string(n) + " labels");
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= c)
      throw LoadError("label out of range: row " + std::to_string(i + 1) + " has label " +
                      std::to_string(labels[i]) + " with " + std::to_string(c) + " classes");
  std::set<int> seen(seen_classes.begin(), seen_classes.end());
  std::set<int> unseen(unseen_classes.begin(), unseen_classes.end());
  for (int s : seen)
    if (unseen.count(s)) throw LoadError("split overlap: class " + std::to_string(s) +
                                         " is both seen and unseen");
  for (int k : seen_classes)
    if (k < 0 || k >= c) throw LoadError("label out of range: seen class " + std::to_string(k));
  for (int k : unseen_classes)
    if (k < 0 || k >= c) throw LoadError("label out of range: unseen class " + std::to_string(k));
  if (static_cast<int>(seen.size() + unseen.size()) != c)
    throw LoadError("seen and unseen classes do not cover all " + std::to_string(c) + " classes");
  if (!partitions) return;

  std::vector<char> mark(n, 0);
  for (auto i : train_index) {
    if (i >= n) throw LoadError("train index " + std::to_string(i) + " out of range");
    if (!seen.count(labels[i]))
      throw LoadError("train index " + std::to_string(i) + " has unseen class " +
                      std::to_string(labels[i]));
    mark[i] = 1;
  }
  bool test_seen = false, test_unseen = false;
  for (auto i : test_index) {
    if (i >= n) throw LoadError("test index " + std::to_string(i) + " out of range");
    if (mark[i]) throw LoadError("split overlap: example " + std::to_string(i) +
                                 " is in both train and test");
    mark[i] = 2;
    (seen.count(labels[i]) ? test_seen : test_unseen) = true;
  }
  if (train_index.empty()) throw LoadError("empty train partition");
  if (!test_seen || !test_unseen)
    throw LoadError("test partition must contain both seen and unseen classes");
}

void SyntheticSpec::validate() const {
  if (seen_classes < 1 || per_class < 1 || signal_dim < 1 || redundancy_dim < 1 ||
      attribute_dim < 1 || clusters < 1)
    throw ConfigError("synthetic spec: all counts must be >= 1");
  if (unseen_classes < 2) throw ConfigError("synthetic spec: need at least 2 unseen classes");
  if (!(noise >= 0.0)) throw ConfigError("synthetic spec: noise must be >= 0");
}

DatasetBundle make_synthetic(const SyntheticSpec& spec, std::vector<int>* clusters) {
  spec.validate();
  Rng rng(spec.seed);
  const int num_classes = spec.seen_classes + spec.unseen_classes;
  const auto d_sig = static_cast<std::size_t>(spec.signal_dim);
  const auto d_red = static_cast<std::size_t>(spec.redundancy_dim);
  const auto d_a = static_cast<std::size_t>(spec.attribute_dim);
  const auto b = static_cast<std::size_t>(spec.clusters);

  DatasetBundle out;
  out.attributes = rng.normal_tensor(num_classes, d_a);
  Tensor signal_map = rng.normal_tensor(d_sig, d_a, 1.0 / std::sqrt(double(d_a)));
  Tensor centers = rng.normal_tensor(b, d_red);

  auto perm = rng.permutation(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < num_classes; ++i)
    (i < spec.seen_classes ? out.seen_classes : out.unseen_classes).push_back(int(perm[i]));
  std::sort(out.seen_classes.begin(), out.seen_classes.end());
  std::sort(out.unseen_classes.begin(), out.unseen_classes.end());

  const std::size_t n = static_cast<std::size_t>(num_classes) * spec.per_class;
  out.features = Tensor(n, d_sig + d_red);
  out.labels.reserve(n);
  std::vector<int> cluster_of(n);
  std::vector<std::set<int>> users(b);
  std::size_t row = 0;
  for (int y = 0; y < num_classes; ++y) {
    auto a = out.attributes.row(y);
    for (int j = 0; j < spec.per_class; ++j, ++row) {
      auto x = out.features.row(row);
      for (std::size_t s = 0; s < d_sig; ++s) {
        double v = 0.0;
        for (std::size_t k = 0; k < d_a; ++k) v += double(signal_map(s, k)) * a[k];
        x[s] = static_cast<float>(v + spec.noise * rng.normal());
      }
      // The first examples of every class cycle through the clusters so each
      // cluster is shared by several classes; the rest are uniform draws.
      const std::size_t cl = j < spec.clusters ? std::size_t(j + y) % b : rng.index(b);
      for (std::size_t r = 0; r < d_red; ++r)
        x[d_sig + r] = static_cast<float>(centers(cl, r) + spec.noise * rng.normal());
      out.labels.push_back(y);
      cluster_of[row] = static_cast<int>(cl);
      users[cl].insert(y);
    }
  }
  for (std::size_t k = 0; k < b; ++k)
    if (users[k].size() < 2)
      throw ConfigError("synthetic spec: background cluster " + std::to_string(k) +
                        " is used by fewer than 2 classes");
  out.validate(false);
  if (clusters) *clusters = std::move(cluster_of);
  return out;
}

DatasetBundle split_gzsl(DatasetBundle bundle, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  bundle.validate(false);
  Rng rng(seed);
  bundle.train_index.clear();
  bundle.test_index.clear();
  for (int c = 0; c < static_cast<int>(bundle.num_classes()); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < bundle.labels.size(); ++i)
      if (bundle.labels[i] == c) members.push_back(i);
    if (!bundle.is_seen(c)) {
      bundle.test_index.insert(bundle.test_index.end(), members.begin(), members.end());
      continue;
    }
    if (members.size() < 2)
      throw ContractError("split error: seen class " + std::to_string(c) + " has " +
                          std::to_string(members.size()) + " examples, need at least 2");
    auto order = rng.permutation(members.size());
    const std::size_t m = members.size();
    auto k = static_cast<std::size_t>(std::floor(train_fraction * double(m) + 1e-9));
    k = std::clamp<std::size_t>(k, 1, m - 1);
    for (std::size_t j = 0; j < m; ++j)
      (j < k ? bundle.train_index : bundle.test_index).push_back(members[order[j]]);
  }
  std::sort(bundle.train_index.begin(), bundle.train_index.end());
  std::sort(bundle.test_index.begin(), bundle.test_index.end());
  bundle.validate(true);
  return bundle;
}

namespace {

template <typename V>
std::string join(const V& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

template <typename V>
V parse_list_line(const std::string& line, const std::string& key, int lineno) {
  const std::string ctx = "splits.txt row " + std::to_string(lineno);
  auto colon = line.find(':');
  if (colon == std::string::npos || io::trim(line.substr(0, colon)) != key)
    throw LoadError(ctx + ": expected '" + key + ":'");
  V out;
  std::string rest = io::trim(line.substr(colon + 1));
  if (rest.empty()) return out;
  for (const auto& f : io::split(rest, ',')) {
    long v = io::parse_int(f, ctx);
    if (v < 0) throw LoadError(ctx + ": negative id " + std::to_string(v));
    out.push_back(static_cast<typename V::value_type>(v));
  }
  return out;
}

}  // namespace

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_matrix_csv(dir / "features.csv", bundle.features);
  io::write_matrix_csv(dir / "attributes.csv", bundle.attributes);
  std::ostringstream labels;
  for (int l : bundle.labels) labels << l << '\n';
  io::write_text(dir / "labels.csv", labels.str());
  std::ostringstream splits;
  splits << "seen: " << join(bundle.seen_classes) << '\n'
         << "unseen: " << join(bundle.unseen_classes) << '\n'
         << "train: " << join(bundle.train_index) << '\n'
         << "test: " << join(bundle.test_index) << '\n';
  io::write_text(dir / "splits.txt", splits.str());
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
  for (const char* f : {"features.csv", "labels.csv", "attributes.csv", "splits.txt"})
    if (!std::filesystem::exists(dir / f))
      throw LoadError("missing file: " + (dir / f).string());
  DatasetBundle b;
  b.features = io::read_matrix_csv(dir / "features.csv");
  b.attributes = io::read_matrix_csv(dir / "attributes.csv");
  auto label_lines = io::read_lines(dir / "labels.csv");
  for (std::size_t r = 0; r < label_lines.size(); ++r) {
    const std::string ctx = "labels.csv row " + std::to_string(r + 1);
    long v = io::parse_int(label_lines[r], ctx);
    if (v < 0 || v >= static_cast<long>(b.attributes.rows()))
      throw LoadError(ctx + ": label out of range (" + std::to_string(v) + " with " +
                      std::to_string(b.attributes.rows()) + " classes)");
    b.labels.push_back(static_cast<int>(v));
  }
  if (b.labels.size() != b.features.rows())
    throw LoadError("labels.csv: dimension mismatch, " + std::to_string(b.labels.size()) +
                    " labels vs " + std::to_string(b.features.rows()) + " rows in features.csv");
  auto split_lines = io::read_lines(dir / "splits.txt");
  if (split_lines.size() != 4)
    throw LoadError("splits.txt: expected 4 lines, found " + std::to_string(split_lines.size()));
  b.seen_classes = parse_list_line<std::vector<int>>(split_lines[0], "seen", 1);
  b.unseen_classes = parse_list_line<std::vector<int>>(split_lines[1], "unseen", 2);
  b.train_index = parse_list_line<std::vector<std::size_t>>(split_lines[2], "train", 3);
  b.test_index = parse_list_line<std::vector<std::size_t>>(split_lines[3], "test", 4);
  for (int s : b.seen_classes)
    if (std::find(b.unseen_classes.begin(), b.unseen_classes.end(), s) != b.unseen_classes.end())
      throw LoadError("splits.txt: split overlap, class " + std::to_string(s) +
                      " listed as both seen and unseen");
  b.validate(true);
  return b;
}

}  // namespace rff
