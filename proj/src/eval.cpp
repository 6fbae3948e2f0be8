#include "rff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rff/optim.hpp"
#include "rff/rng.hpp"

namespace rff {

double harmonic_mean(double unseen, double seen) {
  if (unseen < 0.0 || seen < 0.0) throw ContractError("harmonic_mean: negative accuracy");
  if (unseen == 0.0 || seen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

double per_class_top1(std::span<const int> predictions, std::span<const int> labels,
                      std::span<const int> classes) {
  if (predictions.size() != labels.size())
    throw DimensionError("per_class_top1: " + std::to_string(predictions.size()) +
                         " predictions for " + std::to_string(labels.size()) + " labels");
  if (classes.empty()) throw ContractError("per_class_top1: empty class set");
  std::map<int, std::pair<long, long>> tally;  // class -> (correct, total)
  for (int c : classes) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end()) continue;
    ++it->second.second;
    if (predictions[i] == labels[i]) ++it->second.first;
  }
  double acc = 0.0;
  for (const auto& [c, ct] : tally) {
    if (ct.second == 0)
      throw ContractError("per_class_top1: class " + std::to_string(c) + " has no test examples");
    acc += static_cast<double>(ct.first) / static_cast<double>(ct.second);
  }
  return 100.0 * acc / static_cast<double>(tally.size());
}

int SoftmaxModel::column_of(int class_id) const {
  auto it = std::find(classes.begin(), classes.end(), class_id);
  if (it == classes.end())
    throw ContractError("softmax model has no column for class " + std::to_string(class_id));
  return static_cast<int>(it - classes.begin());
}

Tensor SoftmaxModel::logits(const Tensor& x) {
  Tape<float> tape;
  auto in = ad::scale(tape.constant(x), input_scale);
  return layer.forward(tape, in, Grad::kFrozen).value();
}

std::vector<int> SoftmaxModel::predict(const Tensor& x) {
  Tensor l = logits(x);
  std::vector<int> out(l.rows());
  for (std::size_t r = 0; r < l.rows(); ++r) {
    auto row = l.row(r);
    // First maximum wins; columns follow `classes` order.
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = classes[best];
  }
  return out;
}

SoftmaxModel train_softmax(const Tensor& x, std::span<const int> labels,
                           const std::vector<int>& classes, const SoftmaxTrainConfig& cfg) {
  if (x.rows() != labels.size())
    throw DimensionError("train_softmax: " + std::to_string(x.rows()) + " rows vs " +
                         std::to_string(labels.size()) + " labels");
  SoftmaxModel model;
  model.classes = classes;
  std::vector<int> cols(labels.size());
  std::vector<int> count(classes.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cols[i] = model.column_of(labels[i]);
    ++count[static_cast<std::size_t>(cols[i])];
  }
  std::ostringstream missing;
  for (std::size_t j = 0; j < classes.size(); ++j)
    if (count[j] == 0) missing << (missing.tellp() > 0 ? "," : "") << classes[j];
  if (missing.tellp() > 0)
    throw ContractError("train_softmax: no training rows for classes " + missing.str());

  if (cfg.rescale_inputs) {
    double ss = 0.0;
    for (float v : x.data()) ss += double(v) * v;
    const double rms = std::sqrt(ss / std::max<std::size_t>(1, x.size()));
    model.input_scale = rms > 0.0 ? static_cast<float>(1.0 / rms) : 1.0f;
  }
  model.layer = Linear("softmax", x.cols(), classes.size());  // zero init
  Adam opt({.lr = cfg.lr}, model.layer.params());
  Rng rng(cfg.seed);
  const std::size_t n = x.rows();
  const std::size_t batch = cfg.batch <= 0 ? n : std::min<std::size_t>(n, cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (batch == n) {
      order.resize(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
    } else {
      order = rng.permutation(n);
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      std::vector<int> y;
      for (auto i : idx) y.push_back(cols[i]);
      Tape<float> tape;
      auto in = ad::scale(tape.constant(batch == n ? x : x.gather_rows(idx)), model.input_scale);
      auto loss = ad::softmax_cross_entropy(model.layer.forward(tape, in),
                                            std::span<const int>(y));
      tape.backward(loss);
      opt.step();
    }
  }
  return model;
}

SoftmaxModel train_final_softmax(const Tensor& real_seen_z, std::span<const int> real_labels,
                                 const Tensor& synthetic_unseen_z,
                                 std::span<const int> synthetic_labels,
                                 const std::vector<int>& all_classes,
                                 const SoftmaxTrainConfig& cfg) {
  if (real_seen_z.cols() != synthetic_unseen_z.cols() && synthetic_unseen_z.rows() > 0)
    throw DimensionError("train_final_softmax: real and synthetic feature dims differ");
  Tensor x(real_seen_z.rows() + synthetic_unseen_z.rows(), real_seen_z.cols());
  std::copy(real_seen_z.data().begin(), real_seen_z.data().end(), x.data().begin());
  std::copy(synthetic_unseen_z.data().begin(), synthetic_unseen_z.data().end(),
            x.data().begin() + static_cast<long>(real_seen_z.size()));
  std::vector<int> y(real_labels.begin(), real_labels.end());
  y.insert(y.end(), synthetic_labels.begin(), synthetic_labels.end());
  return train_softmax(x, y, all_classes, cfg);
}

int predict_embed(std::span<const float> embedding, const Tensor& attributes,
                  std::span<const int> candidates) {
  if (candidates.empty()) throw ContractError("predict_embed: empty candidate set");
  if (embedding.size() != attributes.cols())
    throw DimensionError("predict_embed: embedding dim " + std::to_string(embedding.size()) +
                         " vs descriptor dim " + std::to_string(attributes.cols()));
  int best = -1;
  double best_score = 0.0;
  for (int c : candidates) {
    if (c < 0 || static_cast<std::size_t>(c) >= attributes.rows())
      throw ContractError("predict_embed: candidate class " + std::to_string(c) +
                          " has no descriptor");
    auto a = attributes.row(static_cast<std::size_t>(c));
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += double(a[k]) * embedding[k];
    if (best < 0 || s > best_score || (s == best_score && c < best)) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

std::vector<int> predict_embed(Mapper& mapper, const Tensor& x, const Tensor& attributes,
                               std::span<const int> candidates) {
  Tensor z = map_point(mapper, x);
  std::vector<int> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) out[r] = predict_embed(z.row(r), attributes, candidates);
  return out;
}

GzslMetrics gzsl_metrics(const DatasetBundle& bundle, std::span<const int> test_predictions) {
  auto labels = bundle.labels_of(bundle.test_index);
  GzslMetrics m;
  m.unseen = per_class_top1(test_predictions, labels, bundle.unseen_classes);
  m.seen = per_class_top1(test_predictions, labels, bundle.seen_classes);
  m.harmonic = harmonic_mean(m.unseen, m.seen);
  return m;
}

namespace {

std::vector<int> all_classes(const DatasetBundle& b) {
  std::vector<int> c(b.num_classes());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<int>(i);
  return c;
}

}  // namespace

Evaluation evaluate_generation(const DatasetBundle& bundle, Mapper& mapper, SoftmaxModel& model) {
  auto classes = all_classes(bundle);
  for (int c : classes) model.column_of(c);  // candidate set is always every class
  Evaluation ev;
  ev.predictions = model.predict(map_point(mapper, bundle.rows(bundle.test_index)));
  ev.metrics = gzsl_metrics(bundle, ev.predictions);
  return ev;
}

Evaluation evaluate_embedding(const DatasetBundle& bundle, Mapper& mapper) {
  auto classes = all_classes(bundle);
  Evaluation ev;
  ev.predictions = predict_embed(mapper, bundle.rows(bundle.test_index), bundle.attributes, classes);
  ev.metrics = gzsl_metrics(bundle, ev.predictions);
  return ev;
}

}  // namespace rff
