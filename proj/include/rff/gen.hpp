#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "rff/dataset.hpp"
#include "rff/eval.hpp"
#include "rff/losses.hpp"
#include "rff/mapper.hpp"

namespace rff {

// x~ = G(a, eps): one LeakyReLU hidden layer, linear output in feature space.
// The first layer acting on [a, eps] is stored as two blocks so no
// concatenation is needed: h = a W_a + eps W_eps + b.
template <typename T>
struct BasicGenerator {
  BasicLinear<T> attr_in;
  BasicParameter<T> noise_in;
  BasicLinear<T> out;
  static constexpr double kSlope = 0.2;

  BasicGenerator() = default;
  BasicGenerator(std::size_t attr_dim, std::size_t noise_dim, std::size_t hidden, std::size_t x_dim)
      : attr_in("gen.hidden", attr_dim, hidden),
        noise_in("gen.hidden.noise", BasicTensor<T>(noise_dim, hidden)),
        out("gen.out", hidden, x_dim) {}

  std::size_t attr_dim() const { return attr_in.in_dim(); }
  std::size_t noise_dim() const { return noise_in.value.rows(); }
  std::size_t x_dim() const { return out.out_dim(); }

  void init(Rng& rng) {
    // LeCun over the full fan-in d_a + d_eps.
    const double sd = 1.0 / std::sqrt(double(attr_dim() + noise_dim()));
    attr_in.weight.value = rng.normal_tensor<T>(attr_dim(), attr_in.out_dim(), sd);
    attr_in.bias.value.fill(T(0));
    noise_in.value = rng.normal_tensor<T>(noise_dim(), attr_in.out_dim(), sd);
    out.init(rng);
  }

  Var<T> forward(Tape<T>& tape, Var<T> a, Var<T> eps, Grad g = Grad::kTrainable) {
    if (eps.cols() != noise_dim())
      throw DimensionError("generator: noise has " + std::to_string(eps.cols()) +
                           " columns, expected " + std::to_string(noise_dim()));
    if (a.rows() != eps.rows())
      throw DimensionError("generator: " + std::to_string(a.rows()) + " descriptors vs " +
                           std::to_string(eps.rows()) + " noise rows");
    auto h = ad::add(attr_in.forward(tape, a, g), ad::matmul(eps, use(tape, noise_in, g)));
    return out.forward(tape, ad::leaky_relu(h, static_cast<T>(kSlope)), g);
  }

  ParamList<T> params() { return {&attr_in.weight, &attr_in.bias, &noise_in, &out.weight, &out.bias}; }
};

using Generator = BasicGenerator<float>;

// Unconditional critic on the redundancy-free space: D(z) = w2 relu(W1 z).
template <typename T>
struct BasicCritic {
  BasicLinear<T> hidden;
  BasicLinear<T> out;

  BasicCritic() = default;
  BasicCritic(std::size_t z_dim, std::size_t h)
      : hidden("critic.hidden", z_dim, h), out("critic.out", h, 1) {}

  void init(Rng& rng) {
    hidden.init(rng);
    out.init(rng);
  }
  Var<T> forward(Tape<T>& tape, Var<T> z, Grad g = Grad::kTrainable) {
    return out.forward(tape, ad::relu(hidden.forward(tape, z, g)), g);
  }
  ParamList<T> params() { return {&hidden.weight, &hidden.bias, &out.weight, &out.bias}; }
};

using Critic = BasicCritic<float>;

// One learnable center per seen class; row j belongs to seen_classes[j].
struct ClassCenters {
  Parameter centers;
  std::vector<int> classes;

  int row_of(int class_id) const;
};

// Softmax classifier on the original features, frozen after pretraining.
SoftmaxModel pretrain_classifier(const DatasetBundle& bundle, const SoftmaxTrainConfig& cfg);

// -mean log q(y | x~) with q frozen; y are class ids, each a column of q.
template <typename T>
Var<T> cls_loss(Var<T> x_tilde, BasicLinear<T>& q, T input_scale, const std::vector<int>& classes,
                std::span<const int> y) {
  Tape<T>& tape = *x_tilde.tape;
  std::vector<int> cols(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), y[i]);
    if (it == classes.end())
      throw ContractError("cls_loss: class " + std::to_string(y[i]) + " is not a seen class");
    cols[i] = static_cast<int>(it - classes.begin());
  }
  auto logits = q.forward(tape, ad::scale(x_tilde, input_scale), Grad::kFrozen);
  return ad::softmax_cross_entropy(logits, std::span<const int>(cols));
}

inline Var<float> cls_loss(Var<float> x_tilde, SoftmaxModel& q, std::span<const int> y) {
  return cls_loss(x_tilde, q.layer, q.input_scale, q.classes, y);
}

// Value-level x~ = G(a, eps).
Tensor generate(Generator& gen, const Tensor& a, const Tensor& eps);

struct GenConfig {
  double lambda_r = 0.1;       // center-margin weight
  double lambda_c = 0.5;       // synthetic-feature classification weight
  double bound = 0.1;          // KL bound b; +inf disables both constraints
  double center_margin = 1.0;
  int n_critic = 5;
  double clip = 0.01;
  AdversarialMode mode = AdversarialMode::kWganClip;
  double lr = 1e-3;            // G, M and centers
  double lr_critic = 1e-4;
  double dual_step = 1e-2;
  double dual_init = 1.0;
  bool pin_duals = false;      // hold both duals at 0
  bool kl_fake_to_gen = false;  // let the fake-branch KL term reach G
  int batch = 64;
  int z_dim = 64;
  int noise_dim = 0;           // 0 = attribute dimension
  int gen_hidden = 256;
  int critic_hidden = 128;
  int mapper_hidden = 256;
  int epochs = 40;
  int warmup_epochs = 1;       // epochs before centers exist and L_r switches on
  int synth_count = 200;       // features per unseen class for the final softmax
  int cls_epochs = 300;        // pretrained classifier q
  double cls_lr = 1e-3;
  int final_epochs = 300;      // final softmax
  double final_lr = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
  bool constraints_active() const {
    return !pin_duals && bound < std::numeric_limits<double>::infinity();
  }
};

struct GenModel {
  Generator gen;
  Mapper mapper;
  Critic critic;
  ClassCenters centers;
  SoftmaxModel q;            // pretrained on original seen features
  SoftmaxModel final_model;  // over every class in z-space (after fit_final)
  bool has_final = false;
};

// Every term of the joint objective for one step, plus the critic loss of the
// last critic update before it. total = adv + lambda_r * center + lambda_c *
// cls + beta_real * (kl_real - b) + beta_fake * (kl_fake - b), with betas as
// used in the step (terms with a pinned dual contribute 0).
struct GenStep {
  long step = 0;
  int epoch = 0;
  double critic = 0.0;
  double adv = 0.0;
  double center = 0.0;
  double cls = 0.0;
  double kl_real = 0.0;
  double kl_fake = 0.0;
  double beta_real = 0.0;
  double beta_fake = 0.0;
  double total = 0.0;
  double critic_max_abs = 0.0;  // after the last clip
};

struct GenOptions {
  const Mapper* mapper_init = nullptr;  // start from this mapper instead of a fresh init
  bool freeze_mapper = false;
  const SoftmaxModel* classifier = nullptr;  // reuse a pretrained q
};

struct GenResult {
  GenModel model;
  std::vector<GenStep> steps;
  double final_beta_real = 0.0;
  double final_beta_fake = 0.0;
};

GenResult train_gen(const DatasetBundle& bundle, const GenConfig& cfg, const GenOptions& opt = {});

struct LabeledFeatures {
  Tensor z;
  std::vector<int> labels;
};

// counts[y] features for every listed class, z~ = mean of M(G(a_y, eps)). The
// noise for class y comes from its own stream derive_seed(seed, y).
// With `sample` the features are posterior draws instead of posterior means.
LabeledFeatures synthesize_unseen(Generator& gen, Mapper& mapper, const Tensor& attributes,
                                  const std::map<int, int>& counts, std::uint64_t seed,
                                  bool sample = false);

// Synthesizes `synth_count` features per unseen class and trains the final
// softmax over all classes on them plus the mapped real seen training set.
void fit_final(const DatasetBundle& bundle, GenModel& model, int synth_count, std::uint64_t seed,
               const SoftmaxTrainConfig& cfg, bool sample = false);

// Per-epoch means of the step log.
std::vector<GenStep> gen_epoch_means(const std::vector<GenStep>& steps);
// Columns: step,epoch,critic,adv,center,cls,kl_real,kl_fake,beta_real,beta_fake,total
std::string gen_log_csv(const std::vector<GenStep>& rows);

}  // namespace rff
