#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rff/dataset.hpp"
#include "rff/eval.hpp"
#include "rff/mapper.hpp"

namespace rff {

// How the embedding z is drawn from the mapper posterior during training.
enum class VarianceMode {
  kLearned,  // z = mu + exp(log_var / 2) * eps with the learned head
  kUnit,     // log_var frozen at 0: z = mu + eps
  kZero,     // z = mu (deterministic, plain structured embedding)
};

VarianceMode parse_variance_mode(const std::string& s);
std::string to_string(VarianceMode m);

struct EmbedConfig {
  double margin = 1.0;
  // Bound on the batch KL; +inf disables the constraint.
  double bound = 0.1;
  double dual_step = 5e-2;
  double dual_init = 1.0;
  bool pin_dual = false;  // hold beta at 0
  double lr = 1e-3;
  int epochs = 100;
  int batch = 64;
  int hidden = 128;
  int samples = 1;  // z draws per example per step
  VarianceMode variance = VarianceMode::kLearned;
  int eval_every = 1;  // 0 disables per-epoch evaluation
  std::uint64_t seed = 1;

  void validate() const;
  bool constraint_active() const {
    return !pin_dual && bound < std::numeric_limits<double>::infinity() &&
           variance != VarianceMode::kZero;
  }
};

// Lagrange multiplier for the KL constraint, projected onto beta >= 0.
struct DualState {
  double beta = 0.0;
  double running_kl = 0.0;  // exponential moving average of the batch KL
  bool primed = false;

  // beta <- max(0, beta + step * (kl - bound))
  void update(double kl, double bound, double step);
  void observe(double kl);
};

struct EmbedStep {
  double hinge = 0.0;
  double kl = 0.0;
  double beta = 0.0;  // value used in this step's objective
};

struct EmbedEpoch {
  int epoch = 0;
  double hinge = 0.0;
  double kl = 0.0;
  double beta = 0.0;  // after the epoch's last update
  double running_kl = 0.0;
  GzslMetrics metrics;
  bool evaluated = false;
};

struct EmbedResult {
  Mapper mapper;
  std::vector<EmbedStep> steps;
  std::vector<EmbedEpoch> epochs;
  DualState dual;
};

// Minimises mean hinge(z) + beta * (KL - bound) over the mapper, with one
// projected dual ascent step on beta per optimiser step.
EmbedResult train_embed(const DatasetBundle& bundle, const EmbedConfig& cfg);

// Columns: epoch,hinge,kl,beta,seen_acc,unseen_acc,H
std::string embed_log_csv(const std::vector<EmbedEpoch>& epochs);

}  // namespace rff
