#include "rff/embed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rff/io.hpp"
#include "rff/losses.hpp"
#include "rff/optim.hpp"
#include "rff/rng.hpp"

namespace rff {

VarianceMode parse_variance_mode(const std::string& s) {
  if (s == "learned") return VarianceMode::kLearned;
  if (s == "unit") return VarianceMode::kUnit;
  if (s == "zero") return VarianceMode::kZero;
  throw ConfigError("unknown variance mode '" + s + "' (learned|unit|zero)");
}

std::string to_string(VarianceMode m) {
  switch (m) {
    case VarianceMode::kLearned: return "learned";
    case VarianceMode::kUnit: return "unit";
    case VarianceMode::kZero: return "zero";
  }
  return "?";
}

void EmbedConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("embed.margin must be > 0");
  if (!(bound >= 0.0)) throw ConfigError("embed.bound must be >= 0");
  if (!(dual_step >= 0.0)) throw ConfigError("embed.dual_step must be >= 0");
  if (!(dual_init >= 0.0)) throw ConfigError("embed.dual_init must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("embed.lr must be > 0");
  if (epochs < 1 || batch < 1 || hidden < 1 || samples < 1)
    throw ConfigError("embed: epochs, batch, hidden and samples must be >= 1");
}

void DualState::update(double kl, double bound, double step) {
  beta = std::max(0.0, beta + step * (kl - bound));
}

void DualState::observe(double kl) {
  constexpr double kDecay = 0.98;
  running_kl = primed ? kDecay * running_kl + (1.0 - kDecay) * kl : kl;
  primed = true;
}

namespace {

// Negative class per row: uniform over the seen classes other than the label.
std::vector<int> draw_negatives(Rng& rng, const std::vector<int>& labels,
                                const std::vector<int>& seen) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int c;
    do {
      c = seen[rng.index(seen.size())];
    } while (c == labels[i]);
    out[i] = c;
  }
  return out;
}

template <typename V>
V repeat(const V& v, int times) {
  V out;
  for (int t = 0; t < times; ++t) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace

EmbedResult train_embed(const DatasetBundle& bundle, const EmbedConfig& cfg) {
  cfg.validate();
  bundle.validate(true);
  if (bundle.seen_classes.size() < 2)
    throw ContractError("train_embed: need at least 2 seen classes for negatives");

  EmbedResult res;
  Rng rng(cfg.seed);
  res.mapper = Mapper(bundle.feature_dim(), static_cast<std::size_t>(cfg.hidden),
                      bundle.attribute_dim());
  res.mapper.init(rng);

  ParamList<float> params = {&res.mapper.trunk.weight, &res.mapper.trunk.bias,
                             &res.mapper.mu_head.weight, &res.mapper.mu_head.bias};
  if (cfg.variance == VarianceMode::kLearned)
    for (auto* p : res.mapper.logvar_head.params()) params.push_back(p);
  Adam opt({.lr = cfg.lr}, params);

  const bool constrained = cfg.constraint_active();
  res.dual.beta = constrained ? cfg.dual_init : 0.0;
  const float margin = static_cast<float>(cfg.margin);
  const std::size_t n = bundle.train_index.size();
  const std::size_t batch = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.batch));
  const std::size_t d_z = bundle.attribute_dim();
  long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = rng.permutation(n);
    EmbedEpoch log;
    log.epoch = epoch;
    std::size_t steps_in_epoch = 0;
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<std::size_t> idx;
      for (std::size_t j = start; j < end; ++j) idx.push_back(bundle.train_index[order[j]]);
      auto y = bundle.labels_of(idx);
      auto neg = draw_negatives(rng, y, bundle.seen_classes);
      const std::size_t rows = idx.size() * static_cast<std::size_t>(cfg.samples);

      Tape<float> tape;
      auto x = tape.constant(bundle.rows(idx));
      auto post = posterior(tape, res.mapper, x);
      if (cfg.variance == VarianceMode::kUnit) post.log_var = tape.constant(Tensor(idx.size(), d_z));
      Var<float> z = post.mu;
      Var<float> kl{};
      bool have_kl = cfg.variance != VarianceMode::kZero;
      if (have_kl) {
        kl = kl_to_marginal(post);
        PosteriorVars<float> rep = post;
        if (cfg.samples > 1) {
          // Stack `samples` copies of the batch via a constant selector.
          Tensor sel(rows, idx.size());
          for (std::size_t r = 0; r < rows; ++r) sel(r, r % idx.size()) = 1.0f;
          auto s = tape.constant(sel);
          rep = {ad::matmul(s, post.mu), ad::matmul(s, post.log_var)};
        }
        z = sample_reparam(rep, tape.constant(rng.normal_tensor(rows, d_z)));
      }
      auto y_rep = repeat(y, have_kl ? cfg.samples : 1);
      auto neg_rep = repeat(neg, have_kl ? cfg.samples : 1);
      auto hinge = sje_hinge(z, bundle.attributes, std::span<const int>(y_rep),
                             std::span<const int>(neg_rep), margin);
      Var<float> loss = hinge;
      const double beta = res.dual.beta;
      if (constrained)
        loss = ad::add(loss, ad::scale(ad::shift(kl, static_cast<float>(-cfg.bound)),
                                       static_cast<float>(beta)));
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) throw TrainingError("train_embed: loss is not finite", step);
      try {
        tape.backward(loss);
        opt.step();
      } catch (const NumericError& e) {
        throw TrainingError(std::string("train_embed: ") + e.what(), step);
      }

      const double kl_value =
          have_kl ? static_cast<double>(kl.value().item()) : std::numeric_limits<double>::infinity();
      if (constrained) res.dual.update(kl_value, cfg.bound, cfg.dual_step);
      if (have_kl) res.dual.observe(kl_value);
      res.steps.push_back({hinge.value().item(), kl_value, beta});
      log.hinge += hinge.value().item();
      log.kl += kl_value;
      ++steps_in_epoch;
    }
    log.hinge /= static_cast<double>(steps_in_epoch);
    log.kl /= static_cast<double>(steps_in_epoch);
    log.beta = res.dual.beta;
    log.running_kl = res.dual.running_kl;
    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      log.metrics = evaluate_embedding(bundle, res.mapper).metrics;
      log.evaluated = true;
    }
    res.epochs.push_back(log);
  }
  return res;
}

std::string embed_log_csv(const std::vector<EmbedEpoch>& epochs) {
  std::ostringstream out;
  out << "epoch,hinge,kl,beta,seen_acc,unseen_acc,H\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << io::format_real(e.hinge) << ',' << io::format_real(e.kl) << ','
        << io::format_real(e.beta) << ',';
    if (e.evaluated)
      out << io::format_real(e.metrics.seen) << ',' << io::format_real(e.metrics.unseen) << ','
          << io::format_real(e.metrics.harmonic);
    else
      out << ",,";
    out << '\n';
  }
  return out.str();
}

}  // namespace rff
