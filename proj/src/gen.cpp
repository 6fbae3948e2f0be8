#include "rff/gen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rff/io.hpp"
#include "rff/optim.hpp"
#include "rff/rng.hpp"

namespace rff {

AdversarialMode parse_adversarial_mode(std::string_view s) {
  if (s == "wgan-clip") return AdversarialMode::kWganClip;
  if (s == "minimax") return AdversarialMode::kMinimax;
  throw ConfigError("unknown adversarial mode '" + std::string(s) + "' (wgan-clip|minimax)");
}

std::string to_string(AdversarialMode m) {
  return m == AdversarialMode::kWganClip ? "wgan-clip" : "minimax";
}

int ClassCenters::row_of(int class_id) const {
  auto it = std::find(classes.begin(), classes.end(), class_id);
  if (it == classes.end())
    throw ContractError("no center for class " + std::to_string(class_id));
  return static_cast<int>(it - classes.begin());
}

void GenConfig::validate() const {
  if (!(lambda_r >= 0.0)) throw ConfigError("gen.lambda_r must be >= 0");
  if (!(lambda_c > 0.0)) throw ConfigError("gen.lambda_c must be > 0");
  if (!(bound >= 0.0)) throw ConfigError("gen.bound must be >= 0");
  if (!(center_margin > 0.0)) throw ConfigError("gen.center_margin must be > 0");
  if (n_critic < 1) throw ConfigError("gen.n_critic must be >= 1");
  if (mode == AdversarialMode::kWganClip && !(clip > 0.0))
    throw ConfigError("gen.clip must be > 0 in wgan-clip mode");
  if (!(lr > 0.0) || !(lr_critic > 0.0) || !(cls_lr > 0.0) || !(final_lr > 0.0))
    throw ConfigError("gen: learning rates must be > 0");
  if (!(dual_step >= 0.0) || !(dual_init >= 0.0))
    throw ConfigError("gen: dual_step and dual_init must be >= 0");
  if (batch < 1 || z_dim < 1 || noise_dim < 0 || gen_hidden < 1 || critic_hidden < 1 ||
      mapper_hidden < 1 || epochs < 1 || warmup_epochs < 0 || synth_count < 1 ||
      cls_epochs < 1 || final_epochs < 1)
    throw ConfigError("gen: sizes and epoch counts must be positive");
}

SoftmaxModel pretrain_classifier(const DatasetBundle& bundle, const SoftmaxTrainConfig& cfg) {
  auto x = bundle.rows(bundle.train_index);
  auto y = bundle.labels_of(bundle.train_index);
  return train_softmax(x, y, bundle.seen_classes, cfg);
}

Tensor generate(Generator& gen, const Tensor& a, const Tensor& eps) {
  Tape<float> tape;
  return gen.forward(tape, tape.constant(a), tape.constant(eps), Grad::kFrozen).value();
}

namespace {

std::vector<int> other_rows(Rng& rng, const std::vector<int>& rows, std::size_t k) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int r;
    do {
      r = static_cast<int>(rng.index(k));
    } while (r == rows[i]);
    out[i] = r;
  }
  return out;
}

Var<float> kl_term(Var<float> kl, double beta, double bound) {
  return ad::scale(ad::shift(kl, static_cast<float>(-bound)), static_cast<float>(beta));
}

}  // namespace

GenResult train_gen(const DatasetBundle& bundle, const GenConfig& cfg, const GenOptions& options) {
  cfg.validate();
  bundle.validate(true);
  const std::size_t n_seen = bundle.seen_classes.size();
  if (n_seen < 2) throw ContractError("train_gen: need at least 2 seen classes");

  GenResult res;
  GenModel& m = res.model;
  Rng rng(cfg.seed);
  const std::size_t d_x = bundle.feature_dim(), d_a = bundle.attribute_dim();
  const std::size_t d_eps = cfg.noise_dim > 0 ? static_cast<std::size_t>(cfg.noise_dim) : d_a;

  if (options.classifier) {
    m.q = *options.classifier;
  } else {
    m.q = pretrain_classifier(bundle, {.epochs = cfg.cls_epochs, .lr = cfg.cls_lr,
                                       .seed = derive_seed(cfg.seed, 101)});
  }
  if (m.q.in_dim() != d_x) throw DimensionError("train_gen: classifier input dim mismatch");

  m.gen = Generator(d_a, d_eps, static_cast<std::size_t>(cfg.gen_hidden), d_x);
  m.gen.init(rng);
  if (options.mapper_init) {
    m.mapper = *options.mapper_init;
    if (m.mapper.in_dim() != d_x) throw DimensionError("train_gen: mapper input dim mismatch");
  } else {
    m.mapper = Mapper(d_x, static_cast<std::size_t>(cfg.mapper_hidden),
                      static_cast<std::size_t>(cfg.z_dim));
    m.mapper.init(rng);
  }
  const std::size_t d_z = m.mapper.z_dim();
  m.critic = Critic(d_z, static_cast<std::size_t>(cfg.critic_hidden));
  m.critic.init(rng);
  m.centers.classes = bundle.seen_classes;
  m.centers.centers = Parameter("centers", Tensor(n_seen, d_z));

  const bool wgan = cfg.mode == AdversarialMode::kWganClip;
  if (wgan) clip_weights(m.critic.params(), cfg.clip);

  Adam critic_opt({.lr = cfg.lr_critic}, m.critic.params());
  Adam gen_opt({.lr = cfg.lr}, m.gen.params());
  ParamList<float> mapper_params;
  if (!options.freeze_mapper) mapper_params = m.mapper.params();
  Adam mapper_opt({.lr = cfg.lr}, mapper_params);
  Adam center_opt({.lr = cfg.lr}, {&m.centers.centers});

  const bool constrained = cfg.constraints_active();
  double beta_real = constrained ? cfg.dual_init : 0.0;
  double beta_fake = beta_real;
  const auto mapper_grad = options.freeze_mapper ? Grad::kFrozen : Grad::kTrainable;

  const std::size_t n = bundle.train_index.size();
  const std::size_t batch = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.batch));
  long step = 0;
  bool centers_ready = false;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const bool use_centers = centers_ready && cfg.lambda_r > 0.0;
    auto order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<std::size_t> idx;
      for (std::size_t j = start; j < end; ++j) idx.push_back(bundle.train_index[order[j]]);
      const std::size_t b = idx.size();
      auto y = bundle.labels_of(idx);
      std::vector<std::size_t> ya(y.begin(), y.end());
      const Tensor x = bundle.rows(idx);
      const Tensor a = bundle.attributes.gather_rows(ya);
      GenStep log;
      log.step = step;
      log.epoch = epoch;

      try {
        // Critic updates: M and G frozen, fresh noise each time.
        const GaussianPosterior real_post = map_posterior(m.mapper, x);
        for (int k = 0; k < cfg.n_critic; ++k) {
          Tape<float> tape;
          PosteriorVars<float> rp{tape.constant(real_post.mu), tape.constant(real_post.log_var)};
          auto z_real = sample_reparam(rp, tape.constant(rng.normal_tensor(b, d_z)));
          auto x_fake = m.gen.forward(tape, tape.constant(a),
                                      tape.constant(rng.normal_tensor(b, d_eps)), Grad::kFrozen);
          auto fp = posterior(tape, m.mapper, x_fake, Grad::kFrozen);
          auto z_fake = sample_reparam(fp, tape.constant(rng.normal_tensor(b, d_z)));
          auto losses = adversarial_losses(m.critic.forward(tape, z_real),
                                           m.critic.forward(tape, z_fake), cfg.mode);
          tape.backward(losses.critic);
          critic_opt.step();
          if (wgan) clip_weights(m.critic.params(), cfg.clip);
          log.critic = losses.critic.value().item();
        }
        for (auto* p : m.critic.params()) log.critic_max_abs = std::max<double>(log.critic_max_abs, p->value.max_abs());

        // Joint step on G, M and the centers with the critic frozen.
        Tape<float> tape;
        auto real = posterior(tape, m.mapper, tape.constant(x), mapper_grad);
        auto z_real = sample_reparam(real, tape.constant(rng.normal_tensor(b, d_z)));
        auto x_fake =
            m.gen.forward(tape, tape.constant(a), tape.constant(rng.normal_tensor(b, d_eps)));
        auto fake = posterior(tape, m.mapper, x_fake, mapper_grad);
        auto z_fake = sample_reparam(fake, tape.constant(rng.normal_tensor(b, d_z)));
        auto fake_scores = m.critic.forward(tape, z_fake, Grad::kFrozen);
        // Only the generator-side loss is used; it reads the fake branch alone.
        auto adv = adversarial_losses(fake_scores, fake_scores, cfg.mode).generator;
        auto cls = cls_loss(x_fake, m.q, std::span<const int>(y));
        auto kl_real = kl_to_marginal(real);
        // The fake-branch constraint bounds the mapper's information rate; by
        // default G sees x~ as a constant in that term.
        auto kl_fake = cfg.kl_fake_to_gen
                           ? kl_to_marginal(fake)
                           : kl_to_marginal(posterior(tape, m.mapper, tape.constant(x_fake.value()),
                                                      mapper_grad));

        Var<float> total = ad::add(adv, ad::scale(cls, static_cast<float>(cfg.lambda_c)));
        if (use_centers) {
          std::vector<int> rows(b);
          for (std::size_t i = 0; i < b; ++i) rows[i] = m.centers.row_of(y[i]);
          auto others = other_rows(rng, rows, n_seen);
          auto center = center_margin_loss(z_real, std::span<const int>(rows),
                                           std::span<const int>(others),
                                           tape.param(m.centers.centers),
                                           static_cast<float>(cfg.center_margin));
          total = ad::add(total, ad::scale(center, static_cast<float>(cfg.lambda_r)));
          log.center = center.value().item();
        }
        if (constrained) {
          total = ad::add(total, kl_term(kl_real, beta_real, cfg.bound));
          total = ad::add(total, kl_term(kl_fake, beta_fake, cfg.bound));
        }
        log.adv = adv.value().item();
        log.cls = cls.value().item();
        log.kl_real = kl_real.value().item();
        log.kl_fake = kl_fake.value().item();
        log.beta_real = beta_real;
        log.beta_fake = beta_fake;
        log.total = total.value().item();
        if (!std::isfinite(log.total)) throw NumericError("joint objective is not finite");

        tape.param(m.centers.centers);  // registered so it gets a zero grad when unused
        tape.backward(total);
        gen_opt.step();
        mapper_opt.step();
        if (use_centers) center_opt.step();
      } catch (const NumericError& e) {
        throw TrainingError(std::string("train_gen: ") + e.what(), step);
      }

      if (constrained) {
        beta_real = std::max(0.0, beta_real + cfg.dual_step * (log.kl_real - cfg.bound));
        beta_fake = std::max(0.0, beta_fake + cfg.dual_step * (log.kl_fake - cfg.bound));
      }
      res.steps.push_back(log);
    }

    if (!centers_ready && epoch >= cfg.warmup_epochs) {
      // Centers start at the per-class mean of the mapped training features.
      Tensor z = map_point(m.mapper, bundle.rows(bundle.train_index));
      auto y = bundle.labels_of(bundle.train_index);
      Tensor sum(n_seen, d_z);
      std::vector<double> count(n_seen, 0.0);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const auto r = static_cast<std::size_t>(m.centers.row_of(y[i]));
        for (std::size_t k = 0; k < d_z; ++k) sum(r, k) += z(i, k);
        count[r] += 1.0;
      }
      for (std::size_t r = 0; r < n_seen; ++r)
        for (std::size_t k = 0; k < d_z; ++k)
          sum(r, k) = static_cast<float>(sum(r, k) / std::max(1.0, count[r]));
      m.centers.centers.value = sum;
      centers_ready = true;
    }
  }
  res.final_beta_real = beta_real;
  res.final_beta_fake = beta_fake;
  return res;
}

LabeledFeatures synthesize_unseen(Generator& gen, Mapper& mapper, const Tensor& attributes,
                                  const std::map<int, int>& counts, std::uint64_t seed,
                                  bool sample) {
  if (attributes.cols() != gen.attr_dim())
    throw DimensionError("synthesize_unseen: descriptor dim " + std::to_string(attributes.cols()) +
                         " vs generator " + std::to_string(gen.attr_dim()));
  std::size_t total = 0;
  for (const auto& [c, k] : counts) {
    if (c < 0 || static_cast<std::size_t>(c) >= attributes.rows())
      throw ContractError("synthesize_unseen: class " + std::to_string(c) + " has no descriptor");
    if (k < 1) throw ContractError("synthesize_unseen: count for class " + std::to_string(c) + " < 1");
    total += static_cast<std::size_t>(k);
  }
  LabeledFeatures out{Tensor(total, mapper.z_dim()), {}};
  out.labels.reserve(total);
  std::size_t row = 0;
  for (const auto& [c, k] : counts) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const auto kk = static_cast<std::size_t>(k);
    std::vector<std::size_t> rep(kk, static_cast<std::size_t>(c));
    Tensor x = generate(gen, attributes.gather_rows(rep), rng.normal_tensor(kk, gen.noise_dim()));
    Tensor z = sample ? sample_reparam(map_posterior(mapper, x), rng.normal_tensor(kk, mapper.z_dim()))
                      : map_point(mapper, x);
    std::copy(z.data().begin(), z.data().end(), out.z.data().begin() + long(row * z.cols()));
    out.labels.insert(out.labels.end(), kk, c);
    row += kk;
  }
  return out;
}

void fit_final(const DatasetBundle& bundle, GenModel& model, int synth_count, std::uint64_t seed,
               const SoftmaxTrainConfig& cfg, bool sample) {
  std::map<int, int> counts;
  for (int c : bundle.unseen_classes) counts[c] = synth_count;
  auto synth = synthesize_unseen(model.gen, model.mapper, bundle.attributes, counts, seed, sample);
  const Tensor x = bundle.rows(bundle.train_index);
  Tensor real;
  if (sample) {
    Rng rng(derive_seed(seed, 0x5eedULL << 32));
    real = sample_reparam(map_posterior(model.mapper, x), rng.normal_tensor(x.rows(), model.mapper.z_dim()));
  } else {
    real = map_point(model.mapper, x);
  }
  auto real_y = bundle.labels_of(bundle.train_index);
  std::vector<int> all(bundle.num_classes());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  model.final_model = train_final_softmax(real, real_y, synth.z, synth.labels, all, cfg);
  model.has_final = true;
}

std::vector<GenStep> gen_epoch_means(const std::vector<GenStep>& steps) {
  std::vector<GenStep> out;
  std::size_t count = 0;
  for (const auto& s : steps) {
    if (out.empty() || out.back().epoch != s.epoch) {
      if (!out.empty()) {
        auto& e = out.back();
        for (double* f : {&e.critic, &e.adv, &e.center, &e.cls, &e.kl_real, &e.kl_fake,
                          &e.beta_real, &e.beta_fake, &e.total})
          *f /= static_cast<double>(count);
      }
      out.push_back({});
      out.back().epoch = s.epoch;
      out.back().step = s.step;
      count = 0;
    }
    auto& e = out.back();
    e.critic += s.critic;
    e.adv += s.adv;
    e.center += s.center;
    e.cls += s.cls;
    e.kl_real += s.kl_real;
    e.kl_fake += s.kl_fake;
    e.beta_real += s.beta_real;
    e.beta_fake += s.beta_fake;
    e.total += s.total;
    e.critic_max_abs = std::max(e.critic_max_abs, s.critic_max_abs);
    ++count;
  }
  if (!out.empty()) {
    auto& e = out.back();
    for (double* f : {&e.critic, &e.adv, &e.center, &e.cls, &e.kl_real, &e.kl_fake, &e.beta_real,
                      &e.beta_fake, &e.total})
      *f /= static_cast<double>(count);
  }
  return out;
}

std::string gen_log_csv(const std::vector<GenStep>& rows) {
  std::ostringstream out;
  out << "step,epoch,critic,adv,center,cls,kl_real,kl_fake,beta_real,beta_fake,total\n";
  for (const auto& s : rows) {
    out << s.step << ',' << s.epoch;
    for (double v : {s.critic, s.adv, s.center, s.cls, s.kl_real, s.kl_fake, s.beta_real,
                     s.beta_fake, s.total})
      out << ',' << io::format_real(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace rff
