#include "rff/gradchecks.hpp"

#include <functional>
#include <memory>

#include "rff/gen.hpp"
#include "rff/losses.hpp"
#include "rff/mapper.hpp"
#include "rff/rng.hpp"

namespace rff {

namespace {

// Tiny shapes keep 20 seeds of every check well under a second each.
constexpr std::size_t kRows = 6, kX = 5, kMapHidden = 6, kZ = 3, kAttr = 3, kClasses = 4,
                      kNoise = 3, kGenHidden = 5, kCriticHidden = 5;

constexpr double kLambdaC = 0.5, kLambdaR = 0.1, kBetaReal = 0.7, kBetaFake = 1.3, kBound = 0.1;

// Everything any of the checks might touch. Values are drawn from the same
// stream for float and double and rounded to float, so both precisions see
// the identical function at the identical point.
template <typename T>
struct Instance {
  BasicMapper<T> mapper{kX, kMapHidden, kZ};
  BasicGenerator<T> gen{kAttr, kNoise, kGenHidden, kX};
  BasicCritic<T> critic{kZ, kCriticHidden};
  BasicLinear<T> q{"q", kX, kClasses};
  BasicParameter<T> centers{"centers", BasicTensor<T>(kClasses, kZ)};

  BasicTensor<T> x, attrs, a_rows, eps_real, eps_fake, eps_gen;
  std::vector<int> y, y_other, classes;

  explicit Instance(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6c));
    mapper.init(rng);
    // A nonzero log-variance head so its gradient path is exercised.
    mapper.logvar_head.weight.value = rng.normal_tensor<T>(kMapHidden, kZ, 0.3);
    mapper.logvar_head.bias.value = rng.normal_tensor<T>(1, kZ, 0.3);
    gen.init(rng);
    critic.init(rng);
    q.init(rng);
    centers.value = rng.normal_tensor<T>(kClasses, kZ);
    x = rng.normal_tensor<T>(kRows, kX);
    attrs = rng.normal_tensor<T>(kClasses, kAttr);
    eps_real = rng.normal_tensor<T>(kRows, kZ);
    eps_fake = rng.normal_tensor<T>(kRows, kZ);
    eps_gen = rng.normal_tensor<T>(kRows, kNoise);
    for (std::size_t i = 0; i < kRows; ++i) {
      const int c = static_cast<int>(rng.index(kClasses));
      const int o = static_cast<int>((c + 1 + rng.index(kClasses - 1)) % kClasses);
      y.push_back(c);
      y_other.push_back(o);
    }
    for (std::size_t c = 0; c < kClasses; ++c) classes.push_back(static_cast<int>(c));
    std::vector<std::size_t> ya(y.begin(), y.end());
    a_rows = attrs.gather_rows(ya);

    auto round = [](BasicTensor<T>& t) {
      for (auto& v : t.data()) v = static_cast<T>(static_cast<float>(v));
    };
    for (auto* p : all_params()) round(p->value);
    for (auto* t : {&x, &attrs, &a_rows, &eps_real, &eps_fake, &eps_gen}) round(*t);
  }

  ParamList<T> all_params() {
    ParamList<T> out = mapper.params();
    for (auto* p : gen.params()) out.push_back(p);
    for (auto* p : critic.params()) out.push_back(p);
    for (auto* p : q.params()) out.push_back(p);
    out.push_back(&centers);
    return out;
  }

  // Trainable views used by the checks.
  Var<T> z_real(Tape<T>& tape, Grad g) {
    return sample_reparam(posterior(tape, mapper, tape.constant(x), g), tape.constant(eps_real));
  }
  Var<T> x_fake(Tape<T>& tape, Grad g) {
    return gen.forward(tape, tape.constant(a_rows), tape.constant(eps_gen), g);
  }
  Var<T> sje(Var<T> z) {
    return sje_hinge(z, attrs, std::span<const int>(y), std::span<const int>(y_other), T(1));
  }
  Var<T> center(Tape<T>& tape, Var<T> z) {
    return center_margin_loss(z, std::span<const int>(y), std::span<const int>(y_other),
                              tape.param(centers), T(1));
  }
  Var<T> cls(Var<T> xf) { return cls_loss(xf, q, T(1), classes, std::span<const int>(y)); }
};

template <typename T>
Var<T> kl_term(Var<T> kl, double beta) {
  return ad::scale(ad::shift(kl, static_cast<T>(-kBound)), static_cast<T>(beta));
}

template <typename T>
struct Problem {
  std::shared_ptr<Instance<T>> inst;
  ParamList<T> params;
  LossBuilder<T> build;
};

template <typename T>
Problem<T> make_problem(const std::string& name, std::uint64_t seed) {
  auto in = std::make_shared<Instance<T>>(seed);
  Instance<T>& I = *in;
  const auto frozen = Grad::kFrozen, live = Grad::kTrainable;
  Problem<T> p{in, {}, {}};

  if (name == "sje") {
    p.params = I.mapper.params();
    p.build = [&I, live](Tape<T>& t) { return I.sje(I.z_real(t, live)); };
  } else if (name == "kl") {
    p.params = I.mapper.params();
    p.build = [&I, live](Tape<T>& t) {
      return kl_to_marginal(posterior(t, I.mapper, t.constant(I.x), live));
    };
  } else if (name == "embed-objective") {
    p.params = I.mapper.params();
    p.build = [&I, live](Tape<T>& t) {
      auto post = posterior(t, I.mapper, t.constant(I.x), live);
      auto z = sample_reparam(post, t.constant(I.eps_real));
      return ad::add(I.sje(z), kl_term(kl_to_marginal(post), kBetaReal));
    };
  } else if (name == "cls") {
    p.params = I.gen.params();
    p.build = [&I, live](Tape<T>& t) { return I.cls(I.x_fake(t, live)); };
  } else if (name == "center") {
    p.params = I.mapper.params();
    p.params.push_back(&I.centers);
    p.build = [&I, live](Tape<T>& t) { return I.center(t, I.z_real(t, live)); };
  } else if (name == "wgan-critic" || name == "minimax-critic") {
    const auto mode = name == "wgan-critic" ? AdversarialMode::kWganClip : AdversarialMode::kMinimax;
    p.params = I.critic.params();
    p.build = [&I, mode, frozen](Tape<T>& t) {
      auto zr = I.z_real(t, frozen);
      auto zf = sample_reparam(posterior(t, I.mapper, I.x_fake(t, frozen), frozen),
                               t.constant(I.eps_fake));
      return adversarial_losses(I.critic.forward(t, zr), I.critic.forward(t, zf), mode).critic;
    };
  } else if (name == "wgan-generator" || name == "minimax-generator") {
    const auto mode =
        name == "wgan-generator" ? AdversarialMode::kWganClip : AdversarialMode::kMinimax;
    p.params = I.gen.params();
    for (auto* q : I.mapper.params()) p.params.push_back(q);
    p.build = [&I, mode, frozen, live](Tape<T>& t) {
      auto zr = I.z_real(t, live);
      auto zf = sample_reparam(posterior(t, I.mapper, I.x_fake(t, live), live),
                               t.constant(I.eps_fake));
      return adversarial_losses(I.critic.forward(t, zr, frozen), I.critic.forward(t, zf, frozen),
                                mode)
          .generator;
    };
  } else if (name == "gen-objective") {
    p.params = I.gen.params();
    for (auto* q : I.mapper.params()) p.params.push_back(q);
    p.params.push_back(&I.centers);
    p.build = [&I, frozen, live](Tape<T>& t) {
      auto real = posterior(t, I.mapper, t.constant(I.x), live);
      auto zr = sample_reparam(real, t.constant(I.eps_real));
      auto xf = I.x_fake(t, live);
      auto fake = posterior(t, I.mapper, xf, live);
      auto zf = sample_reparam(fake, t.constant(I.eps_fake));
      auto scores = I.critic.forward(t, zf, frozen);
      auto total = adversarial_losses(scores, scores, AdversarialMode::kWganClip).generator;
      total = ad::add(total, ad::scale(I.cls(xf), static_cast<T>(kLambdaC)));
      total = ad::add(total, ad::scale(I.center(t, zr), static_cast<T>(kLambdaR)));
      total = ad::add(total, kl_term(kl_to_marginal(real), kBetaReal));
      return ad::add(total, kl_term(kl_to_marginal(fake), kBetaFake));
    };
  } else {
    throw ConfigError("unknown gradient check '" + name + "'");
  }
  return p;
}

}  // namespace

const std::vector<std::string>& gradcheck_losses() {
  static const std::vector<std::string> names = {
      "sje",         "kl",           "embed-objective", "cls",
      "center",      "wgan-critic",  "wgan-generator",  "minimax-critic",
      "minimax-generator", "gen-objective"};
  return names;
}

GradSuiteRow run_gradcheck(const std::string& loss, int seeds, double h32, double h64,
                           double kink_radius) {
  GradSuiteRow row;
  row.loss = loss;
  row.seeds = seeds;
  for (int s = 1; s <= seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    auto p32 = make_problem<float>(loss, seed);
    auto p64 = make_problem<double>(loss, seed);
    auto ref = make_problem<long double>(loss, seed);
    const auto r32 =
        gradient_check_against(p32.build, p32.params, ref.build, ref.params, h32, kink_radius);
    const auto r64 =
        gradient_check_against(p64.build, p64.params, ref.build, ref.params, h64, kink_radius);
    if (r32.max_rel_error >= row.max_rel_error32) {
      row.max_rel_error32 = r32.max_rel_error;
      row.worst32 = "seed " + std::to_string(s) + " " + r32.worst;
    }
    if (r64.max_rel_error >= row.max_rel_error64) {
      row.max_rel_error64 = r64.max_rel_error;
      row.worst64 = "seed " + std::to_string(s) + " " + r64.worst;
    }
    row.checked += r32.checked + r64.checked;
    row.excluded += r32.excluded + r64.excluded;
  }
  return row;
}

}  // namespace rff
