#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "rff/tape.hpp"

namespace rff {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // entries within the kink neighbourhood
  std::string worst;         // "param[index]" of the max error
};

// Builds the loss on a fresh tape. Any noise must be captured as data so the
// function is deterministic across calls.
template <typename T>
using LossBuilder = std::function<Var<T>(Tape<T>&)>;

// Compares tape gradients with central differences, entry by entry:
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
// Entries whose +-kink_radius*h perturbation changes the activation pattern
// of a relu/hinge/leaky_relu are skipped and counted in `excluded`.
template <typename T>
GradCheckResult gradient_check(const LossBuilder<T>& build, const ParamList<T>& params, double h,
                               double kink_radius = 10.0) {
  std::vector<BasicTensor<T>> analytic;
  std::uint64_t base_sig = 0;
  {
    Tape<T> tape;
    auto loss = build(tape);
    base_sig = tape.kink_signature();
    tape.backward(loss);
    for (auto* p : params) {
      // A parameter the builder never registered has zero gradient.
      if (!p->grad.same_shape(p->value)) p->grad = BasicTensor<T>(p->value.rows(), p->value.cols());
      analytic.push_back(p->grad);
    }
  }
  auto eval = [&](std::uint64_t* sig) {
    Tape<T> tape;
    double v = tape.value(build(tape)).item();
    if (sig) *sig = tape.kink_signature();
    return v;
  };

  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T orig = p.value[i];
      std::uint64_t s1 = 0, s2 = 0;
      p.value[i] = static_cast<T>(orig + kink_radius * h);
      eval(&s1);
      p.value[i] = static_cast<T>(orig - kink_radius * h);
      eval(&s2);
      if (s1 != base_sig || s2 != base_sig) {
        p.value[i] = orig;
        ++res.excluded;
        continue;
      }
      // Use the actually representable step so the quotient is consistent.
      const T up = static_cast<T>(orig + h);
      const T down = static_cast<T>(orig - h);
      p.value[i] = up;
      const double fp = eval(nullptr);
      p.value[i] = down;
      const double fm = eval(nullptr);
      p.value[i] = orig;
      const double cd = (fp - fm) / (static_cast<double>(up) - static_cast<double>(down));
      const double an = analytic[k][i];
      const double denom = std::max({std::abs(an), std::abs(cd), 1e-8});
      const double err = std::abs(an - cd) / denom;
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

// Analytic gradients from a tape in storage precision TA against central
// differences of the identical loss evaluated in a wider type TO (long
// double in the suites), so the reference's own rounding noise, about
// eps_TO * |L| / h, stays far below the tolerance even where the true
// gradient is exactly zero. `build_ref` must compute the same function as
// `build` over `params_ref`, whose values are overwritten from `params`
// first. Kinks are detected on the reference path.
template <typename TA, typename TO>
GradCheckResult gradient_check_against(const LossBuilder<TA>& build, const ParamList<TA>& params,
                                       const LossBuilder<TO>& build_ref,
                                       const ParamList<TO>& params_ref, double h,
                                       double kink_radius = 10.0) {
  if (params.size() != params_ref.size())
    throw ContractError("gradient_check_against: parameter lists differ in length");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->value.rows() != params_ref[k]->value.rows() ||
        params[k]->value.cols() != params_ref[k]->value.cols())
      throw ContractError("gradient_check_against: shape mismatch for " + params[k]->name);
    params_ref[k]->value = params[k]->value.template cast<TO>();
  }
  std::vector<BasicTensor<TA>> analytic;
  {
    Tape<TA> tape;
    auto loss = build(tape);
    tape.backward(loss);
    for (auto* p : params) {
      if (!p->grad.same_shape(p->value)) p->grad = BasicTensor<TA>(p->value.rows(), p->value.cols());
      analytic.push_back(p->grad);
    }
  }
  auto eval = [&](std::uint64_t* sig) {
    Tape<TO> tape;
    TO v = tape.value(build_ref(tape)).item();
    if (sig) *sig = tape.kink_signature();
    return v;
  };
  std::uint64_t base_sig = 0;
  eval(&base_sig);

  GradCheckResult res;
  const TO step = static_cast<TO>(h);
  for (std::size_t k = 0; k < params_ref.size(); ++k) {
    auto& p = *params_ref[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const TO orig = p.value[i];
      std::uint64_t s1 = 0, s2 = 0;
      p.value[i] = orig + static_cast<TO>(kink_radius) * step;
      eval(&s1);
      p.value[i] = orig - static_cast<TO>(kink_radius) * step;
      eval(&s2);
      if (s1 != base_sig || s2 != base_sig) {
        p.value[i] = orig;
        ++res.excluded;
        continue;
      }
      p.value[i] = orig + step;
      const TO fp = eval(nullptr);
      p.value[i] = orig - step;
      const TO fm = eval(nullptr);
      p.value[i] = orig;
      const double cd = static_cast<double>((fp - fm) / (2 * step));
      const double an = analytic[k][i];
      const double err = std::abs(an - cd) / std::max({std::abs(an), std::abs(cd), 1e-8});
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace rff
