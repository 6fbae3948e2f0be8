#include <cmath>
#include <vector>

#include "doctest.h"
#include "rff/gradcheck.hpp"
#include "rff/optim.hpp"
#include "rff/rng.hpp"
#include "rff/tape.hpp"

using namespace rff;
using doctest::Approx;

TEST_CASE("forward primitives match their definitions") {
  Tape<float> t;
  auto x = t.constant(Tensor::from_rows({{-1, 0, 2}}));
  CHECK(ad::relu(x).value() == Tensor::from_rows({{0, 0, 2}}));
  CHECK(ad::hinge(x).value() == Tensor::from_rows({{0, 0, 2}}));

  auto y = t.constant(Tensor::from_rows({{-1, 2}}));
  auto ly = ad::leaky_relu(y, 0.2f).value();
  CHECK(ly[0] == Approx(-0.2));
  CHECK(ly[1] == 2.0f);

  std::vector<int> target{1};
  auto ce = ad::softmax_cross_entropy(t.constant(Tensor::from_rows({{0, 0, 0}})),
                                      std::span<const int>(target));
  CHECK(ce.value().item() == Approx(std::log(3.0)).epsilon(1e-6));

  auto s = ad::sigmoid(t.constant(Tensor::from_rows({{0, -50, 50}}))).value();
  CHECK(s[0] == 0.5f);
  CHECK(s[1] >= 0.0f);
  CHECK(s[2] == Approx(1.0));

  auto c = ad::clamp(t.constant(Tensor::from_rows({{-20, -3, 0, 4, 12}})), -10.0f, 10.0f).value();
  CHECK(c == Tensor::from_rows({{-10, -3, 0, 4, 10}}));
}

TEST_CASE("shape mismatch and non-finite output are errors") {
  Tape<float> t;
  auto a = t.constant(Tensor(2, 3, 1.0f));
  auto b = t.constant(Tensor(2, 2, 1.0f));
  CHECK_THROWS_AS(ad::matmul(a, b), DimensionError);
  CHECK_THROWS_AS(ad::add(a, b), DimensionError);
  CHECK_THROWS_AS(ad::add_bias(a, b), DimensionError);

  auto neg = t.constant(Tensor::from_rows({{-1.0f}}));
  try {
    ad::log(neg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::exp(t.constant(Tensor::from_rows({{1000.0f}}))), NumericError);
}

TEST_CASE("backward: linear map gives the input broadcast per output column") {
  Parameter w("w", Tensor(3, 2, 0.5f));
  Tape<float> t;
  auto x = t.constant(Tensor::from_rows({{1, 2, 3}}));
  auto loss = ad::sum(ad::matmul(x, t.param(w)));
  t.backward(loss);
  CHECK(w.grad == Tensor::from_rows({{1, 1}, {2, 2}, {3, 3}}));
}

TEST_CASE("backward: mean of square") {
  Parameter p("p", Tensor::from_rows({{3}}));
  Tape<float> t;
  t.backward(ad::mean(ad::square(t.param(p))));
  CHECK(p.grad.item() == 6.0f);
}

TEST_CASE("backward contract") {
  Parameter p("p", Tensor(2, 2, 1.0f));
  Parameter unused("unused", Tensor(2, 2, 1.0f));
  unused.grad.fill(7.0f);
  Tape<float> t;
  auto v = t.param(p);
  t.param(unused);
  CHECK_THROWS_AS(t.backward(ad::square(v)), ContractError);
  auto loss = ad::sum(ad::square(v));
  t.backward(loss);
  CHECK(unused.grad == Tensor(2, 2, 0.0f));
  CHECK_THROWS_AS(t.backward(loss), ContractError);
}

TEST_CASE("shared subexpressions accumulate like a duplicated subgraph") {
  Rng rng(3);
  Parameter w("w", rng.normal_tensor(4, 3));
  Tensor x = rng.normal_tensor(5, 4);

  Tape<float> shared;
  auto h = ad::relu(ad::matmul(shared.constant(x), shared.param(w)));
  shared.backward(ad::sum(ad::mul(h, ad::exp(ad::scale(h, 0.3f)))));
  Tensor g_shared = w.grad;

  Tape<float> dup;
  auto h1 = ad::relu(ad::matmul(dup.constant(x), dup.param(w)));
  auto h2 = ad::relu(ad::matmul(dup.constant(x), dup.param(w)));
  dup.backward(ad::sum(ad::mul(h1, ad::exp(ad::scale(h2, 0.3f)))));

  for (std::size_t i = 0; i < w.grad.size(); ++i)
    CHECK(g_shared[i] == Approx(w.grad[i]).epsilon(1e-6));
}

TEST_CASE("scalar broadcast in elementwise ops gathers its gradient") {
  Parameter s("s", Tensor::scalar(2.0f));
  Tape<float> t;
  auto x = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  t.backward(ad::sum(ad::mul(x, t.param(s))));
  CHECK(s.grad.item() == 10.0f);
}

TEST_CASE("softmax cross-entropy gradient is softmax minus one-hot over rows") {
  Parameter l("l", Tensor::from_rows({{1, 2, 3}, {0, 0, 0}}));
  std::vector<int> y{2, 0};
  Tape<float> t;
  t.backward(ad::softmax_cross_entropy(t.param(l), std::span<const int>(y)));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(l.grad(0, 0) == Approx(std::exp(1.0) / z / 2));
  CHECK(l.grad(0, 2) == Approx((std::exp(3.0) / z - 1) / 2));
  CHECK(l.grad(1, 0) == Approx((1.0 / 3 - 1) / 2));
  CHECK(l.grad(1, 1) == Approx(1.0 / 6));
}

TEST_CASE("gradient_check agrees on a smooth composite in double precision") {
  Rng rng(9);
  BasicParameter<double> w("w", rng.normal_tensor<double>(4, 3));
  BasicParameter<double> b("b", rng.normal_tensor<double>(1, 3));
  auto x = rng.normal_tensor<double>(6, 4);
  LossBuilder<double> build = [&](Tape<double>& t) {
    auto h = ad::add_bias(ad::matmul(t.constant(x), t.param(w)), t.param(b));
    auto s = ad::sigmoid(h);
    return ad::mean(ad::add(ad::square(s), ad::log(ad::shift(ad::exp(h), 1.0))));
  };
  auto res = gradient_check<double>(build, {&w, &b}, 1e-4);
  CHECK(res.checked == 15);
  CHECK(res.excluded == 0);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("gradient_check detects a wrong gradient") {
  BasicParameter<double> p("p", BasicTensor<double>::from_rows({{0.7, -0.4}}));
  BasicParameter<double> q("q", BasicTensor<double>::from_rows({{1.5}}));
  LossBuilder<double> honest = [&](Tape<double>& t) { return ad::sum(ad::square(t.param(p))); };
  CHECK(gradient_check<double>(honest, {&p}, 1e-5).max_rel_error < 1e-8);
  // Unregistered parameter: analytic gradient 0 but the loss depends on it.
  LossBuilder<double> hidden = [&](Tape<double>& t) {
    return ad::sum(ad::square(t.constant(q.value)));
  };
  CHECK(gradient_check<double>(hidden, {&q}, 1e-5).max_rel_error == Approx(1.0));
}

TEST_CASE("gradient_check excludes entries next to a hinge kink") {
  BasicParameter<double> p("p", BasicTensor<double>::from_rows({{1e-5, 0.5}}));
  LossBuilder<double> build = [&](Tape<double>& t) { return ad::sum(ad::hinge(t.param(p))); };
  auto res = gradient_check<double>(build, {&p}, 1e-4);
  CHECK(res.excluded == 1);
  CHECK(res.checked == 1);
  CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("adam: zero gradient leaves parameters and decays moments") {
  Parameter p("p", Tensor::from_rows({{1, -2}}));
  Adam opt({.lr = 0.1}, {&p});
  p.grad = Tensor::from_rows({{1, 1}});
  opt.step();
  const Tensor after_first = p.value;
  const float m0 = opt.first_moment(0)[0];
  p.grad.fill(0.0f);
  opt.step();
  CHECK(p.value[0] != after_first[0]);  // momentum still moves it
  // ...but with the moment decayed by beta1.
  CHECK(opt.first_moment(0)[0] == Approx(0.5 * m0));
  CHECK(opt.step_count() == 2);

  Parameter q("q", Tensor::from_rows({{1, -2}}));
  Adam fresh({.lr = 0.1}, {&q});
  q.grad.fill(0.0f);
  fresh.step();
  CHECK(q.value == Tensor::from_rows({{1, -2}}));
}

TEST_CASE("adam: first step and long-run step are lr * sign(g)") {
  Parameter p("p", Tensor::from_rows({{0, 0}}));
  Adam opt({.lr = 0.01}, {&p});
  p.grad = Tensor::from_rows({{3, -0.001f}});
  opt.step();
  CHECK(p.value[0] == Approx(-0.01).epsilon(1e-4));
  CHECK(p.value[1] == Approx(0.01).epsilon(1e-3));
  for (int i = 0; i < 2000; ++i) {
    const Tensor before = p.value;
    p.grad = Tensor::from_rows({{3, -0.001f}});
    opt.step();
    if (i == 1999) {
      CHECK(before[0] - p.value[0] == Approx(0.01).epsilon(1e-3));
      CHECK(p.value[1] - before[1] == Approx(0.01).epsilon(1e-2));
    }
  }
}

TEST_CASE("adam: non-finite gradient aborts the update") {
  Parameter p("p", Tensor::from_rows({{1, 2}}));
  Adam opt({.lr = 0.1}, {&p});
  p.grad = Tensor::from_rows({{0.5f, std::numeric_limits<float>::quiet_NaN()}});
  CHECK_THROWS_AS(opt.step(), NumericError);
  CHECK(p.value == Tensor::from_rows({{1, 2}}));
  CHECK(opt.step_count() == 0);
}

TEST_CASE("clip_weights") {
  Parameter p("p", Tensor::from_rows({{-2, 0.005f, 2}}));
  Parameter other("other", Tensor::from_rows({{5}}));
  clip_weights<float>({&p}, 0.01);
  CHECK(p.value == Tensor::from_rows({{-0.01f, 0.005f, 0.01f}}));
  CHECK(other.value.item() == 5.0f);
  const Tensor once = p.value;
  clip_weights<float>({&p}, 0.01);
  CHECK(p.value == once);
  Parameter inside("inside", Tensor::from_rows({{0.001f, -0.002f}}));
  clip_weights<float>({&inside}, 0.01);
  CHECK(inside.value == Tensor::from_rows({{0.001f, -0.002f}}));
  CHECK_THROWS_AS(clip_weights<float>({&p}, 0.0), ConfigError);
  CHECK_THROWS_AS(clip_weights<float>({&p}, -1.0), ConfigError);
}
