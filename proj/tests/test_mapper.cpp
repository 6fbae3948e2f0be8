#include <cmath>
#include <vector>

#include "doctest.h"
#include "rff/mapper.hpp"
#include "rff/rng.hpp"

using namespace rff;
using doctest::Approx;

namespace {

GaussianPosterior fixed_posterior(std::vector<float> mu, std::vector<float> lv) {
  GaussianPosterior p;
  p.mu = Tensor(1, mu.size());
  p.log_var = Tensor(1, lv.size());
  for (std::size_t j = 0; j < mu.size(); ++j) p.mu(0, j) = mu[j], p.log_var(0, j) = lv[j];
  return p;
}

// log N(z; mu, diag e^lv) - log N(z; 0, I), averaged over draws.
double monte_carlo_kl(const GaussianPosterior& p, int draws, Rng& rng) {
  const std::size_t d = p.mu.cols();
  double acc = 0.0;
  for (int s = 0; s < draws; ++s) {
    double lr = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = p.mu(0, j), lv = p.log_var(0, j);
      const double e = rng.normal();
      const double z = mu + std::exp(0.5 * lv) * e;
      lr += -0.5 * lv - 0.5 * e * e + 0.5 * z * z;
    }
    acc += lr;
  }
  return acc / draws;
}

}  // namespace

TEST_CASE("all-zero mapper gives the standard normal posterior") {
  Mapper m(5, 7, 3);
  Rng rng(1);
  Tensor x = rng.normal_tensor(4, 5);
  auto p = map_posterior(m, x);
  CHECK(p.mu == Tensor(4, 3));
  CHECK(p.log_var == Tensor(4, 3));
  CHECK(kl_to_marginal(p) == 0.0);
}

TEST_CASE("duplicated rows map identically; map_point is the mean") {
  Mapper m(4, 8, 3);
  Rng rng(2);
  m.init(rng);
  m.logvar_head.weight.value = rng.normal_tensor(8, 3, 0.5);
  Tensor one = rng.normal_tensor(1, 4);
  Tensor x(3, 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) x(r, j) = one(0, j);
  auto p = map_posterior(m, x);
  for (std::size_t r = 1; r < 3; ++r)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(p.mu(r, j) == p.mu(0, j));
      CHECK(p.log_var(r, j) == p.log_var(0, j));
    }
  CHECK(map_point(m, x) == p.mu);
}

TEST_CASE("log-variance is clamped to [-10, 10]") {
  Mapper m(2, 3, 2);
  m.logvar_head.bias.value = Tensor::from_rows({{50, -50}});
  auto p = map_posterior(m, Tensor(1, 2));
  CHECK(p.log_var(0, 0) == 10.0f);
  CHECK(p.log_var(0, 1) == -10.0f);
}

TEST_CASE("reparameterized sampling") {
  auto p = fixed_posterior({1.0f, -2.0f}, {0.0f, static_cast<float>(std::log(4.0))});
  CHECK(sample_reparam(p, Tensor(1, 2)) == p.mu);
  CHECK_THROWS_AS(sample_reparam(p, Tensor(2, 2)), DimensionError);

  const int n = 100000;
  GaussianPosterior many;
  many.mu = Tensor(n, 2);
  many.log_var = Tensor(n, 2);
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      many.mu(i, j) = p.mu(0, j), many.log_var(i, j) = p.log_var(0, j);
  Rng rng(3);
  Tensor z = sample_reparam(many, rng.normal_tensor(n, 2));
  const double want_var[2] = {1.0, 4.0};
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) s += z(i, j), ss += double(z(i, j)) * z(i, j);
    const double mean = s / n, var = ss / n - mean * mean;
    CHECK(std::abs(mean - p.mu(0, j)) <= 0.02 * std::abs(p.mu(0, j)));
    CHECK(std::abs(var - want_var[j]) <= 0.02 * want_var[j]);
  }
}

TEST_CASE("closed-form KL: worked values, nonnegativity, Monte-Carlo agreement") {
  CHECK(kl_to_marginal(fixed_posterior({0, 0}, {0, 0})) == 0.0);
  CHECK(kl_to_marginal(fixed_posterior({1}, {0})) == Approx(0.5));
  // 0.5 * (e - 1 - 1) for a single unit log-variance.
  CHECK(kl_to_marginal(fixed_posterior({0}, {1})) == Approx(0.5 * (std::exp(1.0) - 2.0)));

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    GaussianPosterior p;
    p.mu = rng.normal_tensor(3, 4);
    p.log_var = rng.uniform_tensor(3, 4, -3, 3);
    CHECK(kl_to_marginal(p) >= 0.0);
  }
  for (int trial = 0; trial < 5; ++trial) {
    GaussianPosterior p;
    p.mu = rng.normal_tensor(1, 4);
    p.log_var = rng.uniform_tensor(1, 4, -1, 1);
    const double exact = kl_to_marginal(p);
    CHECK(monte_carlo_kl(p, 200000, rng) == Approx(exact).epsilon(0.02));
  }
}

TEST_CASE("batch KL is the mean of per-row KLs") {
  Rng rng(5);
  GaussianPosterior p;
  p.mu = rng.normal_tensor(4, 3);
  p.log_var = rng.uniform_tensor(4, 3, -2, 2);
  double mean = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    GaussianPosterior row;
    row.mu = Tensor(1, 3);
    row.log_var = Tensor(1, 3);
    for (std::size_t j = 0; j < 3; ++j) row.mu(0, j) = p.mu(r, j), row.log_var(0, j) = p.log_var(r, j);
    mean += kl_to_marginal(row) / 4;
  }
  CHECK(kl_to_marginal(p) == Approx(mean).epsilon(1e-6));
}
