/* Copyright 2026 The GUDA Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>

#include "guda/sampler.hpp"
#include "guda/schedule.hpp"
#include "guda/trainer.hpp"

namespace guda {
namespace {

TEST(Schedule, LinearTwoStep) {
  auto s = Schedule::from_betas({0.1, 0.2});
  EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
  EXPECT_NEAR(s.sigma(1), std::sqrt(0.1), 1e-15);
  EXPECT_NEAR(s.sigma(2), std::sqrt(0.28), 1e-15);
}

TEST(Schedule, SingleStep) {
  auto s = Schedule::from_betas({0.5});
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.5);
}

TEST(Schedule, RejectsZeroSteps) {
  EXPECT_THROW(build_schedule(0, ScheduleKind::linear), InvalidArgument);
  EXPECT_THROW(Schedule::from_betas({0.1, 1.0}), InvalidArgument);
}

// Reference cosine schedule evaluated in long double directly from the
// closed form, with the same 0.999 clipping applied step by step.
TEST(Schedule, SquaredCosineMatchesClosedForm) {
  const int T = 4000;
  auto s = build_schedule(T, ScheduleKind::squared_cosine);
  auto f = [&](long double t) {
    long double c = std::cos((t / T + 0.008L) / 1.008L * 3.14159265358979323846L / 2.0L);
    return c * c;
  };
  long double prod = 1.0L;
  for (int t = 1; t <= T; ++t) {
    long double beta = 1.0L - f(t) / f(t - 1);
    if (beta > 0.999L) beta = 0.999L;
    prod *= 1.0L - beta;
    ASSERT_NEAR(s.alpha_bar(t), static_cast<double>(prod), 1e-9 * static_cast<double>(prod) + 1e-300)
        << "t=" << t;
  }
  // Away from the clipped tail the product equals the unclipped ratio.
  EXPECT_NEAR(s.alpha_bar(2000), static_cast<double>(f(2000) / f(0)), 1e-9);
  EXPECT_GT(s.alpha_bar(T), 0.0);
  EXPECT_LT(s.alpha_bar(T), 1e-6);
}

class ScheduleInvariants : public ::testing::TestWithParam<ScheduleKind> {};

TEST_P(ScheduleInvariants, Hold) {
  for (int T : {1, 2, 7, 100, 1000}) {
    auto s = build_schedule(T, GetParam());
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      EXPECT_GT(s.beta(t), 0.0);
      EXPECT_LT(s.beta(t), 1.0);
      prod *= 1.0 - s.beta(t);
      EXPECT_NEAR(s.alpha_bar(t), prod, 1e-12 * prod);
      EXPECT_NEAR(s.sigma(t) * s.sigma(t) + s.alpha_bar(t), 1.0, 1e-12);
      if (t > 1) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, ScheduleInvariants,
                         ::testing::Values(ScheduleKind::linear, ScheduleKind::squared_cosine));

TEST(ForwardMarginal, Examples) {
  auto s = Schedule::from_betas({0.1, 0.2});
  Vec x0{1.5, -2.0};
  auto zero_noise = forward_marginal(s, x0, 2, Vec{0.0, 0.0});
  EXPECT_NEAR(zero_noise[0], std::sqrt(0.72) * 1.5, 1e-15);
  EXPECT_NEAR(zero_noise[1], std::sqrt(0.72) * -2.0, 1e-15);

  auto v = forward_marginal(s, Vec{1.0}, 2, Vec{1.0});
  EXPECT_NEAR(v[0], 1.3777, 1e-4);

  auto z = forward_marginal(s, Vec{0.0, 0.0}, 1, Vec{0.3, -0.7});
  EXPECT_NEAR(z[0], std::sqrt(0.1) * 0.3, 1e-15);
  EXPECT_NEAR(z[1], std::sqrt(0.1) * -0.7, 1e-15);

  EXPECT_THROW(forward_marginal(s, x0, 3, Vec{0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(forward_marginal(s, x0, 0, Vec{0.0, 0.0}), InvalidArgument);
}

// Composing q(x_t | x_{t-1}) step by step reproduces the marginal.
TEST(ForwardMarginal, ComposesSingleStepKernels) {
  for (int T : {1, 3, 16}) {
    auto s = build_schedule(T, ScheduleKind::squared_cosine);
    double mean_coef = 1.0, var = 0.0;
    for (int t = 1; t <= T; ++t) {
      mean_coef *= std::sqrt(s.alpha(t));
      var = s.alpha(t) * var + s.beta(t);
      EXPECT_NEAR(mean_coef, std::sqrt(s.alpha_bar(t)), 1e-9);
      EXPECT_NEAR(var, s.sigma(t) * s.sigma(t), 1e-9);
    }
  }
}

TEST(TruePosterior, VarianceExample) {
  auto s = Schedule::from_betas({0.1, 0.2});
  auto law = true_posterior(s, Vec{0.0}, Vec{0.0}, 2);
  EXPECT_NEAR(law.variance, 0.1 / 0.28 * 0.2, 1e-15);
  EXPECT_NEAR(law.variance, 0.0714285714, 1e-9);
  EXPECT_THROW(true_posterior(s, Vec{0.0}, Vec{0.0}, 1), InvalidArgument);
}

TEST(TruePosterior, NoNoiseStepReturnsXt) {
  auto s = Schedule::from_betas({0.1, 1e-14});
  auto law = true_posterior(s, Vec{3.0}, Vec{-1.25}, 2);
  EXPECT_NEAR(law.mean[0], -1.25, 1e-9);
}

// Bayes rule on a 1-D grid: q(x_{t-1} | x_0) q(x_t | x_{t-1}), normalized.
TEST(TruePosterior, MatchesQuadrature) {
  auto s = Schedule::from_betas({0.1, 0.2, 0.3});
  for (int t : {2, 3}) {
    for (double x0 : {-1.0, 0.4}) {
      const double xt = -x0;
      const double m_prev = std::sqrt(s.alpha_bar(t - 1)) * x0;
      const double v_prev = 1.0 - s.alpha_bar(t - 1);
      const double a = std::sqrt(s.alpha(t));
      const double b = s.beta(t);
      double z = 0.0, m1 = 0.0, m2 = 0.0;
      const double h = 1e-4;
      for (double x = -12.0; x <= 12.0; x += h) {
        const double logp = -0.5 * (x - m_prev) * (x - m_prev) / v_prev - 0.5 * (xt - a * x) * (xt - a * x) / b;
        const double p = std::exp(logp);
        z += p;
        m1 += p * x;
        m2 += p * x * x;
      }
      const double mean = m1 / z;
      const double var = m2 / z - mean * mean;
      auto law = true_posterior(s, Vec{x0}, Vec{xt}, t);
      EXPECT_NEAR(law.mean[0], mean, 1e-6);
      EXPECT_NEAR(law.variance, var, 1e-6);
    }
  }
}

TEST(ModelPosterior, TrueEpsReproducesTruePosterior) {
  auto s = build_schedule(50, ScheduleKind::squared_cosine);
  NormalSampler rng(5);
  for (int t = 2; t <= 50; ++t) {
    Vec x0 = rng.vector(3), eps = rng.vector(3);
    Vec xt = forward_marginal(s, x0, t, eps);
    auto q = true_posterior(s, x0, xt, t);
    auto p = model_posterior(s, eps, xt, t);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(q.mean[i], p.mean[i], 1e-10) << "t=" << t;
    EXPECT_DOUBLE_EQ(q.variance, p.variance);
  }
}

TEST(ModelPosterior, ZeroEpsAndHandExpansion) {
  auto s = Schedule::from_betas({0.1, 0.2});
  auto p0 = model_posterior(s, Vec{0.0}, Vec{2.0}, 2);
  EXPECT_NEAR(p0.mean[0], 2.0 / std::sqrt(0.8), 1e-15);
  // (1/sqrt(0.8)) (0.7 - (0.2/sqrt(0.28)) * -0.3)
  auto p1 = model_posterior(s, Vec{-0.3}, Vec{0.7}, 2);
  EXPECT_NEAR(p1.mean[0], (0.7 + 0.2 / std::sqrt(0.28) * 0.3) / std::sqrt(0.8), 1e-15);
  EXPECT_THROW(model_posterior(s, Vec{0.0}, Vec{0.0}, 3), InvalidArgument);
}

TEST(Sampler, DeterministicAndPure) {
  auto s = build_schedule(40, ScheduleKind::squared_cosine);
  std::vector<Vec> pts{{1.0, 2.0}, {-1.0, 0.5}};
  EmpiricalModel m(pts, s);
  EmpiricalModel m2(pts, s);
  for (auto kind : {SamplerKind::ddpm, SamplerKind::ddim}) {
    EXPECT_EQ(sample(s, m, {}, 40, 9, kind), sample(s, m, {}, 40, 9, kind));
    EXPECT_EQ(sample(s, m, {}, 20, 9, kind), sample(s, m2, {}, 20, 9, kind));
  }
  EXPECT_NE(sample(s, m, {}, 40, 9), sample(s, m, {}, 40, 10));
  EXPECT_THROW(sample(s, m, {}, 41, 9), InvalidArgument);
}

TEST(Sampler, SinglePointDatasetRecoversPoint) {
  auto s = build_schedule(200, ScheduleKind::squared_cosine);
  const Vec star{0.8, -1.3};
  EmpiricalModel m(std::vector<Vec>{star}, s);
  for (auto kind : {SamplerKind::ddpm, SamplerKind::ddim}) {
    for (int steps : {200, 50}) {
      const Vec out = sample(s, m, {}, steps, 3, kind);
      EXPECT_LT(std::sqrt(squared_distance(out, star)), 0.1);
    }
  }
}

}  // namespace
}  // namespace guda
