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
#include <numeric>

#include "gradcheck.hpp"
#include "guda/trainer.hpp"
#include "guda/unlearning.hpp"
#include "oracles.hpp"

namespace guda {
namespace {

using testing::check_gradient;

Schedule sched(int T = 50) { return build_schedule(T, ScheduleKind::squared_cosine); }

Architecture small_arch(int cond_dim = 0, int in = 2) {
  Architecture a;
  a.input_dim = in;
  a.hidden_dims = {6, 5};
  a.time_embed_dim = 4;
  a.cond_dim = cond_dim;
  return a;
}

std::vector<TrainItem> items_from(const std::vector<Vec>& xs, const Vec& cond) {
  std::vector<TrainItem> out;
  for (const auto& x : xs) out.push_back({x, cond});
  return out;
}

// Three groups, condition = [one-hot(3) | 3-d descriptor]. The descriptor set
// of group g has mean protos[g].
GroupedDataset conditional_dataset(const std::vector<Vec>& protos, int per_group, std::uint64_t seed) {
  GroupedDataset d;
  d.dim = 2;
  d.content_dim = static_cast<int>(protos.size());
  NormalSampler rng(seed);
  for (std::size_t g = 0; g < protos.size(); ++g) {
    std::vector<Vec> pts;
    const double ang = 2.0 * M_PI * g / protos.size();
    for (int i = 0; i < per_group; ++i)
      pts.push_back({2 * std::cos(ang) + 0.2 * rng(), 2 * std::sin(ang) + 0.2 * rng()});
    d.groups.push_back(pts);
    d.group_names.push_back("g" + std::to_string(g));
    Vec u{0.05, -0.03, 0.02};
    d.descriptors.push_back({{protos[g][0] + u[0], protos[g][1] + u[1], protos[g][2] + u[2]},
                             {protos[g][0] - u[0], protos[g][1] - u[1], protos[g][2] - u[2]},
                             protos[g]});
    Vec c(protos.size() + 3, 0.0);
    c[g] = 1.0;
    std::copy(protos[g].begin(), protos[g].end(), c.begin() + protos.size());
    d.cond_vectors.push_back(c);
  }
  return d;
}

std::vector<Vec> example_protos() {
  return {{1.0, 0.0, 0.0}, {0.9, std::sqrt(1 - 0.81), 0.0}, {0.1, 0.0, std::sqrt(0.99)}};
}

// ---------------------------------------------------------------------------

TEST(ImportanceWeights, Examples) {
  auto s = sched();
  const int t = 25;
  const double a = std::sqrt(s.alpha_bar(t)), sg = s.sigma(t);
  const Vec xt{0.4};
  auto w1 = importance_weights(std::vector<Vec>{{1.7}}, xt, t, s);
  ASSERT_EQ(w1.size(), 1u);
  EXPECT_DOUBLE_EQ(w1[0], 1.0);

  // x_t equidistant from both scaled points
  auto w2 = importance_weights(std::vector<Vec>{{(0.4 - 0.3) / a}, {(0.4 + 0.3) / a}}, xt, t, s);
  EXPECT_NEAR(w2[0], 0.5, 1e-14);
  EXPECT_NEAR(w2[1], 0.5, 1e-14);

  // squared distances 0 and 2 sigma^2
  auto w3 = importance_weights(std::vector<Vec>{{0.4 / a}, {(0.4 - std::sqrt(2.0) * sg) / a}}, xt, t, s);
  EXPECT_NEAR(w3[0], 0.7310585786, 1e-9);
  EXPECT_NEAR(w3[1], 0.2689414214, 1e-9);

  EXPECT_THROW(importance_weights(std::vector<Vec>{}, xt, t, s), InvalidArgument);
}

TEST(ImportanceWeights, NormalizedAndPermutationEquivariant) {
  auto s = sched(100);
  NormalSampler rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec> pts;
    for (int i = 0; i < 7; ++i) pts.push_back(rng.vector(2));
    const Vec xt = rng.vector(2);
    const int t = static_cast<int>(rng.uniform_int(1, 100));
    auto w = importance_weights(pts, xt, t, s);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (double v : w) EXPECT_GE(v, 0.0);
    std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
    std::vector<Vec> shuffled;
    for (auto i : perm) shuffled.push_back(pts[i]);
    auto ws = importance_weights(shuffled, xt, t, s);
    for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_NEAR(ws[j], w[perm[j]], 1e-15);
  }
}

TEST(ImportanceWeights, FarPointsDoNotUnderflowToNaN) {
  auto s = sched(100);
  auto w = importance_weights(std::vector<Vec>{{1e3}, {1e3 + 1}}, Vec{-1e3}, 2, s);
  EXPECT_TRUE(all_finite(w));
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
}

TEST(RetrackTarget, FullKIsEmpiricalDenoiser) {
  auto s = sched(100);
  NormalSampler rng(3);
  std::vector<Vec> pts;
  for (int i = 0; i < 9; ++i) pts.push_back(rng.vector(2));
  const Vec xt = rng.vector(2);
  auto full = retrack_target(pts, xt, 60, 9, s);
  auto emp = empirical_denoiser(pts, xt, 60, s);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(full[k], emp[k], 1e-13);
}

TEST(RetrackTarget, KOneIsNearestPoint) {
  auto s = sched(100);
  NormalSampler rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec> pts;
    for (int i = 0; i < 6; ++i) pts.push_back(rng.vector(2));
    const Vec xt = rng.vector(2);
    const int t = static_cast<int>(rng.uniform_int(1, 100));
    const double a = std::sqrt(s.alpha_bar(t));
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = std::pow(xt[0] - a * pts[i][0], 2) + std::pow(xt[1] - a * pts[i][1], 2);
      if (d < bd) bd = d, best = i;
    }
    auto out = retrack_target(pts, xt, t, 1, s);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(out[k], (xt[k] - a * pts[best][k]) / s.sigma(t), 1e-12);
  }
}

TEST(RetrackTarget, KTwoCollinear) {
  auto s = sched(100);
  const int t = 50;
  const double a = std::sqrt(s.alpha_bar(t)), sg = s.sigma(t);
  // 1-D points at scaled offsets 0, 0.5, 3 from x_t; K = 2 drops the last one.
  const Vec xt{1.0};
  std::vector<Vec> pts{{(1.0 - 3.0) / a}, {1.0 / a}, {(1.0 - 0.5) / a}};
  auto out = retrack_target(pts, xt, t, 2, s);
  const double w0 = 1.0, w1 = std::exp(-0.25 / (2 * sg * sg));
  const double expect = (w0 * 0.0 + w1 * 0.5 / sg) / (w0 + w1);
  EXPECT_NEAR(out[0], expect, 1e-12);
  EXPECT_THROW(retrack_target(pts, xt, t, 0, s), InvalidArgument);
  EXPECT_THROW(retrack_target(pts, xt, t, 4, s), InvalidArgument);
}

TEST(RetrackTarget, TieBreakPrefersLowerIndex) {
  auto s = sched(100);
  const Vec xt{0.0};
  const double a = std::sqrt(s.alpha_bar(40));
  std::vector<Vec> pts{{1.0 / a}, {-1.0 / a}};
  auto idx = nearest_retain(pts, xt, 1, a);
  EXPECT_EQ(idx[0], 0u);
}

TEST(RetrackTarget, TruncationConsistency) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto st = testing::truncation_study(150, 32, seed);
    EXPECT_TRUE(testing::aggregate_non_increasing(st)) << "seed " << seed;
    EXPECT_TRUE(st.mass_monotone);
    EXPECT_LT(st.max_identity_error, 1e-9);
    EXPECT_NEAR(st.mean_error.back(), 0.0, 1e-12);
  }
}

// A single instance where ||target_K - target_full|| grows with K; the
// retained weight mass still grows.
TEST(RetrackTarget, PerInstanceErrorIsNotMonotone) {
  auto s = sched(100);
  const int t = 60;
  const double a = std::sqrt(s.alpha_bar(t)), sg = s.sigma(t);
  const Vec xt{0.0};
  // eps offsets 0, +1, -1.01, -1.02
  std::vector<Vec> pts{{0.0}, {-sg * 1.0 / a}, {sg * 1.01 / a}, {sg * 1.02 / a}};
  auto full = retrack_target(pts, xt, t, 4, s);
  const double e1 = std::abs(retrack_target(pts, xt, t, 1, s)[0] - full[0]);
  const double e2 = std::abs(retrack_target(pts, xt, t, 2, s)[0] - full[0]);
  EXPECT_GT(e2, e1);
}

TEST(Unbiasedness, ReweightedForgetGradientMatchesRetainGradient) {
  auto r = testing::unbiasedness_study(100000, 17);
  EXPECT_LT(r.max_z, 3.0);
  for (int c = 0; c < 3; ++c) EXPECT_GT(std::abs(r.retain_mean[c]), 0.0);
}

// ---------------------------------------------------------------------------

TEST(RetrackForgetLoss, MatchesManualTargets) {
  auto s = sched();
  auto p = init_network(small_arch(), 1);
  NormalSampler rng(2);
  std::vector<Vec> retain, fx;
  for (int i = 0; i < 12; ++i) retain.push_back(rng.vector(2));
  for (int i = 0; i < 4; ++i) fx.push_back(rng.vector(2));
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.K = 5;
  cfg.kl_cap = INFINITY;
  const auto forget = items_from(fx, {});
  auto lg = retrack_forget_loss(p, forget, retain, cfg, s, 99);
  double manual = 0.0;
  for (const auto& f : forget) {
    auto d = draw_noise(item_seed(99, f.x0, f.cond), 2, cfg.t_lo, cfg.t_hi);
    EXPECT_GE(d.t, 25);
    EXPECT_LE(d.t, 49);
    const Vec xt = forward_marginal(s, f.x0, d.t, d.eps);
    const Vec tg = retrack_target(retain, xt, d.t, cfg.K, s);
    const Vec pr = predict_eps(p, xt, d.t, 50, {});
    manual += squared_distance(pr, tg) / 2.0;
  }
  EXPECT_NEAR(lg.loss, manual / forget.size(), 1e-12);
}

TEST(RetrackForgetLoss, GradientMatchesFiniteDifferences) {
  auto s = sched();
  auto p = init_network(small_arch(), 4);
  NormalSampler rng(8);
  std::vector<Vec> retain, fx;
  for (int i = 0; i < 10; ++i) retain.push_back(rng.vector(2));
  for (int i = 0; i < 3; ++i) fx.push_back(rng.vector(2));
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.K = 4;
  cfg.kl_cap = 1e6;
  const auto forget = items_from(fx, {});
  auto lg = retrack_forget_loss(p, forget, retain, cfg, s, 5);
  auto gc = check_gradient(p, lg.grad, [&](const DenoiserParams& q) {
    return retrack_forget_loss(q, forget, retain, cfg, s, 5).loss;
  });
  EXPECT_TRUE(gc.ok) << gc.max_rel_error;
}

TEST(RetrackForgetLoss, CapLimitsEachSample) {
  auto s = sched();
  auto p = init_network(small_arch(), 4);
  NormalSampler rng(8);
  std::vector<Vec> retain, fx;
  for (int i = 0; i < 10; ++i) retain.push_back(Vec{3 + rng(), rng()});
  for (int i = 0; i < 6; ++i) fx.push_back(Vec{-3 + rng(), rng()});
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.kl_cap = INFINITY;
  const auto forget = items_from(fx, {});
  const auto items = retrack_forget_items(p, forget, retain, cfg, s, 1);
  double raw_capped = 0.0;
  const double cap = 0.05;
  for (const auto& it : items) {
    const double e = squared_distance(predict_eps(p, it.xt, it.t, 50, it.cond), it.target) / 2.0;
    raw_capped += std::min(e, cap);
  }
  cfg.kl_cap = cap;
  auto lg = retrack_forget_loss(p, forget, retain, cfg, s, 1);
  EXPECT_NEAR(lg.loss, raw_capped / items.size(), 1e-12);

  cfg.kl_cap = 0.0;
  auto zero = retrack_forget_loss(p, forget, retain, cfg, s, 1);
  EXPECT_EQ(zero.loss, 0.0);
  for (double g : zero.grad) EXPECT_EQ(g, 0.0);
}

TEST(EsdForgetLoss, GuidanceTargetHandCase) {
  const Vec eu{0.0}, ec{1.0};
  EXPECT_DOUBLE_EQ(negative_guidance_target(eu, ec, 5.0)[0], -5.0);
  EXPECT_DOUBLE_EQ(negative_guidance_target(Vec{0.5}, Vec{0.5}, 3.0)[0], 0.5);
}

TEST(EsdForgetLoss, ZeroAtFrozenWithoutGuidanceAndGradientChecks) {
  auto s = sched();
  auto frozen = init_network(small_arch(2), 6);
  NormalSampler rng(1);
  std::vector<Vec> fx;
  for (int i = 0; i < 3; ++i) fx.push_back(rng.vector(2));
  const Vec cf{1.0, 0.0};
  const auto forget = items_from(fx, cf);
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::esd, 50);
  cfg.guidance_weight = 0.0;
  EXPECT_NEAR(esd_forget_loss(frozen, frozen, forget, cf, cfg, s, 3).loss, 0.0, 1e-24);

  cfg.guidance_weight = 2.0;
  auto p = init_network(small_arch(2), 7);
  auto lg = esd_forget_loss(p, frozen, forget, cf, cfg, s, 3);
  EXPECT_GT(lg.loss, 0.0);
  auto gc = check_gradient(p, lg.grad, [&](const DenoiserParams& q) {
    return esd_forget_loss(q, frozen, forget, cf, cfg, s, 3).loss;
  });
  EXPECT_TRUE(gc.ok) << gc.max_rel_error;

  // targets come from the frozen model only
  const auto items = esd_forget_items(frozen, forget, cf, cfg, s, 3);
  EXPECT_NEAR(regression_loss_and_grad(p, 50, items).loss, lg.loss, 1e-14);
  for (const auto& it : items) EXPECT_EQ(it.cond, Vec({0.0, 0.0}));

  auto uncond = init_network(small_arch(0), 1);
  EXPECT_THROW(esd_forget_loss(uncond, uncond, forget, Vec{}, cfg, s, 3), InvalidArgument);
}

TEST(PreservationLoss, FixedPointAndGradient) {
  auto s = sched();
  auto frozen = init_network(small_arch(), 2);
  NormalSampler rng(4);
  std::vector<Vec> rx;
  for (int i = 0; i < 5; ++i) rx.push_back(rng.vector(2));
  const auto rb = items_from(rx, {});
  auto at = preservation_loss(frozen, frozen, rb, s, 8);
  EXPECT_EQ(at.loss, 0.0);
  for (double g : at.grad) EXPECT_EQ(g, 0.0);

  auto p = init_network(small_arch(), 3);
  auto lg = preservation_loss(p, frozen, rb, s, 8);
  auto gc = check_gradient(p, lg.grad, [&](const DenoiserParams& q) {
    return preservation_loss(q, frozen, rb, s, 8).loss;
  });
  EXPECT_TRUE(gc.ok) << gc.max_rel_error;
}

TEST(PreservationLoss, DuplicationInvariant) {
  auto s = sched();
  auto frozen = init_network(small_arch(), 2);
  auto p = init_network(small_arch(), 3);
  NormalSampler rng(4);
  std::vector<Vec> rx;
  for (int i = 0; i < 5; ++i) rx.push_back(rng.vector(2));
  auto doubled = rx;
  doubled.insert(doubled.end(), rx.begin(), rx.end());
  auto a = preservation_loss(p, frozen, items_from(rx, {}), s, 8);
  auto b = preservation_loss(p, frozen, items_from(doubled, {}), s, 8);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_NEAR(a.grad[i], b.grad[i], 1e-14);
}

// ---------------------------------------------------------------------------

TEST(AnchorSelection, DistributionExamples) {
  auto d = conditional_dataset(example_protos(), 4, 1);
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::cond_anchor, 50);
  auto sel = make_anchor_selector(d, cfg);
  auto pi = anchor_distribution(sel, 0);
  EXPECT_EQ(pi[0], 0.0);
  EXPECT_NEAR(pi[1], 0.7988, 5e-5);
  EXPECT_NEAR(pi[2], 0.2012, 5e-5);

  sel.eta_mix = 1.0;
  pi = anchor_distribution(sel, 0);
  EXPECT_NEAR(pi[1], 0.5, 1e-15);
  EXPECT_NEAR(pi[2], 0.5, 1e-15);
  EXPECT_THROW(anchor_distribution(sel, 3), InvalidArgument);

  AnchorSelector one;
  one.prototypes = {{1.0, 0.0, 0.0}};
  EXPECT_THROW(anchor_distribution(one, 0), InvalidArgument);
}

TEST(AnchorSelection, NeverDrawsForgetGroupAndFollowsPi) {
  auto d = conditional_dataset(example_protos(), 4, 1);
  auto sel = make_anchor_selector(d, UnlearnConfig::defaults(UnlearnMethod::cond_anchor, 50));
  const auto pi = anchor_distribution(sel, 0);
  std::vector<int> counts(3, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto a = anchor_select(sel, 0, derive_seed(42, i));
    ASSERT_NE(a.group, 0);
    ++counts[a.group];
    // content block stays the forget group's
    EXPECT_EQ(a.cond[0], 1.0);
    EXPECT_EQ(a.cond[a.group], 0.0);
  }
  for (int g = 1; g < 3; ++g) {
    const double se = std::sqrt(pi[g] * (1 - pi[g]) / n);
    EXPECT_NEAR(counts[g] / static_cast<double>(n), pi[g], 4 * se);
  }
}

TEST(AnchorSelection, DescriptorBlockComesFromChosenGroup) {
  auto d = conditional_dataset(example_protos(), 4, 1);
  auto sel = make_anchor_selector(d, UnlearnConfig::defaults(UnlearnMethod::cond_anchor, 50));
  // all three descriptors are drawn, so the block equals the set mean
  for (int i = 0; i < 50; ++i) {
    auto a = anchor_select(sel, 2, derive_seed(7, i));
    const Vec proto = example_protos()[a.group];
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.cond[3 + k], proto[k], 1e-14);
  }
}

TEST(ConditionalForgetLoss, RedirectionIdentityAndGradient) {
  auto s = sched();
  auto d = conditional_dataset(example_protos(), 4, 1);
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::cond_anchor, 50);
  auto sel = make_anchor_selector(d, cfg);
  auto frozen = init_network(small_arch(6), 9);
  const auto forget = items_from(d.groups[0], d.cond_vectors[0]);

  // anchor equal to the forget condition: nothing to redirect
  auto same = conditional_forget_loss(frozen, frozen, forget, sel, 0, cfg, s, 4, &d.cond_vectors[0]);
  EXPECT_EQ(same.loss, 0.0);

  auto p = init_network(small_arch(6), 10);
  auto lg = conditional_forget_loss(p, frozen, forget, sel, 0, cfg, s, 4);
  auto gc = check_gradient(p, lg.grad, [&](const DenoiserParams& q) {
    return conditional_forget_loss(q, frozen, forget, sel, 0, cfg, s, 4).loss;
  });
  EXPECT_TRUE(gc.ok) << gc.max_rel_error;

  const auto items = conditional_forget_items(frozen, forget, sel, 0, cfg, s, 4);
  EXPECT_NEAR(regression_loss_and_grad(p, 50, items).loss, lg.loss, 1e-14);
  for (const auto& it : items) EXPECT_EQ(it.cond, d.cond_vectors[0]);
}

// ---------------------------------------------------------------------------

GroupedDataset two_groups(int per_group, std::uint64_t seed) {
  GroupedDataset d;
  d.dim = 2;
  NormalSampler rng(seed);
  for (int g = 0; g < 2; ++g) {
    std::vector<Vec> pts;
    for (int i = 0; i < per_group; ++i) pts.push_back({(g ? 2.0 : -2.0) + 0.3 * rng(), 0.3 * rng()});
    d.groups.push_back(pts);
    d.group_names.push_back("g" + std::to_string(g));
  }
  return d;
}

double eps_loss(const DenoiserParams& p, const std::vector<Vec>& xs, const Schedule& s) {
  double acc = 0.0;
  const int reps = 8;
  for (int r = 0; r < reps; ++r)
    acc += loss_and_grad(p, items_from(xs, null_condition(p)), s, derive_seed(1234, r)).loss;
  return acc / reps;
}

TEST(Unlearn, ZeroStepsReturnsInput) {
  auto s = sched();
  auto d = two_groups(16, 1);
  auto p = init_network(small_arch(), 1);
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.steps = 0;
  auto r = unlearn(p, d, 0, cfg, s);
  EXPECT_EQ(r.params.weights, p.weights);
  EXPECT_EQ(r.steps, 0);
}

TEST(Unlearn, NoForgetWeightStaysAtPreservationOptimum) {
  auto s = sched();
  auto d = two_groups(16, 1);
  auto p = init_network(small_arch(), 1);
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.lambda_forget = 0.0;
  cfg.steps = 20;
  cfg.batch_size = 8;
  auto r = unlearn(p, d, 0, cfg, s);
  EXPECT_EQ(r.steps, 20);
  const auto rb = items_from(d.groups[1], {});
  const double before = preservation_loss(p, p, rb, s, 77).loss;
  const double after = preservation_loss(r.params, p, rb, s, 77).loss;
  EXPECT_LE(after, before);
}

TEST(Unlearn, RaisesForgetGroupLoss) {
  auto s = sched();
  auto d = two_groups(64, 2);
  Architecture a;
  a.input_dim = 2;
  a.hidden_dims = {32, 32};
  a.time_embed_dim = 8;
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 32;
  tc.lr = 2e-3;
  tc.seed = 5;
  auto full = train_full(d, a, tc, s).params;
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.lambda_forget = 1.0;
  cfg.kl_cap = 10.0;
  cfg.lr = 1e-3;
  cfg.steps = 100;
  cfg.batch_size = 32;
  auto r = unlearn(full, d, 0, cfg, s);
  const double before = eps_loss(full, d.groups[0], s);
  const double after = eps_loss(r.params, d.groups[0], s);
  EXPECT_GT(after, before);
  // the retained group is disturbed much less
  const double rb = eps_loss(full, d.groups[1], s), ra = eps_loss(r.params, d.groups[1], s);
  EXPECT_LT(ra - rb, after - before);
}

TEST(Unlearn, RejectsInvalidConfigurations) {
  auto s = sched();
  auto d = two_groups(8, 1);
  auto p = init_network(small_arch(), 1);
  auto cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.lambda_pres = 2.0;
  EXPECT_THROW(unlearn(p, d, 0, cfg, s), InvalidArgument);
  cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  cfg.K = 100;
  EXPECT_THROW(unlearn(p, d, 0, cfg, s), InvalidArgument);
  cfg = UnlearnConfig::defaults(UnlearnMethod::esd, 50);
  EXPECT_THROW(unlearn(p, d, 0, cfg, s), InvalidArgument);
  cfg = UnlearnConfig::defaults(UnlearnMethod::cond_anchor, 50);
  cfg.lambda_forget = 0.5;
  EXPECT_THROW(cfg.validate(50), InvalidArgument);
  cfg = UnlearnConfig::defaults(UnlearnMethod::retrack, 50);
  EXPECT_THROW(unlearn(p, d, 2, cfg, s), InvalidArgument);
  EXPECT_THROW(unlearn_method_from_string("bogus"), InvalidArgument);
  EXPECT_EQ(unlearn_method_from_string("cond-anchor"), UnlearnMethod::cond_anchor);
}

TEST(Unlearn, DeterministicAndConditionalMethodsRun) {
  auto s = sched();
  auto d = conditional_dataset(example_protos(), 8, 3);
  auto p = init_network(small_arch(6), 1);
  for (auto m : {UnlearnMethod::esd, UnlearnMethod::cond_anchor, UnlearnMethod::retrack}) {
    auto cfg = UnlearnConfig::defaults(m, 50);
    cfg.steps = 3;
    cfg.batch_size = 4;
    auto a = unlearn(p, d, 1, cfg, s);
    auto b = unlearn(p, d, 1, cfg, s);
    EXPECT_EQ(a.params.weights, b.params.weights) << to_string(m);
    EXPECT_NE(a.params.weights, p.weights) << to_string(m);
  }
}

TEST(UnlearnConfig, JsonRoundTrip) {
  auto c = UnlearnConfig::defaults(UnlearnMethod::esd, 100);
  c.K = 7;
  c.seed = 99;
  nlohmann::json j = c;
  auto back = UnlearnConfig::defaults(UnlearnMethod::retrack, 100);
  merge_json(j, back);
  EXPECT_EQ(back.method, UnlearnMethod::esd);
  EXPECT_EQ(back.K, 7);
  EXPECT_EQ(back.t_lo, c.t_lo);
  EXPECT_EQ(back.t_hi, c.t_hi);
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.seed, 99u);
}

}  // namespace
}  // namespace guda
