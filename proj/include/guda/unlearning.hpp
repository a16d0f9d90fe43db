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

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "guda/common.hpp"
#include "guda/denoiser.hpp"
#include "guda/optimizer.hpp"
#include "guda/schedule.hpp"
#include "guda/trainer.hpp"

namespace guda {

enum class UnlearnMethod { retrack, esd, cond_anchor };

inline std::string to_string(UnlearnMethod m) {
  switch (m) {
    case UnlearnMethod::retrack: return "retrack";
    case UnlearnMethod::esd: return "esd";
    case UnlearnMethod::cond_anchor: return "cond_anchor";
  }
  return "?";
}

inline UnlearnMethod unlearn_method_from_string(const std::string& s) {
  if (s == "retrack") return UnlearnMethod::retrack;
  if (s == "esd") return UnlearnMethod::esd;
  if (s == "cond_anchor" || s == "cond-anchor") return UnlearnMethod::cond_anchor;
  throw InvalidArgument("unknown unlearning method: " + s);
}

/// retrack and esd weight the forget term (lambda_forget * L_forget + L_pres);
/// cond_anchor weights the preservation term (L_forget + lambda_pres * L_pres).
/// The unused weight must stay at 1.
struct UnlearnConfig {
  UnlearnMethod method = UnlearnMethod::retrack;
  double lambda_forget = 0.03;
  double lambda_pres = 1.0;
  int K = 10;
  double kl_cap = 1.0;
  double guidance_weight = 5.0;
  double tau = 2.0;
  double eta_mix = 0.1;
  int num_descriptors = 3;
  double lr = 1e-4;
  double weight_decay = 0.0;
  int steps = 100;
  int batch_size = 64;
  int t_lo = 1;
  int t_hi = 1;
  std::uint64_t seed = 0;

  /// Defaults scaled to a T-step schedule for the given method.
  static UnlearnConfig defaults(UnlearnMethod m, int T) {
    UnlearnConfig c;
    c.method = m;
    c.t_lo = 1;
    c.t_hi = T;
    switch (m) {
      case UnlearnMethod::retrack:
        c.lambda_forget = 0.03;
        c.lr = 1e-4;
        c.t_lo = std::max(1, static_cast<int>(std::lround(0.5 * T)));
        c.t_hi = std::max(c.t_lo, static_cast<int>(std::lround(0.975 * T)));
        break;
      case UnlearnMethod::esd:
        c.lambda_forget = 0.3;
        c.lr = 3e-4;
        break;
      case UnlearnMethod::cond_anchor:
        c.lambda_forget = 1.0;
        c.lambda_pres = 2.0;
        c.lr = 1e-4;
        break;
    }
    return c;
  }

  void validate(int T) const {
    require(lambda_forget >= 0.0 && lambda_pres >= 0.0, "loss weights must be non-negative");
    if (method == UnlearnMethod::cond_anchor)
      require(lambda_forget == 1.0, "cond_anchor weights the preservation term; lambda_forget must be 1");
    else
      require(lambda_pres == 1.0, "retrack/esd weight the forget term; lambda_pres must be 1");
    require(K >= 1, "K must be >= 1");
    require(kl_cap >= 0.0, "kl_cap must be non-negative");
    require(tau > 0.0, "tau must be positive");
    require(eta_mix >= 0.0 && eta_mix <= 1.0, "eta_mix must be in [0,1]");
    require(lr > 0.0, "lr must be positive");
    require(steps >= 0, "steps must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(num_descriptors >= 1, "num_descriptors must be >= 1");
    require(1 <= t_lo && t_lo <= t_hi && t_hi <= T, "timestep range must satisfy 1 <= lo <= hi <= T");
  }
};

inline void to_json(nlohmann::json& j, const UnlearnConfig& c) {
  j = nlohmann::json{{"method", to_string(c.method)},
                     {"lambda_forget", c.lambda_forget},
                     {"lambda_pres", c.lambda_pres},
                     {"K", c.K},
                     {"kl_cap", c.kl_cap},
                     {"guidance_weight", c.guidance_weight},
                     {"tau", c.tau},
                     {"eta_mix", c.eta_mix},
                     {"num_descriptors", c.num_descriptors},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"timestep_range", {c.t_lo, c.t_hi}},
                     {"seed", c.seed}};
}

/// Reads overrides on top of `c` (which should already hold method defaults).
inline void merge_json(const nlohmann::json& j, UnlearnConfig& c) {
  if (j.contains("method")) c.method = unlearn_method_from_string(j.at("method").get<std::string>());
  c.lambda_forget = j.value("lambda_forget", c.lambda_forget);
  c.lambda_pres = j.value("lambda_pres", c.lambda_pres);
  c.K = j.value("K", c.K);
  c.kl_cap = j.value("kl_cap", c.kl_cap);
  c.guidance_weight = j.value("guidance_weight", c.guidance_weight);
  c.tau = j.value("tau", c.tau);
  c.eta_mix = j.value("eta_mix", c.eta_mix);
  c.num_descriptors = j.value("num_descriptors", c.num_descriptors);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.steps = j.value("steps", j.value("steps_or_epochs", c.steps));
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("timestep_range")) {
    const auto r = j.at("timestep_range").get<std::vector<int>>();
    require(r.size() == 2, "timestep_range must have two entries");
    c.t_lo = r[0];
    c.t_hi = r[1];
  }
  c.seed = j.value("seed", c.seed);
}

// ---------------------------------------------------------------------------
// Importance-weighted redirection targets.

/// Normalized posterior weights over `retain` with a uniform prior,
/// w_i ~ exp(-|x_t - sqrt(abar_t) x_i|^2 / (2 sigma_t^2)).
inline Vec importance_weights(std::span<const Vec> retain, std::span<const double> xt, int t,
                              const Schedule& s) {
  require(!retain.empty(), "importance_weights: empty retain set");
  const double a = std::sqrt(s.alpha_bar(t));
  const double two_var = 2.0 * (1.0 - s.alpha_bar(t));
  Vec w(retain.size());
  for (std::size_t i = 0; i < retain.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < xt.size(); ++k) {
      const double r = xt[k] - a * retain[i][k];
      d2 += r * r;
    }
    w[i] = -d2 / two_var;
  }
  const double mx = *std::max_element(w.begin(), w.end());
  CompensatedSum z;
  for (auto& v : w) {
    v = std::exp(v - mx);
    z.add(v);
  }
  const double zv = z.value();
  for (auto& v : w) v /= zv;
  return w;
}

/// Indices of the K retain points closest to x_t / sqrt(abar_t) (largest
/// weights), ties broken by lower index.
inline std::vector<std::size_t> nearest_retain(std::span<const Vec> retain,
                                               std::span<const double> xt, int K, double sqrt_ab) {
  std::vector<double> d2(retain.size());
  for (std::size_t i = 0; i < retain.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < xt.size(); ++k) {
      const double r = xt[k] - sqrt_ab * retain[i][k];
      acc += r * r;
    }
    d2[i] = acc;
  }
  std::vector<std::size_t> idx(retain.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto k = static_cast<std::ptrdiff_t>(K);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
    return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
  });
  idx.resize(static_cast<std::size_t>(K));
  return idx;
}

/// Top-K truncated, renormalized importance-weighted epsilon target.
inline Vec retrack_target(std::span<const Vec> retain, std::span<const double> xt, int t, int K,
                          const Schedule& s) {
  require(!retain.empty(), "retrack_target: empty retain set");
  require(K >= 1 && static_cast<std::size_t>(K) <= retain.size(), "K must lie in [1, |retain|]");
  const double a = std::sqrt(s.alpha_bar(t));
  const double sg = s.sigma(t);
  std::vector<Vec> subset;
  subset.reserve(static_cast<std::size_t>(K));
  for (std::size_t i : nearest_retain(retain, xt, K, a)) subset.push_back(retain[i]);
  const Vec w = importance_weights(subset, xt, t, s);
  Vec out(xt.size(), 0.0);
  for (std::size_t i = 0; i < subset.size(); ++i)
    for (std::size_t k = 0; k < xt.size(); ++k) out[k] += w[i] * (xt[k] - a * subset[i][k]) / sg;
  return out;
}

// ---------------------------------------------------------------------------
// Forget and preservation objectives.

/// Null condition for the "unconditional" branch, or empty when the network
/// takes no condition.
inline Vec null_condition(const DenoiserParams& p) {
  return Vec(static_cast<std::size_t>(p.arch.cond_dim), 0.0);
}

/// Forget batch: clean forget samples with their (forget) condition.
using ForgetBatch = std::span<const TrainItem>;

// Each objective is split into an item builder, which fixes the noisy inputs
// and the (frozen) targets, and the shared regression loss on top of it.

inline std::vector<RegressionItem> retrack_forget_items(const DenoiserParams& p, ForgetBatch forget,
                                                        std::span<const Vec> retain,
                                                        const UnlearnConfig& cfg, const Schedule& s,
                                                        std::uint64_t seed) {
  require(!forget.empty(), "retrack_forget_loss: empty forget batch");
  require(!retain.empty(), "retrack_forget_loss: empty retain set");
  const Vec cond = null_condition(p);
  std::vector<RegressionItem> items;
  items.reserve(forget.size());
  for (const auto& f : forget) {
    auto d = draw_noise(item_seed(seed, f.x0, f.cond), f.x0.size(), cfg.t_lo, cfg.t_hi);
    Vec xt = forward_marginal(s, f.x0, d.t, d.eps);
    Vec target = retrack_target(retain, xt, d.t, cfg.K, s);
    items.push_back({std::move(xt), d.t, cond, std::move(target)});
  }
  return items;
}

/// Mean over the forget batch of ||eps_theta(x_t, t) - retrack_target||^2 with
/// x_t noised from forget samples and t drawn from the configured range. Each
/// sample's contribution is capped at kl_cap.
inline LossGrad retrack_forget_loss(const DenoiserParams& p, ForgetBatch forget,
                                    std::span<const Vec> retain, const UnlearnConfig& cfg,
                                    const Schedule& s, std::uint64_t seed) {
  const auto items = retrack_forget_items(p, forget, retain, cfg, s, seed);
  return regression_loss_and_grad(p, s.num_steps(), items, cfg.kl_cap);
}

/// eps_uncond - w (eps_cond - eps_uncond)
inline Vec negative_guidance_target(std::span<const double> eps_uncond,
                                    std::span<const double> eps_cond, double w) {
  Vec out(eps_uncond.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = eps_uncond[k] - w * (eps_cond[k] - eps_uncond[k]);
  return out;
}

inline std::vector<RegressionItem> esd_forget_items(const DenoiserParams& frozen, ForgetBatch forget,
                                                    CondView forget_cond, const UnlearnConfig& cfg,
                                                    const Schedule& s, std::uint64_t seed) {
  require(!forget.empty(), "esd_forget_loss: empty forget batch");
  require(frozen.arch.cond_dim > 0, "esd_forget_loss needs a conditional reference model");
  require(static_cast<int>(forget_cond.size()) == frozen.arch.cond_dim,
          "esd_forget_loss: forget condition dimension mismatch");
  const int T = s.num_steps();
  const Vec null = null_condition(frozen);
  std::vector<RegressionItem> items;
  items.reserve(forget.size());
  for (const auto& f : forget) {
    auto d = draw_noise(item_seed(seed, f.x0, f.cond), f.x0.size(), cfg.t_lo, cfg.t_hi);
    Vec xt = forward_marginal(s, f.x0, d.t, d.eps);
    const Vec eu = predict_eps(frozen, xt, d.t, T, null);
    const Vec ec = predict_eps(frozen, xt, d.t, T, forget_cond);
    items.push_back({std::move(xt), d.t, null, negative_guidance_target(eu, ec, cfg.guidance_weight)});
  }
  return items;
}

/// Negative guidance: the student's null-condition branch is pulled toward
/// the frozen reference's guided prediction away from the forget condition.
inline LossGrad esd_forget_loss(const DenoiserParams& p, const DenoiserParams& frozen,
                                ForgetBatch forget, CondView forget_cond,
                                const UnlearnConfig& cfg, const Schedule& s, std::uint64_t seed) {
  require(p.arch.cond_dim == frozen.arch.cond_dim, "esd_forget_loss: condition width mismatch");
  const auto items = esd_forget_items(frozen, forget, forget_cond, cfg, s, seed);
  return regression_loss_and_grad(p, s.num_steps(), items);
}

inline std::vector<RegressionItem> preservation_items(const DenoiserParams& frozen,
                                                      std::span<const TrainItem> retain_batch,
                                                      const Schedule& s, std::uint64_t seed) {
  require(!retain_batch.empty(), "preservation_loss: empty retain batch");
  const int T = s.num_steps();
  std::vector<RegressionItem> items;
  items.reserve(retain_batch.size());
  for (const auto& r : retain_batch) {
    auto d = draw_noise(item_seed(seed, r.x0, r.cond), r.x0.size(), 1, T);
    Vec xt = forward_marginal(s, r.x0, d.t, d.eps);
    Vec target = predict_eps(frozen, xt, d.t, T, r.cond);
    items.push_back({std::move(xt), d.t, r.cond, std::move(target)});
  }
  return items;
}

/// Distillation toward the frozen full model on retain samples, with (t, eps)
/// shared between student and teacher. Items keep their own condition.
inline LossGrad preservation_loss(const DenoiserParams& p, const DenoiserParams& frozen,
                                  std::span<const TrainItem> retain_batch, const Schedule& s,
                                  std::uint64_t seed) {
  require(p.arch == frozen.arch, "preservation_loss: architecture mismatch");
  const auto items = preservation_items(frozen, retain_batch, s, seed);
  return regression_loss_and_grad(p, s.num_steps(), items);
}

// ---------------------------------------------------------------------------
// Anchor conditions for the conditional setting.

/// Per-group unit prototypes plus what is needed to synthesize anchor
/// conditions: the condition layout and per-group descriptor sets.
struct AnchorSelector {
  std::vector<Vec> prototypes;
  double tau = 2.0;
  double eta_mix = 0.1;
  int num_descriptors = 3;
  int content_dim = 0;
  std::vector<Vec> cond_vectors;
  std::vector<std::vector<Vec>> descriptors;

  int num_groups() const { return static_cast<int>(prototypes.size()); }
};

inline Vec unit(Vec v) {
  const double n = std::sqrt(squared_norm(v));
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("cannot normalize a zero-norm vector");
  for (auto& x : v) x /= n;
  return v;
}

inline Vec mean_of(std::span<const Vec> vs) {
  require(!vs.empty(), "mean of an empty list");
  Vec m(vs.front().size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
  for (auto& x : m) x /= static_cast<double>(vs.size());
  return m;
}

inline AnchorSelector make_anchor_selector(const GroupedDataset& d, const UnlearnConfig& cfg) {
  require(d.conditional(), "anchor selection needs a conditional dataset");
  require(d.descriptors.size() == d.groups.size(), "anchor selection needs descriptor sets");
  AnchorSelector sel;
  sel.tau = cfg.tau;
  sel.eta_mix = cfg.eta_mix;
  sel.num_descriptors = cfg.num_descriptors;
  sel.content_dim = d.content_dim;
  sel.cond_vectors = d.cond_vectors;
  sel.descriptors = d.descriptors;
  for (const auto& ds : d.descriptors) sel.prototypes.push_back(unit(mean_of(ds)));
  return sel;
}

/// pi_s over all groups (zero at the forget group):
///   (1 - eta) softmax_s(tau e_f.e_s) + eta / |retain|
inline Vec anchor_distribution(const AnchorSelector& sel, int forget_group) {
  const int N = sel.num_groups();
  require(N >= 2, "anchor selection needs at least two groups");
  require(forget_group >= 0 && forget_group < N, "forget group out of range");
  const Vec& ef = sel.prototypes[forget_group];
  double mx = -INFINITY;
  Vec logits(static_cast<std::size_t>(N), -INFINITY);
  for (int g = 0; g < N; ++g) {
    if (g == forget_group) continue;
    logits[g] = sel.tau * dot(ef, sel.prototypes[g]);
    mx = std::max(mx, logits[g]);
  }
  double z = 0.0;
  for (int g = 0; g < N; ++g)
    if (g != forget_group) z += std::exp(logits[g] - mx);
  Vec pi(static_cast<std::size_t>(N), 0.0);
  for (int g = 0; g < N; ++g) {
    if (g == forget_group) continue;
    pi[g] = (1.0 - sel.eta_mix) * std::exp(logits[g] - mx) / z + sel.eta_mix / (N - 1);
  }
  return pi;
}

struct Anchor {
  int group = -1;
  Vec cond;
};

/// Samples a retain group from pi_s and builds the anchor condition: the
/// forget condition's content block followed by the mean of
/// `num_descriptors` descriptors drawn from the sampled group's set.
inline Anchor anchor_select(const AnchorSelector& sel, int forget_group, std::uint64_t seed) {
  const Vec pi = anchor_distribution(sel, forget_group);
  NormalSampler rng(seed);
  const double u = rng.uniform();
  double acc = 0.0;
  int chosen = -1;
  for (int g = 0; g < sel.num_groups(); ++g) {
    if (pi[g] <= 0.0) continue;
    acc += pi[g];
    chosen = g;
    if (u < acc) break;
  }
  Anchor a;
  a.group = chosen;
  a.cond = sel.cond_vectors[forget_group];
  const auto& pool = sel.descriptors[chosen];
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(sel.num_descriptors), pool.size());
  std::vector<Vec> picked;
  for (std::size_t i = 0; i < take; ++i) picked.push_back(pool[order[i]]);
  const Vec desc = mean_of(picked);
  require(static_cast<int>(desc.size()) + sel.content_dim == static_cast<int>(a.cond.size()),
          "descriptor width does not match the condition layout");
  std::copy(desc.begin(), desc.end(), a.cond.begin() + sel.content_dim);
  return a;
}

inline std::vector<RegressionItem> conditional_forget_items(
    const DenoiserParams& frozen, ForgetBatch forget, const AnchorSelector& sel, int forget_group,
    const UnlearnConfig& cfg, const Schedule& s, std::uint64_t seed,
    const Vec* force_anchor = nullptr) {
  require(frozen.arch.cond_dim > 0, "conditional_forget_loss requires a conditional model");
  require(!forget.empty(), "conditional_forget_loss: empty forget batch");
  const int T = s.num_steps();
  std::vector<RegressionItem> items;
  items.reserve(forget.size());
  for (const auto& f : forget) {
    require(static_cast<int>(f.cond.size()) == frozen.arch.cond_dim,
            "conditional_forget_loss: forget item lacks a condition");
    const std::uint64_t is = item_seed(seed, f.x0, f.cond);
    auto d = draw_noise(is, f.x0.size(), cfg.t_lo, cfg.t_hi);
    Vec xt = forward_marginal(s, f.x0, d.t, d.eps);
    const Vec ca = force_anchor ? *force_anchor
                                : anchor_select(sel, forget_group, derive_seed(is, "anchor")).cond;
    Vec target = predict_eps(frozen, xt, d.t, T, ca);
    items.push_back({std::move(xt), d.t, f.cond, std::move(target)});
  }
  return items;
}

/// Redirects eps_theta(x_t, t, c_f) toward the frozen model's prediction under
/// a sampled anchor condition c_a, on the same (forget) latent.
/// `force_anchor` replaces sampling with a fixed condition for every item.
inline LossGrad conditional_forget_loss(const DenoiserParams& p, const DenoiserParams& frozen,
                                        ForgetBatch forget, const AnchorSelector& sel,
                                        int forget_group, const UnlearnConfig& cfg,
                                        const Schedule& s, std::uint64_t seed,
                                        const Vec* force_anchor = nullptr) {
  require(p.arch.cond_dim > 0 && frozen.arch.cond_dim == p.arch.cond_dim,
          "conditional_forget_loss requires a conditional model");
  const auto items =
      conditional_forget_items(frozen, forget, sel, forget_group, cfg, s, seed, force_anchor);
  return regression_loss_and_grad(p, s.num_steps(), items);
}

// ---------------------------------------------------------------------------

struct UnlearnResult {
  DenoiserParams params;
  std::int64_t steps = 0;
  double seconds = 0.0;
  double final_preservation_loss = 0.0;
  double final_forget_loss = 0.0;
};

/// Fine-tunes a copy of p_full to forget group k using one forget batch and
/// one retain batch per step.
inline UnlearnResult unlearn(const DenoiserParams& p_full, const GroupedDataset& d, int k,
                             const UnlearnConfig& cfg, const Schedule& s) {
  d.validate();
  require(k >= 0 && k < d.num_groups(), "group index out of range");
  cfg.validate(s.num_steps());
  const bool conditional = p_full.arch.cond_dim > 0;
  if (cfg.method == UnlearnMethod::esd || cfg.method == UnlearnMethod::cond_anchor)
    require(conditional && d.conditional(), to_string(cfg.method) + " needs a conditional model");
  const std::vector<Vec> retain = d.samples_except(k);
  if (cfg.method == UnlearnMethod::retrack)
    require(static_cast<std::size_t>(cfg.K) <= retain.size(), "K exceeds retain set size");

  const auto t0 = std::chrono::steady_clock::now();
  UnlearnResult res{p_full, 0, 0.0, 0.0, 0.0};
  if (cfg.steps == 0) return res;

  AnchorSelector sel;
  if (cfg.method == UnlearnMethod::cond_anchor) sel = make_anchor_selector(d, cfg);

  // In the unconditional setting (retrack/esd) both terms act on the null
  // condition branch; cond_anchor keeps each item's own condition.
  const bool own_cond = cfg.method == UnlearnMethod::cond_anchor;
  const Vec null = null_condition(p_full);
  std::vector<TrainItem> forget_pool, retain_pool;
  for (int g = 0; g < d.num_groups(); ++g) {
    for (const auto& x : d.groups[g]) {
      TrainItem it{x, own_cond ? d.cond_vectors[g] : null};
      (g == k ? forget_pool : retain_pool).push_back(std::move(it));
    }
  }
  NormalSampler shuf(derive_seed(cfg.seed, "unlearn-shuffle", k));
  std::shuffle(forget_pool.begin(), forget_pool.end(), shuf.engine());
  std::shuffle(retain_pool.begin(), retain_pool.end(), shuf.engine());

  auto opt = OptimizerState::for_params(p_full, cfg.lr, cfg.weight_decay);
  std::vector<TrainItem> fb, rb;
  const Vec forget_cond = conditional && d.conditional() ? d.cond_vectors[k] : Vec{};
  for (int step = 0; step < cfg.steps; ++step) {
    fb.clear();
    rb.clear();
    for (int j = 0; j < cfg.batch_size; ++j) {
      const std::size_t i = static_cast<std::size_t>(step) * cfg.batch_size + j;
      fb.push_back(forget_pool[i % forget_pool.size()]);
      rb.push_back(retain_pool[i % retain_pool.size()]);
    }
    const std::uint64_t fs = derive_seed(cfg.seed, "forget", k, step);
    const std::uint64_t ps = derive_seed(cfg.seed, "preserve", k, step);
    LossGrad lf;
    switch (cfg.method) {
      case UnlearnMethod::retrack:
        lf = retrack_forget_loss(res.params, fb, retain, cfg, s, fs);
        break;
      case UnlearnMethod::esd:
        lf = esd_forget_loss(res.params, p_full, fb, forget_cond, cfg, s, fs);
        break;
      case UnlearnMethod::cond_anchor:
        lf = conditional_forget_loss(res.params, p_full, fb, sel, k, cfg, s, fs);
        break;
    }
    LossGrad lp = preservation_loss(res.params, p_full, rb, s, ps);
    const double wf = cfg.method == UnlearnMethod::cond_anchor ? 1.0 : cfg.lambda_forget;
    const double wp = cfg.method == UnlearnMethod::cond_anchor ? cfg.lambda_pres : 1.0;
    Vec grad(lf.grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = wf * lf.grad[i] + wp * lp.grad[i];
    optimizer_step_inplace(res.params, opt, std::move(grad));
    ++res.steps;
    res.final_forget_loss = lf.loss;
    res.final_preservation_loss = lp.loss;
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace guda
