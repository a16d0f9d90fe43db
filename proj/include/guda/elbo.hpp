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

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "guda/common.hpp"
#include "guda/schedule.hpp"

namespace guda {

struct ElboConfig {
  int stride = 10;
  int t_min = 2;
  int t_max = 100;
  std::uint64_t noise_seed = 0;
  int samples_per_t = 1;

  void validate(int T) const {
    require(stride >= 1, "ELBO stride must be positive");
    require(samples_per_t >= 1, "samples_per_t must be positive");
    require(2 <= t_min && t_min <= t_max && t_max <= T, "ELBO grid requires 2 <= t_min <= t_max <= T");
  }

  std::vector<int> grid() const {
    std::vector<int> g;
    for (int t = t_min; t <= t_max; t += stride) g.push_back(t);
    return g;
  }
};

inline void to_json(nlohmann::json& j, const ElboConfig& c) {
  j = nlohmann::json{{"stride", c.stride},
                     {"t_min", c.t_min},
                     {"t_max", c.t_max},
                     {"noise_seed", c.noise_seed},
                     {"samples_per_t", c.samples_per_t}};
}

/// KL between two isotropic Gaussians sharing `variance`.
inline double gaussian_kl_isotropic(std::span<const double> mu_q, std::span<const double> mu_p,
                                    double variance) {
  require(variance > 0.0, "gaussian_kl_isotropic: variance must be positive");
  require(mu_q.size() == mu_p.size(), "gaussian_kl_isotropic: dimension mismatch");
  return squared_distance(mu_q, mu_p) / (2.0 * variance);
}

/// Noise for the j-th draw at timestep t; depends only on (noise_seed, t, j).
inline Vec elbo_noise(std::uint64_t noise_seed, int t, int j, std::size_t dim) {
  NormalSampler rng(derive_seed(noise_seed, "elbo", t, j));
  return rng.vector(dim);
}

/// -sum_{t in grid} mean_j KL(q(x_{t-1}|x_t,x_0) || p_theta(x_{t-1}|x_t)).
template <EpsModel Model>
double elbo_on_grid(const Model& model, std::span<const double> x0, CondView cond,
                    std::span<const int> grid, std::uint64_t noise_seed, int samples_per_t,
                    const Schedule& s) {
  require(static_cast<int>(x0.size()) == model.dim(), "ELBO: sample dimension mismatch");
  CompensatedSum total;
  for (int t : grid) {
    require(t >= 2 && t <= s.num_steps(), "ELBO grid timestep out of range");
    const double var = s.posterior_variance(t);
    CompensatedSum per_t;
    for (int j = 0; j < samples_per_t; ++j) {
      const Vec eps = elbo_noise(noise_seed, t, j, x0.size());
      const Vec xt = forward_marginal(s, x0, t, eps);
      const Vec eps_hat = model.predict(xt, t, cond);
      const auto q = true_posterior(s, x0, xt, t);
      const auto p = model_posterior(s, eps_hat, xt, t);
      per_t.add(gaussian_kl_isotropic(q.mean, p.mean, var));
    }
    total.add(per_t.value() / samples_per_t);
  }
  return -total.value();
}

template <EpsModel Model>
double elbo_estimate(const Model& model, std::span<const double> x0, CondView cond,
                     const ElboConfig& cfg, const Schedule& s) {
  cfg.validate(s.num_steps());
  const auto grid = cfg.grid();
  return elbo_on_grid(model, x0, cond, grid, cfg.noise_seed, cfg.samples_per_t, s);
}

/// ELBO(full) - ELBO(counterfactual) with both models seeing identical noise.
template <EpsModel A, EpsModel B>
double paired_score_difference(const A& full, const B& counterfactual, std::span<const double> x0,
                               CondView cond, const ElboConfig& cfg, const Schedule& s) {
  require(full.dim() == counterfactual.dim(), "paired_score_difference: model dimension mismatch");
  return elbo_estimate(full, x0, cond, cfg, s) - elbo_estimate(counterfactual, x0, cond, cfg, s);
}

}  // namespace guda
