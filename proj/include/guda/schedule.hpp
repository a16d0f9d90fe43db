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

#include <cmath>
#include <string>
#include <vector>

#include "guda/common.hpp"

namespace guda {

enum class ScheduleKind { linear, squared_cosine };

inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "squared_cosine";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "squared_cosine" || s == "cosine") return ScheduleKind::squared_cosine;
  throw InvalidArgument("unknown schedule kind: " + s);
}

/// Precomputed diffusion coefficients. Timesteps are 1-based (t = 1..T);
/// the accessors take t directly and treat alpha_bar(0) as 1.
class Schedule {
 public:
  Schedule() = default;

  /// Builds a schedule from explicit betas, each in (0, 1).
  static Schedule from_betas(Vec betas, ScheduleKind kind = ScheduleKind::linear) {
    require(!betas.empty(), "schedule needs at least one step");
    Schedule s;
    s.kind_ = kind;
    s.betas_ = std::move(betas);
    s.alpha_bars_.resize(s.betas_.size());
    s.sigmas_.resize(s.betas_.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.betas_.size(); ++i) {
      const double b = s.betas_[i];
      require(b > 0.0 && b < 1.0, "betas must lie in (0,1)");
      prod *= 1.0 - b;
      s.alpha_bars_[i] = prod;
      s.sigmas_[i] = std::sqrt(1.0 - prod);
    }
    return s;
  }

  int num_steps() const { return static_cast<int>(betas_.size()); }
  ScheduleKind kind() const { return kind_; }
  const Vec& betas() const { return betas_; }
  const Vec& alpha_bars() const { return alpha_bars_; }
  const Vec& sigmas() const { return sigmas_; }

  double beta(int t) const { return betas_[check(t) - 1]; }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    return alpha_bars_[check(t) - 1];
  }
  double sigma(int t) const { return sigmas_[check(t) - 1]; }

  /// Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const {
    return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
  }

 private:
  int check(int t) const {
    if (t < 1 || t > num_steps())
      throw InvalidArgument("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(num_steps()) + "]");
    return t;
  }

  ScheduleKind kind_ = ScheduleKind::linear;
  Vec betas_;
  Vec alpha_bars_;
  Vec sigmas_;
};

/// Linear betas use the usual 1e-4..0.02 range rescaled to T steps; the cosine
/// schedule uses offset 0.008 and clips betas at 0.999.
inline Schedule build_schedule(int T, ScheduleKind kind) {
  require(T >= 1, "number of timesteps must be positive");
  Vec betas(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    const double scale = 1000.0 / T;
    const double lo = std::min(scale * 1e-4, 0.999);
    const double hi = std::min(scale * 0.02, 0.999);
    for (int i = 0; i < T; ++i)
      betas[i] = T == 1 ? hi : lo + (hi - lo) * i / static_cast<double>(T - 1);
  } else {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + s) / (1.0 + s) * M_PI / 2.0);
      return c * c;
    };
    const double f0 = f(0.0);
    for (int i = 0; i < T; ++i) {
      const double ab_prev = f(i) / f0;
      const double ab = f(i + 1) / f0;
      betas[i] = std::min(1.0 - ab / ab_prev, 0.999);
    }
  }
  return Schedule::from_betas(std::move(betas), kind);
}

struct GaussianLaw {
  Vec mean;
  double variance = 1.0;
};

/// Draw from q(x_t | x_0) given the standard normal noise eps.
inline Vec forward_marginal(const Schedule& s, std::span<const double> x0, int t,
                            std::span<const double> eps) {
  require(x0.size() == eps.size(), "x0/eps dimension mismatch");
  const double a = std::sqrt(s.alpha_bar(t));
  const double sg = s.sigma(t);
  Vec out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + sg * eps[i];
  return out;
}

inline GaussianLaw true_posterior(const Schedule& s, std::span<const double> x0,
                                  std::span<const double> xt, int t) {
  require(t >= 2 && t <= s.num_steps(), "true_posterior requires 2 <= t <= T");
  require(x0.size() == xt.size(), "x0/xt dimension mismatch");
  const double ab = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t - 1);
  const double c0 = std::sqrt(ab_prev) * s.beta(t) / (1.0 - ab);
  const double ct = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  GaussianLaw law;
  law.mean.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) law.mean[i] = c0 * x0[i] + ct * xt[i];
  law.variance = s.posterior_variance(t);
  return law;
}

inline GaussianLaw model_posterior(const Schedule& s, std::span<const double> eps_hat,
                                   std::span<const double> xt, int t) {
  require(t >= 2 && t <= s.num_steps(), "model_posterior requires 2 <= t <= T");
  require(eps_hat.size() == xt.size(), "eps_hat/xt dimension mismatch");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(t));
  const double c = s.beta(t) / s.sigma(t);
  GaussianLaw law;
  law.mean.resize(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i)
    law.mean[i] = inv_sqrt_alpha * (xt[i] - c * eps_hat[i]);
  law.variance = s.posterior_variance(t);
  return law;
}

}  // namespace guda
