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
#include <cstdint>
#include <string>
#include <vector>

#include "guda/common.hpp"
#include "guda/schedule.hpp"

namespace guda {

enum class SamplerKind { ddpm, ddim };

inline SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "ddpm") return SamplerKind::ddpm;
  if (s == "ddim") return SamplerKind::ddim;
  throw InvalidArgument("unknown sampler: " + s);
}

/// `steps` timesteps spaced evenly over [1, T], ascending, always ending at T.
inline std::vector<int> sampling_timesteps(int T, int steps) {
  require(steps >= 1, "sampler needs at least one step");
  require(steps <= T, "sampler steps exceed schedule length");
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i)
    ts[i - 1] = static_cast<int>(std::llround(static_cast<double>(i) * T / steps));
  return ts;
}

/// Generates one sample from pure noise. DDPM is ancestral with the fixed
/// posterior variance; DDIM is deterministic (zero stochasticity). Both run
/// over the respaced timestep subsequence.
template <EpsModel Model>
Vec sample(const Schedule& s, const Model& model, CondView cond, int steps, std::uint64_t seed,
           SamplerKind method = SamplerKind::ddpm) {
  const auto ts = sampling_timesteps(s.num_steps(), steps);
  NormalSampler rng(derive_seed(seed, "sample"));
  Vec x = rng.vector(static_cast<std::size_t>(model.dim()));
  for (std::size_t i = ts.size(); i-- > 0;) {
    const int t = ts[i];
    const int t_prev = i == 0 ? 0 : ts[i - 1];
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t_prev);
    const Vec eps = model.predict(x, t, cond);
    if (method == SamplerKind::ddim) {
      const double sa = std::sqrt(ab);
      const double sg = s.sigma(t);
      const double sap = std::sqrt(ab_prev);
      const double sgp = std::sqrt(1.0 - ab_prev);
      for (std::size_t d = 0; d < x.size(); ++d) {
        const double x0 = (x[d] - sg * eps[d]) / sa;
        x[d] = sap * x0 + sgp * eps[d];
      }
    } else {
      const double alpha_eff = ab / ab_prev;
      const double beta_eff = 1.0 - alpha_eff;
      const double c = beta_eff / s.sigma(t);
      const double inv = 1.0 / std::sqrt(alpha_eff);
      const double var = t_prev == 0 ? 0.0 : (1.0 - ab_prev) / (1.0 - ab) * beta_eff;
      const double sd = std::sqrt(var);
      for (std::size_t d = 0; d < x.size(); ++d) {
        x[d] = inv * (x[d] - c * eps[d]);
        if (sd > 0.0) x[d] += sd * rng();
      }
    }
  }
  return x;
}

}  // namespace guda
