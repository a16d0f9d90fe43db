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

#include "guda/common.hpp"
#include "guda/denoiser.hpp"

namespace guda {

/// Adaptive-moment state with decoupled weight decay.
struct OptimizerState {
  Vec first_moment;
  Vec second_moment;
  std::int64_t step_count = 0;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;

  static OptimizerState for_params(const DenoiserParams& p, double lr,
                                   double weight_decay = 1e-4) {
    require(lr > 0.0, "learning rate must be positive");
    require(weight_decay >= 0.0, "weight decay must be non-negative");
    OptimizerState st;
    st.first_moment.assign(p.param_count(), 0.0);
    st.second_moment.assign(p.param_count(), 0.0);
    st.lr = lr;
    st.weight_decay = weight_decay;
    return st;
  }
};

/// Rescales grad in place so its L2 norm is at most max_norm. Returns the
/// norm before clipping.
inline double clip_global_norm(std::span<double> grad, double max_norm) {
  const double norm = std::sqrt(squared_norm(grad));
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& g : grad) g *= f;
  }
  return norm;
}

/// One clipped AdamW update; p and st are advanced in place.
inline void optimizer_step_inplace(DenoiserParams& p, OptimizerState& st, Vec grad) {
  require(grad.size() == p.param_count(), "gradient length does not match parameter count");
  require(st.first_moment.size() == p.param_count() &&
              st.second_moment.size() == p.param_count(),
          "optimizer moments do not match parameter count");
  if (!all_finite(grad)) throw NumericError("non-finite gradient entry");
  clip_global_norm(grad, st.clip_norm);

  ++st.step_count;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  const double decay = 1.0 - st.lr * st.weight_decay;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    st.first_moment[i] = st.beta1 * st.first_moment[i] + (1.0 - st.beta1) * g;
    st.second_moment[i] = st.beta2 * st.second_moment[i] + (1.0 - st.beta2) * g * g;
    const double m_hat = st.first_moment[i] / bc1;
    const double v_hat = st.second_moment[i] / bc2;
    p.weights[i] = p.weights[i] * decay - st.lr * m_hat / (std::sqrt(v_hat) + st.epsilon);
  }
}

inline std::pair<DenoiserParams, OptimizerState> optimizer_step(DenoiserParams p,
                                                                OptimizerState st, Vec grad) {
  optimizer_step_inplace(p, st, std::move(grad));
  return {std::move(p), std::move(st)};
}

}  // namespace guda
