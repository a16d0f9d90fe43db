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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "guda/common.hpp"
#include "guda/schedule.hpp"

namespace guda {

enum class Activation { silu, relu };

struct Architecture {
  int input_dim = 2;
  std::vector<int> hidden_dims{128, 128};
  int time_embed_dim = 16;
  int cond_dim = 0;
  Activation activation = Activation::silu;

  int network_input_dim() const { return input_dim + time_embed_dim + cond_dim; }

  void validate() const {
    require(input_dim >= 1, "input_dim must be >= 1");
    require(!hidden_dims.empty(), "hidden_dims must be non-empty");
    for (int h : hidden_dims) require(h >= 1, "hidden widths must be >= 1");
    require(time_embed_dim >= 0, "time_embed_dim must be >= 0");
    require(cond_dim >= 0, "cond_dim must be >= 0");
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    int in = network_input_dim();
    for (int h : hidden_dims) {
      n += static_cast<std::size_t>(in) * h + h;
      in = h;
    }
    n += static_cast<std::size_t>(in) * input_dim + input_dim;
    return n;
  }

  bool operator==(const Architecture&) const = default;
};

inline void to_json(nlohmann::json& j, const Architecture& a) {
  j = nlohmann::json{{"input_dim", a.input_dim},
                     {"hidden_dims", a.hidden_dims},
                     {"time_embed_dim", a.time_embed_dim},
                     {"cond_dim", a.cond_dim},
                     {"activation", a.activation == Activation::silu ? "silu" : "relu"}};
}

inline void from_json(const nlohmann::json& j, Architecture& a) {
  a.input_dim = j.at("input_dim").get<int>();
  a.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  a.time_embed_dim = j.value("time_embed_dim", 16);
  a.cond_dim = j.value("cond_dim", 0);
  const auto act = j.value("activation", std::string("silu"));
  if (act == "silu")
    a.activation = Activation::silu;
  else if (act == "relu")
    a.activation = Activation::relu;
  else
    throw InvalidArgument("unknown activation: " + act);
}

/// Network weights. Layout per layer: row-major W (out x in) followed by b.
struct DenoiserParams {
  Architecture arch;
  Vec weights;

  std::size_t param_count() const { return weights.size(); }
};

/// Sinusoidal time features with frequencies spaced geometrically from 1 to
/// T/2, applied to the phase t/T. An odd width appends the raw phase.
inline void time_features(int t, int T, int dim, std::span<double> out) {
  const double phase = static_cast<double>(t) / T;
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double f = half == 1 ? 1.0 : std::pow(T / 2.0, static_cast<double>(i) / (half - 1));
    out[2 * i] = std::sin(f * phase);
    out[2 * i + 1] = std::cos(f * phase);
  }
  if (dim % 2 == 1) out[dim - 1] = phase;
}

/// Fan-in scaled uniform weights, zero biases.
inline DenoiserParams init_network(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  DenoiserParams p{arch, Vec(arch.param_count(), 0.0)};
  NormalSampler rng(derive_seed(seed, "init"));
  std::size_t off = 0;
  int in = arch.network_input_dim();
  auto fill_layer = [&](int out_dim) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(in, 1)));
    for (std::size_t k = 0; k < static_cast<std::size_t>(in) * out_dim; ++k)
      p.weights[off + k] = (2.0 * rng.uniform() - 1.0) * bound;
    off += static_cast<std::size_t>(in) * out_dim + out_dim;
    in = out_dim;
  };
  for (int h : arch.hidden_dims) fill_layer(h);
  fill_layer(arch.input_dim);
  return p;
}

namespace detail {

inline double activate(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? z : 0.0;
  return z / (1.0 + std::exp(-z));
}

inline double activate_grad(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double sg = 1.0 / (1.0 + std::exp(-z));
  return sg * (1.0 + z * (1.0 - sg));
}

}  // namespace detail

/// Intermediate values retained by a forward pass for backprop.
struct ForwardTape {
  std::vector<Vec> inputs;  // input to each layer
  std::vector<Vec> pre;     // pre-activation of each hidden layer
  Vec output;
};

inline ForwardTape forward(const DenoiserParams& p, std::span<const double> xt, int t, int T,
                           CondView cond) {
  const Architecture& a = p.arch;
  if (static_cast<int>(xt.size()) != a.input_dim)
    throw InvalidArgument("predict_eps: x_t has dimension " + std::to_string(xt.size()) +
                          ", expected " + std::to_string(a.input_dim));
  if (static_cast<int>(cond.size()) != a.cond_dim)
    throw InvalidArgument("predict_eps: condition has dimension " + std::to_string(cond.size()) +
                          ", expected " + std::to_string(a.cond_dim));
  require(T >= 1 && t >= 0 && t <= T, "predict_eps: timestep out of range");

  ForwardTape tape;
  Vec in(static_cast<std::size_t>(a.network_input_dim()));
  std::copy(xt.begin(), xt.end(), in.begin());
  time_features(t, T, a.time_embed_dim,
                std::span<double>(in).subspan(a.input_dim, a.time_embed_dim));
  std::copy(cond.begin(), cond.end(), in.begin() + a.input_dim + a.time_embed_dim);

  std::size_t off = 0;
  const std::size_t layers = a.hidden_dims.size() + 1;
  tape.inputs.reserve(layers);
  tape.pre.reserve(layers - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    const int out_dim = last ? a.input_dim : a.hidden_dims[l];
    const std::size_t in_dim = in.size();
    const double* W = p.weights.data() + off;
    const double* b = W + in_dim * out_dim;
    Vec z(static_cast<std::size_t>(out_dim));
    for (int o = 0; o < out_dim; ++o) {
      double s = b[o];
      const double* row = W + static_cast<std::size_t>(o) * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) s += row[i] * in[i];
      z[o] = s;
    }
    off += in_dim * out_dim + out_dim;
    tape.inputs.push_back(std::move(in));
    if (last) {
      tape.output = std::move(z);
    } else {
      in.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) in[i] = detail::activate(a.activation, z[i]);
      tape.pre.push_back(std::move(z));
    }
  }
  return tape;
}

/// Accumulates scale * d(output . dout)/d(weights) into grad.
inline void backward(const DenoiserParams& p, const ForwardTape& tape,
                     std::span<const double> dout, std::span<double> grad, double scale = 1.0) {
  const Architecture& a = p.arch;
  const std::size_t layers = a.hidden_dims.size() + 1;
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    const std::size_t out_dim = l + 1 == layers ? a.input_dim : a.hidden_dims[l];
    off += tape.inputs[l].size() * out_dim + out_dim;
  }

  Vec delta(dout.begin(), dout.end());
  for (auto& d : delta) d *= scale;
  for (std::size_t l = layers; l-- > 0;) {
    const Vec& in = tape.inputs[l];
    const std::size_t in_dim = in.size();
    const std::size_t out_dim = delta.size();
    const double* W = p.weights.data() + offsets[l];
    double* gW = grad.data() + offsets[l];
    double* gb = gW + in_dim * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* row = gW + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) row[i] += d * in[i];
    }
    if (l == 0) break;
    Vec prev(in_dim, 0.0);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = W + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) prev[i] += d * row[i];
    }
    const Vec& z = tape.pre[l - 1];
    for (std::size_t i = 0; i < in_dim; ++i) prev[i] *= detail::activate_grad(a.activation, z[i]);
    delta = std::move(prev);
  }
}

inline Vec predict_eps(const DenoiserParams& p, std::span<const double> xt, int t, int T,
                       CondView cond = {}) {
  return forward(p, xt, t, T, cond).output;
}

/// Trained network bound to a schedule length, usable wherever an epsilon
/// model is expected.
class NetworkModel {
 public:
  NetworkModel(const DenoiserParams& p, int T) : p_(&p), T_(T) {}
  Vec predict(std::span<const double> xt, int t, CondView cond) const {
    return predict_eps(*p_, xt, t, T_, cond);
  }
  int dim() const { return p_->arch.input_dim; }
  const DenoiserParams& params() const { return *p_; }

 private:
  const DenoiserParams* p_;
  int T_;
};

// ---------------------------------------------------------------------------
// Losses. Every objective in the project is a per-sample regression of the
// network output onto a fixed target, so one routine serves them all.

struct RegressionItem {
  Vec xt;
  int t = 1;
  Vec cond;    // empty for unconditional networks
  Vec target;  // treated as a constant
};

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// Mean over items of the per-element squared error ||eps_theta - target||^2 / d.
/// With a finite cap, items whose error exceeds the cap are rescaled by the
/// constant factor cap/error, so each contributes min(error, cap).
inline LossGrad regression_loss_and_grad(const DenoiserParams& p, int T,
                                         std::span<const RegressionItem> items,
                                         double cap = INFINITY) {
  require(!items.empty(), "loss requires a non-empty batch");
  LossGrad out;
  out.grad.assign(p.param_count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(items.size());
  const double inv_d = 1.0 / p.arch.input_dim;
  CompensatedSum total;
  for (const auto& it : items) {
    auto tape = forward(p, it.xt, it.t, T, it.cond);
    Vec r(tape.output.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = tape.output[i] - it.target[i];
    const double raw = squared_norm(r) * inv_d;
    double factor = 1.0;
    if (raw > cap) factor = raw > 0.0 ? cap / raw : 0.0;
    if (cap <= 0.0) factor = 0.0;
    total.add(factor * raw * inv_n);
    if (factor == 0.0) continue;
    backward(p, tape, r, out.grad, 2.0 * factor * inv_d * inv_n);
  }
  out.loss = total.value();
  return out;
}

/// A training example: clean sample plus its condition (possibly empty).
struct TrainItem {
  Vec x0;
  Vec cond;
};

/// Per-item seed from the batch seed and the item's content, so duplicated
/// items receive identical (t, eps) draws.
inline std::uint64_t item_seed(std::uint64_t seed, std::span<const double> x0, CondView cond) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  auto mix = [&](double v) { h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v)); };
  for (double v : x0) mix(v);
  h = splitmix64(h ^ 0xc0ffeeULL);
  for (double v : cond) mix(v);
  return derive_seed(seed, h);
}

/// Draws t uniformly from [t_lo, t_hi] and eps ~ N(0, I).
struct NoiseDraw {
  int t;
  Vec eps;
};

inline NoiseDraw draw_noise(std::uint64_t seed, std::size_t dim, int t_lo, int t_hi) {
  NormalSampler rng(seed);
  NoiseDraw d;
  d.t = static_cast<int>(rng.uniform_int(t_lo, t_hi));
  d.eps = rng.vector(dim);
  return d;
}

/// Standard epsilon-prediction MSE on a batch: each item gets t ~ U{1..T}
/// and Gaussian eps derived from rng_seed.
inline LossGrad loss_and_grad(const DenoiserParams& p, std::span<const TrainItem> batch,
                              const Schedule& s, std::uint64_t rng_seed) {
  require(!batch.empty(), "loss_and_grad: empty batch");
  std::vector<RegressionItem> items;
  items.reserve(batch.size());
  for (const auto& b : batch) {
    auto d = draw_noise(item_seed(rng_seed, b.x0, b.cond), b.x0.size(), 1, s.num_steps());
    items.push_back({forward_marginal(s, b.x0, d.t, d.eps), d.t, b.cond, std::move(d.eps)});
  }
  return regression_loss_and_grad(p, s.num_steps(), items);
}

}  // namespace guda
