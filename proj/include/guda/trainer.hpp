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
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "guda/checkpoint.hpp"
#include "guda/common.hpp"
#include "guda/denoiser.hpp"
#include "guda/optimizer.hpp"
#include "guda/schedule.hpp"

namespace guda {

/// Samples partitioned into N disjoint groups. When conditions are present
/// each group carries one vector laid out as [content one-hot | descriptor];
/// content_dim is the width of the first block.
struct GroupedDataset {
  std::vector<std::vector<Vec>> groups;
  int dim = 2;
  std::vector<Vec> cond_vectors;
  int content_dim = 0;
  /// Optional per-group descriptor sets; a group's descriptor block is the
  /// mean of its set.
  std::vector<std::vector<Vec>> descriptors;
  std::vector<std::string> group_names;

  int num_groups() const { return static_cast<int>(groups.size()); }
  bool conditional() const { return !cond_vectors.empty(); }
  int cond_dim() const { return cond_vectors.empty() ? 0 : static_cast<int>(cond_vectors[0].size()); }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }

  void validate() const {
    require(num_groups() >= 2, "dataset needs at least two groups");
    require(dim >= 1, "dataset dimension must be >= 1");
    require(group_names.size() == groups.size(), "one name per group required");
    require(cond_vectors.empty() || cond_vectors.size() == groups.size(),
            "one condition vector per group required");
    for (const auto& c : cond_vectors)
      require(static_cast<int>(c.size()) == cond_dim(), "condition vectors differ in length");
    require(content_dim >= 0 && content_dim <= cond_dim(), "content block exceeds condition");
    for (const auto& g : groups) {
      require(!g.empty(), "empty group");
      for (const auto& x : g) require(static_cast<int>(x.size()) == dim, "sample dimension mismatch");
    }
  }

  /// All samples except those in group `excluded` (pass -1 for everything).
  std::vector<Vec> samples_except(int excluded) const {
    std::vector<Vec> out;
    for (int g = 0; g < num_groups(); ++g)
      if (g != excluded) out.insert(out.end(), groups[g].begin(), groups[g].end());
    return out;
  }

  std::vector<Vec> all_samples() const { return samples_except(-1); }
};

// ---------------------------------------------------------------------------
// Closed-form oracle.

/// Posterior-mean epsilon for the empirical distribution over `subset`:
///   sum_i softmax_i(-|x_t - sqrt(abar) x_i|^2 / (2 sigma^2)) (x_t - sqrt(abar) x_i) / sigma
inline Vec empirical_denoiser(std::span<const Vec> subset, std::span<const double> xt, int t,
                              const Schedule& s) {
  require(!subset.empty(), "empirical_denoiser: empty subset");
  const double a = std::sqrt(s.alpha_bar(t));
  const double sg = s.sigma(t);
  const double inv2v = 1.0 / (2.0 * sg * sg);
  Vec logits(subset.size());
  double mx = -INFINITY;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    require(subset[i].size() == xt.size(), "empirical_denoiser: dimension mismatch");
    double d2 = 0.0;
    for (std::size_t k = 0; k < xt.size(); ++k) {
      const double r = xt[k] - a * subset[i][k];
      d2 += r * r;
    }
    logits[i] = -d2 * inv2v;
    mx = std::max(mx, logits[i]);
  }
  double z = 0.0;
  Vec acc(xt.size(), 0.0);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const double w = std::exp(logits[i] - mx);
    z += w;
    for (std::size_t k = 0; k < xt.size(); ++k) acc[k] += w * (xt[k] - a * subset[i][k]);
  }
  for (auto& v : acc) v /= z * sg;
  return acc;
}

/// The empirical denoiser packaged as an epsilon model (condition ignored).
class EmpiricalModel {
 public:
  EmpiricalModel(std::vector<Vec> samples, const Schedule& s)
      : samples_(std::move(samples)), s_(&s) {
    require(!samples_.empty(), "EmpiricalModel: empty sample set");
  }
  Vec predict(std::span<const double> xt, int t, CondView) const {
    return empirical_denoiser(samples_, xt, t, *s_);
  }
  int dim() const { return static_cast<int>(samples_.front().size()); }

 private:
  std::vector<Vec> samples_;
  const Schedule* s_;
};

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  bool exposure_matched = true;
  /// Probability of replacing an item's condition with the null (zero) vector.
  double cond_dropout = 0.1;
  /// Empty means from_scratch.
  std::optional<std::filesystem::path> init_checkpoint;

  void validate() const {
    require(epochs >= 0, "epochs must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(lr > 0.0, "lr must be positive");
    require(cond_dropout >= 0.0 && cond_dropout <= 1.0, "cond_dropout must be in [0,1]");
  }
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  DenoiserParams params;
  std::int64_t steps = 0;
  std::vector<EpochLog> log;
  double seconds = 0.0;
};

/// Called with (group, index within group) for every item that enters a
/// gradient computation.
using BatchObserver = std::function<void(int group, std::size_t index)>;

inline void append_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  const bool fresh = !std::filesystem::exists(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::app);
  if (fresh) f << "epoch,loss,wall_ms\n";
  for (const auto& e : log) f << e.epoch << ',' << e.loss << ',' << e.wall_ms << '\n';
}

/// Optimizer steps per epoch. Exposure-matched full training and LOGO
/// training both see the expected retain size |D| (N-1)/N per epoch.
inline std::int64_t steps_per_epoch(const GroupedDataset& d, int batch_size, bool retain_sized) {
  const auto total = static_cast<std::int64_t>(d.total_size());
  const std::int64_t budget =
      retain_sized ? total - (total + d.num_groups() / 2) / d.num_groups() : total;
  return (budget + batch_size - 1) / batch_size;
}

namespace detail {

inline TrainResult train_impl(const GroupedDataset& d, const Architecture& arch,
                              const TrainConfig& cfg, const Schedule& s, int fixed_exclude,
                              const std::optional<DenoiserParams>& init,
                              const BatchObserver& observer) {
  d.validate();
  cfg.validate();
  require(arch.input_dim == d.dim, "architecture input_dim does not match dataset");
  require(arch.cond_dim == 0 || arch.cond_dim == d.cond_dim(),
          "architecture cond_dim does not match dataset conditions");

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  if (init) {
    require(init->arch == arch, "initial checkpoint architecture mismatch");
    res.params = *init;
  } else if (cfg.init_checkpoint) {
    res.params = load_checkpoint(*cfg.init_checkpoint);
    require(res.params.arch == arch, "initial checkpoint architecture mismatch");
  } else {
    res.params = init_network(arch, derive_seed(cfg.seed, "init"));
  }
  auto opt = OptimizerState::for_params(res.params, cfg.lr, cfg.weight_decay);
  const bool retain_sized = fixed_exclude >= 0 || cfg.exposure_matched;
  const std::int64_t steps = steps_per_epoch(d, cfg.batch_size, retain_sized);
  const Vec null_cond(static_cast<std::size_t>(arch.cond_dim), 0.0);

  struct Ref {
    int group;
    std::size_t index;
  };
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    int excluded = fixed_exclude;
    if (excluded < 0 && cfg.exposure_matched) {
      NormalSampler pick(derive_seed(cfg.seed, "exposure", epoch));
      excluded = static_cast<int>(pick.uniform_int(0, d.num_groups() - 1));
    }
    std::vector<Ref> pool;
    for (int g = 0; g < d.num_groups(); ++g)
      if (g != excluded)
        for (std::size_t i = 0; i < d.groups[g].size(); ++i) pool.push_back({g, i});
    NormalSampler shuf(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(pool.begin(), pool.end(), shuf.engine());

    CompensatedSum epoch_loss;
    std::vector<TrainItem> batch;
    for (std::int64_t step = 0; step < steps; ++step) {
      batch.clear();
      NormalSampler drop(derive_seed(cfg.seed, "dropout", epoch, step));
      for (int j = 0; j < cfg.batch_size; ++j) {
        const Ref& r = pool[static_cast<std::size_t>(step * cfg.batch_size + j) % pool.size()];
        if (observer) observer(r.group, r.index);
        TrainItem item{d.groups[r.group][r.index], {}};
        if (arch.cond_dim > 0) {
          const bool dropped = drop.uniform() < cfg.cond_dropout;
          item.cond = dropped ? null_cond : d.cond_vectors[r.group];
        }
        batch.push_back(std::move(item));
      }
      auto lg = loss_and_grad(res.params, batch, s, derive_seed(cfg.seed, "batch", epoch, step));
      epoch_loss.add(lg.loss);
      optimizer_step_inplace(res.params, opt, std::move(lg.grad));
      ++res.steps;
    }
    const auto e1 = std::chrono::steady_clock::now();
    res.log.push_back({epoch, steps > 0 ? epoch_loss.value() / steps : 0.0,
                       std::chrono::duration<double, std::milli>(e1 - e0).count()});
  }
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace detail

/// Full-data model. With exposure matching one uniformly drawn group is left
/// out of each epoch.
inline TrainResult train_full(const GroupedDataset& d, const Architecture& arch,
                              const TrainConfig& cfg, const Schedule& s,
                              const BatchObserver& observer = {}) {
  if (cfg.exposure_matched) require(d.num_groups() >= 2, "exposure matching needs N >= 2");
  return detail::train_impl(d, arch, cfg, s, -1, std::nullopt, observer);
}

/// Leave-one-group-out model trained on D_{-k} with the same step budget as
/// exposure-matched full training.
inline TrainResult train_logo(const GroupedDataset& d, int k, const Architecture& arch,
                              const TrainConfig& cfg, const Schedule& s,
                              const BatchObserver& observer = {}) {
  require(k >= 0 && k < d.num_groups(), "group index out of range");
  return detail::train_impl(d, arch, cfg, s, k, std::nullopt, observer);
}

/// LOGO fine-tuned from a given initialization (e.g. the full model).
inline TrainResult train_logo_from(const GroupedDataset& d, int k, const DenoiserParams& init,
                                   const TrainConfig& cfg, const Schedule& s,
                                   const BatchObserver& observer = {}) {
  require(k >= 0 && k < d.num_groups(), "group index out of range");
  return detail::train_impl(d, init.arch, cfg, s, k, init, observer);
}

}  // namespace guda
