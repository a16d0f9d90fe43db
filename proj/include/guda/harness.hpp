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

// Experiment orchestration: synthetic data, cached training and unlearning
// phases, attribution matrices, rank reports, timing, sweeps.
//
// Layout of an output directory:
//   config.json                      resolved configuration
//   data/dataset.json
//   checkpoints/<phase>_<key>.ckpt   plus .json sidecar and training logs
//   queries.csv
//   attributions/<method>.csv|.json
//   reports/<method>_vs_<gold>.json
//   timing/<method>.json, timing.json, summary.json

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "guda/checkpoint.hpp"
#include "guda/common.hpp"
#include "guda/denoiser.hpp"
#include "guda/elbo.hpp"
#include "guda/metrics.hpp"
#include "guda/sampler.hpp"
#include "guda/schedule.hpp"
#include "guda/trainer.hpp"
#include "guda/unlearning.hpp"

namespace guda {

inline constexpr const char* kArtifactVersion = "guda-artifacts-1";

/// Failure inside a named pipeline phase. what() is "[phase] message".
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& msg)
      : std::runtime_error("[" + phase + "] " + msg), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

template <typename F>
auto in_phase(const std::string& phase, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError(phase, e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration.

struct DatasetSpec {
  int groups = 5;
  int samples_per_group = 200;
  int dim = 2;
  double radius = 5.0;
  double stddev = 0.3;
  /// Attach [content one-hot | style descriptor] conditions with per-group
  /// descriptor sets. Without it conditions are the group one-hot only.
  bool conditional = false;
  int descriptor_dim = 4;
  /// 0: independent group styles; 1: all groups share one style direction.
  double descriptor_overlap = 0.3;
  int descriptors_per_group = 3;

  void validate() const {
    require(groups >= 2, "dataset needs at least two groups");
    require(samples_per_group >= 1, "samples_per_group must be >= 1");
    require(dim >= 2, "dataset dim must be >= 2");
    require(radius >= 0.0, "radius must be non-negative");
    require(stddev >= 0.0, "stddev must be non-negative");
    require(descriptor_dim >= 1, "descriptor_dim must be >= 1");
    require(descriptor_overlap >= 0.0 && descriptor_overlap <= 1.0, "descriptor_overlap must be in [0,1]");
    require(descriptors_per_group >= 1, "descriptors_per_group must be >= 1");
  }
};

struct QuerySpec {
  int count = 256;
  SamplerKind sampler = SamplerKind::ddpm;
  int steps = 0;  // 0: every timestep
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  int T = 100;
  ScheduleKind schedule_kind = ScheduleKind::squared_cosine;
  std::vector<int> hidden_dims{64, 64};
  int time_embed_dim = 16;
  Activation activation = Activation::silu;
  TrainConfig train = benchmark_training();
  /// Shared unlearning overrides plus optional per-method blocks keyed by
  /// method name ("retrack", "esd", "cond_anchor"). Configuration files are
  /// merged into these defaults.
  nlohmann::json unlearn = benchmark_unlearning();
  ElboConfig elbo;
  std::optional<std::uint64_t> elbo_noise_seed;
  QuerySpec queries;
  /// Unlearning methods turned into GUDA matrices.
  std::vector<UnlearnMethod> methods{UnlearnMethod::retrack, UnlearnMethod::esd};
  std::filesystem::path out_dir = "runs/default";
  /// Checkpoint cache; empty means <out_dir>/checkpoints.
  std::filesystem::path cache_dir;

  /// 600 epochs of 13 steps: 7800 optimizer steps per model.
  static TrainConfig benchmark_training() {
    TrainConfig t;
    t.epochs = 600;
    return t;
  }

  /// Toy-scale unlearning: 65 steps (1/120 of the LOGO budget) at lr 1e-3 with
  /// lambda_forget 0.3 for both retrack and esd.
  static nlohmann::json benchmark_unlearning() {
    return {{"steps", 65},
            {"retrack", {{"lr", 1e-3}, {"lambda_forget", 0.3}}},
            {"esd", {{"lr", 1e-3}, {"lambda_forget", 0.3}}}};
  }

  Schedule schedule() const { return build_schedule(T, schedule_kind); }

  Architecture architecture() const {
    Architecture a;
    a.input_dim = dataset.dim;
    a.hidden_dims = hidden_dims;
    a.time_embed_dim = time_embed_dim;
    a.cond_dim = dataset.groups + (dataset.conditional ? dataset.descriptor_dim : 0);
    a.activation = activation;
    return a;
  }

  UnlearnConfig unlearn_config(UnlearnMethod m) const {
    UnlearnConfig c = UnlearnConfig::defaults(m, T);
    nlohmann::json shared = nlohmann::json::object();
    for (auto it = unlearn.begin(); it != unlearn.end(); ++it)
      if (!it.value().is_object()) shared[it.key()] = it.value();
    merge_json(shared, c);
    const std::string key = m == UnlearnMethod::cond_anchor ? "cond_anchor" : to_string(m);
    if (unlearn.contains(key)) merge_json(unlearn.at(key), c);
    if (m == UnlearnMethod::cond_anchor && unlearn.contains("cond-anchor"))
      merge_json(unlearn.at("cond-anchor"), c);
    c.method = m;
    c.seed = derive_seed(seed, "unlearn", to_string(m));
    return c;
  }

  ElboConfig elbo_config() const {
    ElboConfig e = elbo;
    e.noise_seed = elbo_noise_seed ? *elbo_noise_seed : derive_seed(seed, "elbo");
    return e;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = derive_seed(seed, "train");
    return t;
  }

  std::filesystem::path checkpoint_dir() const {
    return cache_dir.empty() ? out_dir / "checkpoints" : cache_dir;
  }

  void validate() const {
    dataset.validate();
    require(T >= 2, "schedule needs at least two steps");
    architecture().validate();
    train.validate();
    elbo.validate(T);
    require(queries.count >= 0, "query count must be >= 0");
    require(queries.steps >= 0 && queries.steps <= T, "query sampler steps must lie in [0, T]");
    for (auto m : methods) {
      unlearn_config(m).validate(T);
      if (m == UnlearnMethod::cond_anchor)
        require(dataset.conditional, "cond_anchor needs a conditional dataset");
    }
  }
};

inline std::string to_string(SamplerKind k) { return k == SamplerKind::ddpm ? "ddpm" : "ddim"; }

inline nlohmann::json dataset_spec_json(const DatasetSpec& d) {
  return {{"groups", d.groups},
          {"samples_per_group", d.samples_per_group},
          {"dim", d.dim},
          {"radius", d.radius},
          {"stddev", d.stddev},
          {"conditional", d.conditional},
          {"descriptor_dim", d.descriptor_dim},
          {"descriptor_overlap", d.descriptor_overlap},
          {"descriptors_per_group", d.descriptors_per_group}};
}

inline nlohmann::json train_config_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"weight_decay", t.weight_decay},
          {"exposure_matched", t.exposure_matched},
          {"cond_dropout", t.cond_dropout}};
}

/// Everything that determines numeric results. Output locations are left out.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  nlohmann::json elbo = c.elbo;
  elbo.erase("noise_seed");
  if (c.elbo_noise_seed) elbo["noise_seed"] = *c.elbo_noise_seed;
  return {{"seed", c.seed},
          {"dataset", dataset_spec_json(c.dataset)},
          {"schedule", {{"steps", c.T}, {"kind", to_string(c.schedule_kind)}}},
          {"model",
           {{"hidden_dims", c.hidden_dims},
            {"time_embed_dim", c.time_embed_dim},
            {"activation", c.activation == Activation::silu ? "silu" : "relu"}}},
          {"train", train_config_json(c.train)},
          {"unlearn", c.unlearn},
          {"elbo", elbo},
          {"queries",
           {{"count", c.queries.count}, {"sampler", to_string(c.queries.sampler)}, {"steps", c.queries.steps}}},
          {"methods", methods}};
}

/// Reads a configuration; absent keys keep their defaults. Unknown top-level
/// keys are rejected so typos do not silently fall back to defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "configuration must be a JSON object");
  static const std::vector<std::string> known{"seed",  "dataset", "schedule", "model",   "train",
                                              "unlearn", "elbo",  "queries",  "methods", "out_dir"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(),
            "unknown configuration key: " + it.key());
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset.groups = d.value("groups", c.dataset.groups);
    c.dataset.samples_per_group = d.value("samples_per_group", c.dataset.samples_per_group);
    c.dataset.dim = d.value("dim", c.dataset.dim);
    c.dataset.radius = d.value("radius", c.dataset.radius);
    c.dataset.stddev = d.value("stddev", c.dataset.stddev);
    c.dataset.conditional = d.value("conditional", c.dataset.conditional);
    c.dataset.descriptor_dim = d.value("descriptor_dim", c.dataset.descriptor_dim);
    c.dataset.descriptor_overlap = d.value("descriptor_overlap", c.dataset.descriptor_overlap);
    c.dataset.descriptors_per_group = d.value("descriptors_per_group", c.dataset.descriptors_per_group);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.T = s.value("steps", c.T);
    if (s.contains("kind")) c.schedule_kind = schedule_kind_from_string(s.at("kind").get<std::string>());
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.hidden_dims = m.value("hidden_dims", c.hidden_dims);
    c.time_embed_dim = m.value("time_embed_dim", c.time_embed_dim);
    const auto act = m.value("activation", std::string("silu"));
    require(act == "silu" || act == "relu", "unknown activation: " + act);
    c.activation = act == "silu" ? Activation::silu : Activation::relu;
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.lr = t.value("lr", c.train.lr);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.exposure_matched = t.value("exposure_matched", c.train.exposure_matched);
    c.train.cond_dropout = t.value("cond_dropout", c.train.cond_dropout);
  }
  if (j.contains("unlearn")) {
    require(j.at("unlearn").is_object(), "unlearn must be an object");
    c.unlearn.merge_patch(j.at("unlearn"));
  }
  if (j.contains("elbo")) {
    const auto& e = j.at("elbo");
    c.elbo.stride = e.value("stride", c.elbo.stride);
    c.elbo.t_min = e.value("t_min", c.elbo.t_min);
    c.elbo.t_max = e.value("t_max", c.elbo.t_max);
    c.elbo.samples_per_t = e.value("samples_per_t", c.elbo.samples_per_t);
    if (e.contains("noise_seed")) c.elbo_noise_seed = e.at("noise_seed").get<std::uint64_t>();
  }
  if (j.contains("queries")) {
    const auto& q = j.at("queries");
    c.queries.count = q.value("count", c.queries.count);
    if (q.contains("sampler")) c.queries.sampler = sampler_kind_from_string(q.at("sampler").get<std::string>());
    c.queries.steps = q.value("steps", c.queries.steps);
  }
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(unlearn_method_from_string(m.get<std::string>()));
  }
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string hash_json(const nlohmann::json& j) { return hex64(fnv1a(j.dump())); }

inline std::string config_hash(const ExperimentConfig& c) { return hash_json(to_json(c)); }

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kArtifactVersion;

  std::vector<std::string> lines() const {
    return {"config_hash=" + config_hash, "seed=" + std::to_string(seed), "version=" + version};
  }
  nlohmann::json json() const { return {{"config_hash", config_hash}, {"seed", seed}, {"version", version}}; }
};

// ---------------------------------------------------------------------------
// Synthetic data.

/// Group means evenly spaced on a circle of the given radius in the first two
/// coordinates, with a seeded starting angle.
inline std::vector<Vec> group_means(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  NormalSampler rng(derive_seed(seed, "means"));
  const double phase = 2.0 * M_PI * rng.uniform();
  std::vector<Vec> means;
  for (int g = 0; g < spec.groups; ++g) {
    Vec m(static_cast<std::size_t>(spec.dim), 0.0);
    const double ang = phase + 2.0 * M_PI * g / spec.groups;
    m[0] = spec.radius * std::cos(ang);
    m[1] = spec.radius * std::sin(ang);
    means.push_back(std::move(m));
  }
  return means;
}

inline GroupedDataset generate_grouped_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  const auto means = group_means(spec, seed);
  GroupedDataset d;
  d.dim = spec.dim;
  d.content_dim = spec.groups;
  for (int g = 0; g < spec.groups; ++g) {
    NormalSampler rng(derive_seed(seed, "group", g));
    std::vector<Vec> pts;
    for (int i = 0; i < spec.samples_per_group; ++i) {
      Vec x = means[g];
      for (auto& v : x) v += spec.stddev * rng();
      pts.push_back(std::move(x));
    }
    d.groups.push_back(std::move(pts));
    d.group_names.push_back("group" + std::to_string(g));
  }

  NormalSampler style(derive_seed(seed, "styles"));
  const Vec shared = unit(style.vector(static_cast<std::size_t>(spec.descriptor_dim)));
  for (int g = 0; g < spec.groups; ++g) {
    Vec c(static_cast<std::size_t>(spec.groups), 0.0);
    c[g] = 1.0;
    if (spec.conditional) {
      const Vec own = unit(style.vector(static_cast<std::size_t>(spec.descriptor_dim)));
      Vec dir(own.size());
      for (std::size_t i = 0; i < dir.size(); ++i)
        dir[i] = (1.0 - spec.descriptor_overlap) * own[i] + spec.descriptor_overlap * shared[i];
      dir = unit(dir);
      std::vector<Vec> set;
      for (int k = 0; k < spec.descriptors_per_group; ++k) {
        Vec v = dir;
        for (auto& x : v) x += 0.15 * style();
        set.push_back(unit(v));
      }
      const Vec block = mean_of(set);
      c.insert(c.end(), block.begin(), block.end());
      d.descriptors.push_back(std::move(set));
    }
    d.cond_vectors.push_back(std::move(c));
  }
  d.validate();
  return d;
}

inline nlohmann::json dataset_json(const GroupedDataset& d, const std::vector<Vec>& means,
                                   const Provenance& prov) {
  return {{"provenance", prov.json()},     {"group_names", d.group_names},
          {"dim", d.dim},                  {"content_dim", d.content_dim},
          {"means", means},                {"cond_vectors", d.cond_vectors},
          {"descriptors", d.descriptors},  {"groups", d.groups}};
}

// ---------------------------------------------------------------------------
// Timing.

struct TimingRecords {
  double train_full_seconds = 0.0;
  std::int64_t train_full_steps = 0;
  std::vector<double> logo_seconds;
  std::vector<std::int64_t> logo_steps;
  std::map<std::string, std::vector<double>> unlearn_seconds;
  std::map<std::string, std::vector<std::int64_t>> unlearn_steps;
  /// Wall time spent building each attribution matrix.
  std::map<std::string, double> query_seconds;
  int queries = 0;
};

struct MethodTiming {
  double preproc_seconds = 0.0;
  std::int64_t preproc_steps = 0;
  double query_seconds = 0.0;
  double t_query = 0.0;
  double total_seconds = 0.0;
  /// LOGO steps / method steps and LOGO wall / method wall; 0 when undefined.
  double step_ratio_vs_logo = 0.0;
  double speedup_vs_logo = 0.0;
};

struct TimingReport {
  double train_full_seconds = 0.0;
  int queries = 0;
  std::map<std::string, MethodTiming> methods;
};

/// T_total = T_preproc + Q t_query per method. LOGOA's preprocessing is the
/// LOGO retraining; GUDA's is the unlearning. The shared full model is
/// reported separately.
inline TimingReport timing_report(const TimingRecords& r) {
  require(r.queries >= 0, "timing records: negative query count");
  require(!r.query_seconds.empty(), "timing records: no attribution timings");
  TimingReport out;
  out.train_full_seconds = r.train_full_seconds;
  out.queries = r.queries;
  auto sum = [](const auto& v) {
    std::decay_t<decltype(v[0])> s{};
    for (auto x : v) s += x;
    return s;
  };
  const double logo_sec = sum(r.logo_seconds);
  const std::int64_t logo_steps = r.logo_steps.empty() ? 0 : sum(r.logo_steps);
  for (const auto& [method, qs] : r.query_seconds) {
    MethodTiming m;
    m.query_seconds = qs;
    m.t_query = r.queries > 0 ? qs / r.queries : 0.0;
    if (method == "logoa") {
      require(!r.logo_seconds.empty(), "timing records: missing LOGO phases");
      m.preproc_seconds = logo_sec;
      m.preproc_steps = logo_steps;
    } else if (method.rfind("guda_", 0) == 0) {
      const std::string um = method.substr(5);
      require(r.unlearn_seconds.count(um) && r.unlearn_steps.count(um),
              "timing records: missing unlearning phases for " + um);
      m.preproc_seconds = sum(r.unlearn_seconds.at(um));
      m.preproc_steps = sum(r.unlearn_steps.at(um));
    }
    m.total_seconds = m.preproc_seconds + r.queries * m.t_query;
    if (m.preproc_steps > 0 && logo_steps > 0)
      m.step_ratio_vs_logo = static_cast<double>(logo_steps) / static_cast<double>(m.preproc_steps);
    if (m.preproc_seconds > 0.0 && logo_sec > 0.0) m.speedup_vs_logo = logo_sec / m.preproc_seconds;
    out.methods[method] = m;
  }
  return out;
}

inline nlohmann::json to_json(const TimingRecords& r) {
  return {{"train_full_seconds", r.train_full_seconds}, {"train_full_steps", r.train_full_steps},
          {"logo_seconds", r.logo_seconds},             {"logo_steps", r.logo_steps},
          {"unlearn_seconds", r.unlearn_seconds},       {"unlearn_steps", r.unlearn_steps},
          {"query_seconds", r.query_seconds},           {"queries", r.queries}};
}

inline TimingRecords timing_records_from_json(const nlohmann::json& j) {
  for (const char* k : {"train_full_seconds", "logo_seconds", "logo_steps", "query_seconds", "queries"})
    require(j.contains(k), std::string("timing records: missing ") + k);
  TimingRecords r;
  r.train_full_seconds = j.at("train_full_seconds").get<double>();
  r.train_full_steps = j.value("train_full_steps", std::int64_t{0});
  r.logo_seconds = j.at("logo_seconds").get<std::vector<double>>();
  r.logo_steps = j.at("logo_steps").get<std::vector<std::int64_t>>();
  if (j.contains("unlearn_seconds"))
    r.unlearn_seconds = j.at("unlearn_seconds").get<std::map<std::string, std::vector<double>>>();
  if (j.contains("unlearn_steps"))
    r.unlearn_steps = j.at("unlearn_steps").get<std::map<std::string, std::vector<std::int64_t>>>();
  r.query_seconds = j.at("query_seconds").get<std::map<std::string, double>>();
  r.queries = j.at("queries").get<int>();
  return r;
}

inline nlohmann::json to_json(const TimingReport& t) {
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [name, m] : t.methods)
    methods[name] = {{"preproc_seconds", m.preproc_seconds}, {"preproc_steps", m.preproc_steps},
                     {"query_seconds", m.query_seconds},     {"t_query", m.t_query},
                     {"total_seconds", m.total_seconds},     {"step_ratio_vs_logo", m.step_ratio_vs_logo},
                     {"speedup_vs_logo", m.speedup_vs_logo}};
  return {{"train_full_seconds", t.train_full_seconds}, {"queries", t.queries}, {"methods", methods}};
}

// ---------------------------------------------------------------------------
// File helpers.

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline std::string training_log_csv(const std::vector<EpochLog>& log, const Provenance& prov) {
  std::ostringstream os;
  for (const auto& l : prov.lines()) os << "# " << l << '\n';
  os << "epoch,loss,wall_ms\n";
  for (const auto& e : log) os << e.epoch << ',' << format_double(e.loss) << ',' << e.wall_ms << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Pipeline.

struct PhaseOutcome {
  DenoiserParams params;
  double seconds = 0.0;
  std::int64_t steps = 0;
  bool cached = false;
};

template <typename F>
auto timed(double& seconds, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto out = f();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline std::string matrix_name(UnlearnMethod m) { return "guda_" + to_string(m); }

/// One experiment bound to an output directory. Phases load their checkpoint
/// from the cache when a sidecar with the same key exists and train it
/// otherwise. Parameters are rounded to f32 as they leave each phase so that a
/// cached and a fresh run continue from identical values.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)), s_(cfg_.schedule()) {
    in_phase("config", [&] { cfg_.validate(); });
    prov_.config_hash = config_hash(cfg_);
    prov_.seed = cfg_.seed;
    data_ = in_phase("gen-data", [&] { return generate_grouped_dataset(cfg_.dataset, data_seed()); });
  }

  const ExperimentConfig& config() const { return cfg_; }
  const Schedule& schedule() const { return s_; }
  const GroupedDataset& data() const { return data_; }
  const Provenance& provenance() const { return prov_; }
  std::uint64_t data_seed() const { return derive_seed(cfg_.seed, "data"); }
  std::vector<Vec> means() const { return group_means(cfg_.dataset, data_seed()); }

  void write_config() const {
    nlohmann::json j = to_json(cfg_);
    j["provenance"] = prov_.json();
    write_json(cfg_.out_dir / "config.json", j);
  }

  void write_dataset() const {
    in_phase("gen-data", [&] { write_json(cfg_.out_dir / "data" / "dataset.json", dataset_json(data_, means(), prov_)); });
  }

  // Cache keys -------------------------------------------------------------

  nlohmann::json training_identity() const {
    nlohmann::json j = to_json(cfg_);
    return {{"seed", cfg_.seed}, {"dataset", j["dataset"]}, {"schedule", j["schedule"]},
            {"model", j["model"]}, {"train", j["train"]}, {"version", kArtifactVersion}};
  }
  std::string full_key() const { return hash_json(training_identity()); }
  std::string logo_key(int k) const {
    auto j = training_identity();
    j["logo_group"] = k;
    return hash_json(j);
  }
  std::string unlearn_key(UnlearnMethod m, int k) const {
    auto j = training_identity();
    j["unlearn"] = cfg_.unlearn_config(m);
    j["group"] = k;
    return hash_json(j);
  }

  std::filesystem::path ckpt_path(const std::string& stem, const std::string& key) const {
    return cfg_.checkpoint_dir() / (stem + "_" + key + ".ckpt");
  }

  // Phases -----------------------------------------------------------------

  PhaseOutcome full() {
    if (full_) return *full_;
    full_ = in_phase("train-full", [&] {
      return cached_or("full", full_key(), [&](nlohmann::json& side) {
        auto r = train_full(data_, cfg_.architecture(), cfg_.train_config(), s_);
        side["train"] = train_config_json(cfg_.train);
        return finish_training(std::move(r), "full", full_key());
      });
    });
    return *full_;
  }

  PhaseOutcome logo(int k) {
    require_group(k);
    if (auto it = logo_.find(k); it != logo_.end()) return it->second;
    const std::string stem = "logo_g" + std::to_string(k);
    auto out = in_phase("train-logo", [&] {
      return cached_or(stem, logo_key(k), [&](nlohmann::json& side) {
        auto r = train_logo(data_, k, cfg_.architecture(), cfg_.train_config(), s_);
        side["train"] = train_config_json(cfg_.train);
        side["group"] = k;
        return finish_training(std::move(r), stem, logo_key(k));
      });
    });
    return logo_[k] = out;
  }

  PhaseOutcome unlearned(UnlearnMethod m, int k) {
    require_group(k);
    const auto id = std::make_pair(m, k);
    if (auto it = unlearned_.find(id); it != unlearned_.end()) return it->second;
    const auto base = full();
    const std::string stem = "unlearn_" + to_string(m) + "_g" + std::to_string(k);
    auto out = in_phase("unlearn", [&] {
      return cached_or(stem, unlearn_key(m, k), [&](nlohmann::json& side) {
        const auto ucfg = cfg_.unlearn_config(m);
        auto r = unlearn(base.params, data_, k, ucfg, s_);
        side["config"] = ucfg;
        side["group"] = k;
        side["final_forget_loss"] = r.final_forget_loss;
        side["final_preservation_loss"] = r.final_preservation_loss;
        return PhaseOutcome{quantize_to_f32(std::move(r.params)), r.seconds, r.steps, false};
      });
    });
    return unlearned_[id] = out;
  }

  /// Queries sampled from the full model. In conditional mode query q is
  /// generated under group q mod N's condition; otherwise under the null
  /// condition. Labels are the nearest group mean (diagnostic only).
  const std::vector<Query>& queries() {
    if (queries_) return *queries_;
    const auto f = full();
    queries_ = in_phase("queries", [&] {
      std::vector<Query> qs;
      NetworkModel model(f.params, s_.num_steps());
      const int steps = cfg_.queries.steps > 0 ? cfg_.queries.steps : s_.num_steps();
      const Vec null = null_condition(f.params);
      for (int q = 0; q < cfg_.queries.count; ++q) {
        Query query;
        char id[16];
        std::snprintf(id, sizeof id, "q%04d", q);
        query.id = id;
        query.cond = cfg_.dataset.conditional ? data_.cond_vectors[q % data_.num_groups()] : null;
        query.x0 = sample(s_, model, query.cond, steps, derive_seed(cfg_.seed, "query", q), cfg_.queries.sampler);
        if (!all_finite(query.x0)) throw NumericError("non-finite generated query " + query.id);
        qs.push_back(std::move(query));
      }
      return qs;
    });
    return *queries_;
  }

  std::vector<int> query_labels() {
    const auto ms = means();
    std::vector<int> labels;
    for (const auto& q : queries()) {
      int best = 0;
      for (int g = 1; g < static_cast<int>(ms.size()); ++g)
        if (squared_distance(q.x0, ms[g]) < squared_distance(q.x0, ms[best])) best = g;
      labels.push_back(best);
    }
    return labels;
  }

  void write_queries() {
    std::ostringstream os;
    for (const auto& l : prov_.lines()) os << "# " << l << '\n';
    os << "query_id,label";
    for (int i = 0; i < data_.dim; ++i) os << ",x" << i;
    os << '\n';
    const auto labels = query_labels();
    const auto& qs = queries();
    for (std::size_t q = 0; q < qs.size(); ++q) {
      os << qs[q].id << ',' << data_.group_names[labels[q]];
      for (double v : qs[q].x0) os << ',' << format_double(v);
      os << '\n';
    }
    write_text(cfg_.out_dir / "queries.csv", os.str());
  }

  /// Known matrices: logoa, guda_<method>, prototype, oracle.
  AttributionMatrix attribution(const std::string& name) {
    if (auto it = matrices_.find(name); it != matrices_.end()) return it->second;
    const auto f = full();
    const auto& qs = queries();
    const auto ecfg = cfg_.elbo_config();
    const int N = data_.num_groups();
    AttributionMatrix m;
    double seconds = 0.0;
    if (name == "logoa" || name.rfind("guda_", 0) == 0) {
      std::vector<DenoiserParams> cfs;
      for (int k = 0; k < N; ++k) {
        if (name == "logoa")
          cfs.push_back(logo(k).params);
        else
          cfs.push_back(unlearned(unlearn_method_from_string(name.substr(5)), k).params);
      }
      m = timed(seconds, [&] {
        return in_phase("attribute", [&] {
          return attribution_matrix(name, qs, f.params, cfs, data_.group_names, ecfg, s_);
        });
      });
    } else if (name == "prototype") {
      m = timed(seconds, [&] { return in_phase("attribute", [&] { return prototype_baseline(qs, data_); }); });
    } else if (name == "oracle") {
      m = timed(seconds, [&] {
        return in_phase("attribute", [&] {
          EmpiricalModel full_model(data_.all_samples(), s_);
          std::vector<EmpiricalModel> cfs;
          for (int k = 0; k < N; ++k) cfs.emplace_back(data_.samples_except(k), s_);
          return attribution_matrix("oracle", qs, full_model, std::span<const EmpiricalModel>(cfs),
                                    data_.group_names, ecfg, s_);
        });
      });
    } else {
      throw PhaseError("attribute", "unknown attribution method: " + name);
    }
    query_seconds_[name] = seconds;
    return matrices_[name] = m;
  }

  void write_attribution(const std::string& name) {
    const auto m = attribution(name);
    in_phase("attribute", [&] {
      write_text(cfg_.out_dir / "attributions" / (name + ".csv"), to_csv(m, prov_.lines()));
      nlohmann::json j = to_json(m);
      j["provenance"] = prov_.json();
      write_json(cfg_.out_dir / "attributions" / (name + ".json"), j);
      write_json(cfg_.out_dir / "timing" / (name + ".json"),
                 {{"provenance", prov_.json()}, {"query_seconds", query_seconds_.at(name)},
                  {"queries", static_cast<int>(m.num_queries())}});
    });
  }

  /// Matrices produced by a full run, in output order.
  std::vector<std::string> matrix_names() const {
    std::vector<std::string> out{"logoa"};
    for (auto m : cfg_.methods) out.push_back(matrix_name(m));
    out.push_back("prototype");
    out.push_back("oracle");
    return out;
  }

  /// Sidecar of a cached phase, if present with a matching key.
  std::optional<nlohmann::json> sidecar(const std::string& stem, const std::string& key) const {
    auto path = ckpt_path(stem, key);
    path.replace_extension(".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    auto j = read_json(path);
    if (j.value("key", std::string()) != key) return std::nullopt;
    return j;
  }

  /// Timing records for the given matrices read from disk only. Missing
  /// records raise InvalidArgument rather than triggering training.
  TimingRecords recorded_timing(const std::vector<std::string>& matrices) const {
    auto need = [](std::optional<nlohmann::json> j, const std::string& what) {
      if (!j) throw InvalidArgument("missing timing record: " + what);
      return *j;
    };
    TimingRecords r;
    const auto f = need(sidecar("full", full_key()), "train-full");
    r.train_full_seconds = f.at("wall_seconds").get<double>();
    r.train_full_steps = f.at("steps").get<std::int64_t>();
    for (const auto& name : matrices) {
      const auto tp = cfg_.out_dir / "timing" / (name + ".json");
      if (!std::filesystem::exists(tp)) throw InvalidArgument("missing timing record: attribute " + name);
      r.query_seconds[name] = read_json(tp).at("query_seconds").get<double>();
      if (name == "logoa") {
        for (int k = 0; k < data_.num_groups(); ++k) {
          const auto l = need(sidecar("logo_g" + std::to_string(k), logo_key(k)), "train-logo group " + std::to_string(k));
          r.logo_seconds.push_back(l.at("wall_seconds").get<double>());
          r.logo_steps.push_back(l.at("steps").get<std::int64_t>());
        }
      } else if (name.rfind("guda_", 0) == 0) {
        const auto m = unlearn_method_from_string(name.substr(5));
        for (int k = 0; k < data_.num_groups(); ++k) {
          const auto u = need(sidecar("unlearn_" + to_string(m) + "_g" + std::to_string(k), unlearn_key(m, k)),
                              "unlearn " + to_string(m) + " group " + std::to_string(k));
          r.unlearn_seconds[to_string(m)].push_back(u.at("wall_seconds").get<double>());
          r.unlearn_steps[to_string(m)].push_back(u.at("steps").get<std::int64_t>());
        }
      }
    }
    r.queries = cfg_.queries.count;
    return r;
  }

  TimingRecords timing_records() {
    TimingRecords r;
    const auto f = full();
    r.train_full_seconds = f.seconds;
    r.train_full_steps = f.steps;
    for (int k = 0; k < data_.num_groups(); ++k) {
      const auto l = logo(k);
      r.logo_seconds.push_back(l.seconds);
      r.logo_steps.push_back(l.steps);
    }
    for (auto m : cfg_.methods)
      for (int k = 0; k < data_.num_groups(); ++k) {
        const auto u = unlearned(m, k);
        r.unlearn_seconds[to_string(m)].push_back(u.seconds);
        r.unlearn_steps[to_string(m)].push_back(u.steps);
      }
    r.query_seconds = query_seconds_;
    r.queries = cfg_.queries.count;
    return r;
  }

 private:
  void require_group(int k) const {
    if (k < 0 || k >= data_.num_groups())
      throw InvalidArgument("group index " + std::to_string(k) + " out of range");
  }

  PhaseOutcome finish_training(TrainResult r, const std::string& stem, const std::string& key) {
    write_text(cfg_.checkpoint_dir() / (stem + "_" + key + "_log.csv"), training_log_csv(r.log, prov_));
    return PhaseOutcome{quantize_to_f32(std::move(r.params)), r.seconds, r.steps, false};
  }

  template <typename Compute>
  PhaseOutcome cached_or(const std::string& stem, const std::string& key, Compute&& compute) {
    const auto ckpt = ckpt_path(stem, key);
    auto side_path = ckpt;
    side_path.replace_extension(".json");
    if (std::filesystem::exists(ckpt) && std::filesystem::exists(side_path)) {
      const auto side = read_json(side_path);
      if (side.value("key", std::string()) == key) {
        auto p = load_checkpoint(ckpt);
        if (p.arch != cfg_.architecture()) throw CheckpointError("cached checkpoint architecture mismatch");
        return PhaseOutcome{std::move(p), side.at("wall_seconds").get<double>(),
                            side.at("steps").get<std::int64_t>(), true};
      }
    }
    nlohmann::json side;
    PhaseOutcome out = compute(side);
    save_checkpoint(out.params, ckpt);
    side["key"] = key;
    side["phase"] = stem;
    side["wall_seconds"] = out.seconds;
    side["steps"] = out.steps;
    side["provenance"] = prov_.json();
    write_json(side_path, side);
    return out;
  }

  ExperimentConfig cfg_;
  Schedule s_;
  GroupedDataset data_;
  Provenance prov_;
  std::optional<PhaseOutcome> full_;
  std::map<int, PhaseOutcome> logo_;
  std::map<std::pair<UnlearnMethod, int>, PhaseOutcome> unlearned_;
  std::optional<std::vector<Query>> queries_;
  std::map<std::string, AttributionMatrix> matrices_;
  std::map<std::string, double> query_seconds_;
};

struct ExperimentResult {
  std::map<std::string, AttributionMatrix> matrices;
  std::map<std::string, RankReport> reports;  // keyed by method, gold = logoa
  TimingReport timing;
  Provenance provenance;
};

inline nlohmann::json summary_json(const ExperimentResult& r) {
  nlohmann::json reports = nlohmann::json::object();
  for (const auto& [name, rep] : r.reports) reports[name] = to_json(rep, false);
  return {{"provenance", r.provenance.json()}, {"gold", "logoa"}, {"reports", reports}};
}

/// Writes rank reports of every matrix in `matrices` against `gold`.
inline std::map<std::string, RankReport> write_reports(const std::filesystem::path& out_dir,
                                                       const std::map<std::string, AttributionMatrix>& matrices,
                                                       const std::string& gold, const Provenance& prov) {
  return in_phase("evaluate", [&] {
    auto git = matrices.find(gold);
    require(git != matrices.end(), "gold matrix '" + gold + "' not available");
    std::map<std::string, RankReport> reports;
    for (const auto& [name, m] : matrices) {
      auto rep = evaluate(m, git->second);
      nlohmann::json j = to_json(rep);
      j["provenance"] = prov.json();
      write_json(out_dir / "reports" / (name + "_vs_" + gold + ".json"), j);
      reports[name] = std::move(rep);
    }
    return reports;
  });
}

/// The whole pipeline: data, full model, LOGO and unlearned counterfactuals,
/// queries, matrices, rank reports against LOGOA, timing.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Experiment ex(cfg);
  ex.write_config();
  ex.write_dataset();
  ex.full();
  for (int k = 0; k < ex.data().num_groups(); ++k) ex.logo(k);
  for (auto m : cfg.methods)
    for (int k = 0; k < ex.data().num_groups(); ++k) ex.unlearned(m, k);
  ex.write_queries();
  ExperimentResult res;
  res.provenance = ex.provenance();
  for (const auto& name : ex.matrix_names()) {
    ex.write_attribution(name);
    res.matrices[name] = ex.attribution(name);
  }
  res.reports = write_reports(cfg.out_dir, res.matrices, "logoa", ex.provenance());
  const auto records = ex.timing_records();
  res.timing = in_phase("report", [&] { return timing_report(records); });
  in_phase("report", [&] {
    auto tj = to_json(res.timing);
    tj["provenance"] = ex.provenance().json();
    tj["records"] = to_json(records);
    write_json(cfg.out_dir / "timing.json", tj);
    write_json(cfg.out_dir / "summary.json", summary_json(res));
  });
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class SweepAxis { epochs, lambda, K, lr };

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::epochs: return "epochs";
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::K: return "K";
    case SweepAxis::lr: return "lr";
  }
  return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "epochs" || s == "steps") return SweepAxis::epochs;
  if (s == "lambda") return SweepAxis::lambda;
  if (s == "K" || s == "k") return SweepAxis::K;
  if (s == "lr") return SweepAxis::lr;
  throw InvalidArgument("unknown sweep axis: " + s);
}

/// Copy of `cfg` with one unlearning knob changed for every configured
/// method it applies to. "epochs" is the unlearning step count; "lambda" is
/// the weighted term (lambda_forget, or lambda_pres for cond_anchor).
inline ExperimentConfig apply_sweep_value(ExperimentConfig cfg, SweepAxis axis, double v) {
  for (auto m : cfg.methods) {
    const std::string key = m == UnlearnMethod::cond_anchor ? "cond_anchor" : to_string(m);
    auto& block = cfg.unlearn[key];
    if (block.is_null()) block = nlohmann::json::object();
    switch (axis) {
      case SweepAxis::epochs:
        require(v >= 0 && v == std::floor(v), "epochs sweep values must be non-negative integers");
        block["steps"] = static_cast<int>(v);
        break;
      case SweepAxis::lambda:
        block[m == UnlearnMethod::cond_anchor ? "lambda_pres" : "lambda_forget"] = v;
        break;
      case SweepAxis::K:
        require(v >= 1 && v == std::floor(v), "K sweep values must be positive integers");
        if (m == UnlearnMethod::retrack) block["K"] = static_cast<int>(v);
        break;
      case SweepAxis::lr:
        block["lr"] = v;
        break;
    }
  }
  return cfg;
}

struct SweepRow {
  double value = 0.0;
  std::string method;
  RankReport report;
};

/// One run per value in <out_dir>/sweep_<axis>/<value>, sharing the parent
/// checkpoint cache. Emits sweep_<axis>.csv and .json in out_dir.
inline std::vector<SweepRow> sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("sweep needs at least one value");
  std::vector<SweepRow> rows;
  const std::filesystem::path base = cfg.out_dir / ("sweep_" + to_string(axis));
  for (double v : values) {
    ExperimentConfig c = apply_sweep_value(cfg, axis, v);
    c.out_dir = base / format_double(v);
    c.cache_dir = cfg.checkpoint_dir();
    const auto res = run_experiment(c);
    for (const auto& [name, rep] : res.reports) rows.push_back({v, name, rep});
  }
  const Provenance prov{config_hash(cfg), cfg.seed};
  std::ostringstream os;
  for (const auto& l : prov.lines()) os << "# " << l << '\n';
  os << to_string(axis) << ",method,top1,mrr,ndcg3,top3,rbo,spearman\n";
  nlohmann::json j{{"provenance", prov.json()}, {"axis", to_string(axis)}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) {
    const auto& p = r.report;
    os << format_double(r.value) << ',' << r.method << ',' << format_double(p.top1) << ',' << format_double(p.mrr)
       << ',' << format_double(p.ndcg3) << ',' << format_double(p.top3) << ',' << format_double(p.rbo) << ','
       << format_double(p.spearman) << '\n';
    j["rows"].push_back({{"value", r.value}, {"method", r.method}, {"report", to_json(p, false)}});
  }
  in_phase("sweep", [&] {
    write_text(cfg.out_dir / ("sweep_" + to_string(axis) + ".csv"), os.str());
    write_json(cfg.out_dir / ("sweep_" + to_string(axis) + ".json"), j);
  });
  return rows;
}

}  // namespace guda
