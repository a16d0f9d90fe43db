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

// guda: command-line front end to the experiment harness.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "guda/harness.hpp"

namespace {

using namespace guda;

struct Shared {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig resolve(const Shared& sh) {
  return in_phase("config", [&] {
    ExperimentConfig c = sh.config.empty() ? ExperimentConfig{} : load_config(sh.config);
    if (sh.seed) c.seed = *sh.seed;
    if (!sh.out.empty()) c.out_dir = sh.out;
    return c;
  });
}

// Accepts logoa, prototype, oracle, guda_<m> and bare unlearning method names.
std::string matrix_name_from_arg(const std::string& m) {
  if (m == "logoa" || m == "prototype" || m == "oracle") return m;
  std::string rest = m.rfind("guda_", 0) == 0 ? m.substr(5) : m;
  return matrix_name(unlearn_method_from_string(rest));
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size()) throw InvalidArgument("not a number: " + cell);
    out.push_back(v);
  }
  return out;
}

// Matrices already written under <out>/attributions, keyed by file stem.
std::map<std::string, AttributionMatrix> load_matrices(const std::filesystem::path& out) {
  std::map<std::string, AttributionMatrix> ms;
  const auto dir = out / "attributions";
  if (!std::filesystem::exists(dir)) throw InvalidArgument("no attributions under " + out.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".csv") {
      const auto name = e.path().stem().string();
      ms[name] = from_csv(read_text(e.path()), name);
    }
  if (ms.empty()) throw InvalidArgument("no attribution CSVs under " + dir.string());
  return ms;
}

void print_report(const std::string& name, const RankReport& r) {
  std::printf("%-18s top1=%.4f mrr=%.4f ndcg3=%.4f top3=%.4f rbo=%.4f spearman=%.4f\n", name.c_str(), r.top1,
              r.mrr, r.ndcg3, r.top3, r.rbo, r.spearman);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group unlearning data attribution on toy diffusion models"};
  app.require_subcommand(1);
  Shared sh;
  auto shared_flags = [&](CLI::App* sub) {
    sub->add_option("--config", sh.config, "experiment configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", sh.seed, "master seed override");
    sub->add_option("--out", sh.out, "output directory override");
  };

  int group = -1;
  std::string method;
  std::string gold = "logoa";
  std::string axis;
  std::string values;

  auto* gen = app.add_subcommand("gen-data", "generate the grouped dataset");
  auto* tfull = app.add_subcommand("train-full", "train the full-data model");
  auto* tlogo = app.add_subcommand("train-logo", "train a leave-one-group-out model");
  tlogo->add_option("--group", group, "group index")->required();
  auto* unl = app.add_subcommand("unlearn", "unlearn one group from the full model");
  unl->add_option("--group", group, "group index")->required();
  unl->add_option("--method", method, "retrack | esd | cond-anchor")->required();
  auto* attr = app.add_subcommand("attribute", "build one attribution matrix");
  attr->add_option("--method", method, "logoa | retrack | esd | cond-anchor | prototype | oracle")->required();
  auto* eval = app.add_subcommand("evaluate", "rank reports of every written matrix against a gold matrix");
  eval->add_option("--gold", gold, "gold matrix name");
  auto* sw = app.add_subcommand("sweep", "repeat the experiment along one unlearning axis");
  sw->add_option("--axis", axis, "epochs | lambda | K | lr")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  auto* rep = app.add_subcommand("report", "timing decomposition and summary from written artifacts");
  auto* run = app.add_subcommand("run", "the whole pipeline");
  for (auto* sub : {gen, tfull, tlogo, unl, attr, eval, sw, rep, run}) shared_flags(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const ExperimentConfig cfg = resolve(sh);
    if (*gen) {
      Experiment ex(cfg);
      ex.write_config();
      ex.write_dataset();
      std::cout << "wrote " << (cfg.out_dir / "data" / "dataset.json").string() << "\n";
    } else if (*tfull) {
      Experiment ex(cfg);
      ex.write_config();
      const auto r = ex.full();
      std::cout << "full model: " << r.steps << " steps, " << r.seconds << " s" << (r.cached ? " (cached)" : "")
                << "\n";
    } else if (*tlogo) {
      Experiment ex(cfg);
      ex.write_config();
      const auto r = ex.logo(group);
      std::cout << "LOGO group " << group << ": " << r.steps << " steps, " << r.seconds << " s"
                << (r.cached ? " (cached)" : "") << "\n";
    } else if (*unl) {
      Experiment ex(cfg);
      ex.write_config();
      const auto m = in_phase("unlearn", [&] { return unlearn_method_from_string(method); });
      const auto r = ex.unlearned(m, group);
      std::cout << to_string(m) << " group " << group << ": " << r.steps << " steps, " << r.seconds << " s"
                << (r.cached ? " (cached)" : "") << "\n";
    } else if (*attr) {
      Experiment ex(cfg);
      ex.write_config();
      const auto name = in_phase("attribute", [&] { return matrix_name_from_arg(method); });
      ex.write_queries();
      ex.write_attribution(name);
      std::cout << "wrote " << (cfg.out_dir / "attributions" / (name + ".csv")).string() << "\n";
    } else if (*eval) {
      Experiment ex(cfg);
      const auto ms = in_phase("evaluate", [&] { return load_matrices(cfg.out_dir); });
      for (const auto& [name, r] : write_reports(cfg.out_dir, ms, gold, ex.provenance())) print_report(name, r);
    } else if (*sw) {
      const auto a = in_phase("sweep", [&] { return sweep_axis_from_string(axis); });
      const auto vs = in_phase("sweep", [&] { return parse_values(values); });
      for (const auto& row : sweep(cfg, a, vs)) {
        std::printf("%s=%-8s ", to_string(a).c_str(), format_double(row.value).c_str());
        print_report(row.method, row.report);
      }
    } else if (*rep) {
      Experiment ex(cfg);
      const auto ms = in_phase("report", [&] { return load_matrices(cfg.out_dir); });
      std::vector<std::string> names;
      for (const auto& [name, m] : ms) names.push_back(name);
      const auto timing = in_phase("report", [&] {
        const auto records = ex.recorded_timing(names);
        auto t = timing_report(records);
        auto tj = to_json(t);
        tj["provenance"] = ex.provenance().json();
        tj["records"] = to_json(records);
        write_json(cfg.out_dir / "timing.json", tj);
        return t;
      });
      ExperimentResult res;
      res.provenance = ex.provenance();
      res.matrices = ms;
      res.timing = timing;
      if (ms.count("logoa")) res.reports = write_reports(cfg.out_dir, ms, "logoa", ex.provenance());
      in_phase("report", [&] { write_json(cfg.out_dir / "summary.json", summary_json(res)); });
      for (const auto& [name, r] : res.reports) print_report(name, r);
      for (const auto& [name, t] : timing.methods)
        std::printf("%-18s preproc=%.3fs query=%.3fs total=%.3fs step_ratio=%g\n", name.c_str(), t.preproc_seconds,
                    t.query_seconds, t.total_seconds, t.step_ratio_vs_logo);
    } else if (*run) {
      const auto res = run_experiment(cfg);
      for (const auto& [name, r] : res.reports) print_report(name, r);
      for (const auto& [name, t] : res.timing.methods)
        std::printf("%-18s preproc=%.3fs query=%.3fs total=%.3fs step_ratio=%g\n", name.c_str(), t.preproc_seconds,
                    t.query_seconds, t.total_seconds, t.step_ratio_vs_logo);
    }
  } catch (const PhaseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << app.get_subcommands().front()->get_name() << "] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
