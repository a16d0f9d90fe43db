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
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "guda/common.hpp"
#include "guda/elbo.hpp"
#include "guda/trainer.hpp"

namespace guda {

/// Scores of Q queries against N groups for one attribution method.
struct AttributionMatrix {
  std::string method;
  std::vector<Vec> scores;
  std::vector<std::string> query_ids;
  std::vector<std::string> group_names;

  std::size_t num_queries() const { return scores.size(); }
  std::size_t num_groups() const { return group_names.size(); }

  void validate() const {
    require(query_ids.size() == scores.size(), "one query id per row required");
    for (const auto& row : scores) {
      require(row.size() == group_names.size(), "row width must equal number of groups");
      if (!all_finite(row)) throw NumericError("non-finite attribution score");
    }
  }
};

// ---------------------------------------------------------------------------
// Ranking.

/// Group indices by descending score; ties keep the lower index first.
inline std::vector<int> rank(std::span<const double> scores) {
  for (double v : scores)
    if (std::isnan(v)) throw NumericError("rank: NaN score");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

/// Average ranks (1-based, ties share the mean of their positions), in
/// ascending order of score.
inline Vec average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vec r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

// Per-query metrics on score rows.
namespace query_metrics {

inline double top1(std::span<const double> pred, std::span<const double> gold) {
  return rank(pred)[0] == rank(gold)[0] ? 1.0 : 0.0;
}

inline double reciprocal_rank(std::span<const double> pred, std::span<const double> gold) {
  const int target = rank(gold)[0];
  const auto order = rank(pred);
  const auto pos = std::find(order.begin(), order.end(), target) - order.begin();
  return 1.0 / static_cast<double>(pos + 1);
}

/// Gain 2^rel - 1 with rel_i = N - rank_gold(i) + 1, discount log2(r + 1).
inline double ndcg_at_3(std::span<const double> pred, std::span<const double> gold) {
  const auto n = static_cast<int>(gold.size());
  const auto g = rank(gold);
  const auto pr = rank(pred);
  Vec rel(gold.size());
  for (int pos = 0; pos < n; ++pos) rel[g[pos]] = n - (pos + 1) + 1;
  const int depth = std::min(3, n);
  double dcg = 0.0, idcg = 0.0;
  for (int r = 1; r <= depth; ++r) {
    const double disc = std::log2(r + 1.0);
    dcg += (std::exp2(rel[pr[r - 1]]) - 1.0) / disc;
    idcg += (std::exp2(rel[g[r - 1]]) - 1.0) / disc;
  }
  return dcg / idcg;
}

/// |top3(pred) & top3(gold)| / 3 (divided by N when fewer than three groups).
inline double top3_overlap(std::span<const double> pred, std::span<const double> gold) {
  const auto a = rank(pred);
  const auto b = rank(gold);
  const std::size_t depth = std::min<std::size_t>(3, a.size());
  int shared = 0;
  for (std::size_t i = 0; i < depth; ++i)
    for (std::size_t j = 0; j < depth; ++j) shared += a[i] == b[j];
  return static_cast<double>(shared) / static_cast<double>(depth);
}

/// Truncated rank-biased overlap (1-p) sum_{d=1..N} p^{d-1} |A_d & B_d| / d.
inline double rbo(std::span<const double> pred, std::span<const double> gold, double p) {
  require(p > 0.0 && p < 1.0, "rbo: p must lie in (0,1)");
  const auto a = rank(pred);
  const auto b = rank(gold);
  std::vector<char> seen_a(a.size(), 0), seen_b(b.size(), 0);
  int overlap = 0;
  double sum = 0.0, w = 1.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    seen_a[a[d]] = 1;
    seen_b[b[d]] = 1;
    if (a[d] == b[d]) {
      ++overlap;
    } else {
      overlap += seen_b[a[d]];
      overlap += seen_a[b[d]];
    }
    sum += w * overlap / static_cast<double>(d + 1);
    w *= p;
  }
  return (1.0 - p) * sum;
}

/// Pearson correlation of average ranks. A constant row has no defined
/// correlation; it scores 1 against an identical row and 0 otherwise.
inline double spearman(std::span<const double> pred, std::span<const double> gold) {
  const Vec rp = average_ranks(pred);
  const Vec rg = average_ranks(gold);
  const double n = static_cast<double>(rp.size());
  const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
  const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
  double cov = 0.0, vp = 0.0, vg = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    cov += (rp[i] - mp) * (rg[i] - mg);
    vp += (rp[i] - mp) * (rp[i] - mp);
    vg += (rg[i] - mg) * (rg[i] - mg);
  }
  if (vp == 0.0 || vg == 0.0) return rp == rg ? 1.0 : 0.0;
  return std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
}

}  // namespace query_metrics

namespace detail {

inline void check_shapes(const AttributionMatrix& pred, const AttributionMatrix& gold) {
  require(pred.scores.size() == gold.scores.size(), "attribution matrices differ in query count");
  require(pred.num_groups() == gold.num_groups(), "attribution matrices differ in group count");
  for (std::size_t q = 0; q < pred.scores.size(); ++q)
    require(pred.scores[q].size() == gold.scores[q].size(), "attribution rows differ in width");
}

template <typename F>
double mean_over_queries(const AttributionMatrix& pred, const AttributionMatrix& gold, F&& f) {
  check_shapes(pred, gold);
  require(!pred.scores.empty(), "metrics need at least one query");
  CompensatedSum s;
  for (std::size_t q = 0; q < pred.scores.size(); ++q) s.add(f(pred.scores[q], gold.scores[q]));
  return s.value() / static_cast<double>(pred.scores.size());
}

}  // namespace detail

inline double top1_agreement(const AttributionMatrix& pred, const AttributionMatrix& gold) {
  return detail::mean_over_queries(pred, gold, query_metrics::top1);
}
inline double mrr(const AttributionMatrix& pred, const AttributionMatrix& gold) {
  return detail::mean_over_queries(pred, gold, query_metrics::reciprocal_rank);
}
inline double ndcg_at_3(const AttributionMatrix& pred, const AttributionMatrix& gold) {
  return detail::mean_over_queries(pred, gold, query_metrics::ndcg_at_3);
}
inline double top3_overlap(const AttributionMatrix& pred, const AttributionMatrix& gold) {
  return detail::mean_over_queries(pred, gold, query_metrics::top3_overlap);
}
inline double rbo(const AttributionMatrix& pred, const AttributionMatrix& gold, double p = 0.9) {
  return detail::mean_over_queries(pred, gold, [p](auto a, auto b) { return query_metrics::rbo(a, b, p); });
}
inline double spearman(const AttributionMatrix& pred, const AttributionMatrix& gold) {
  return detail::mean_over_queries(pred, gold, query_metrics::spearman);
}

struct QueryReport {
  std::string query_id;
  double top1 = 0, rr = 0, ndcg3 = 0, top3 = 0, rbo = 0, spearman = 0;
};

struct RankReport {
  std::string method;
  std::string gold;
  double top1 = 0, mrr = 0, ndcg3 = 0, top3 = 0, rbo = 0, spearman = 0;
  std::vector<QueryReport> per_query;
};

inline RankReport evaluate(const AttributionMatrix& pred, const AttributionMatrix& gold,
                           double rbo_p = 0.9) {
  detail::check_shapes(pred, gold);
  require(!pred.scores.empty(), "metrics need at least one query");
  RankReport r;
  r.method = pred.method;
  r.gold = gold.method;
  CompensatedSum s1, s2, s3, s4, s5, s6;
  for (std::size_t q = 0; q < pred.scores.size(); ++q) {
    const auto& a = pred.scores[q];
    const auto& b = gold.scores[q];
    QueryReport qr;
    qr.query_id = q < pred.query_ids.size() ? pred.query_ids[q] : std::to_string(q);
    qr.top1 = query_metrics::top1(a, b);
    qr.rr = query_metrics::reciprocal_rank(a, b);
    qr.ndcg3 = query_metrics::ndcg_at_3(a, b);
    qr.top3 = query_metrics::top3_overlap(a, b);
    qr.rbo = query_metrics::rbo(a, b, rbo_p);
    qr.spearman = query_metrics::spearman(a, b);
    s1.add(qr.top1);
    s2.add(qr.rr);
    s3.add(qr.ndcg3);
    s4.add(qr.top3);
    s5.add(qr.rbo);
    s6.add(qr.spearman);
    r.per_query.push_back(std::move(qr));
  }
  const double n = static_cast<double>(pred.scores.size());
  r.top1 = s1.value() / n;
  r.mrr = s2.value() / n;
  r.ndcg3 = s3.value() / n;
  r.top3 = s4.value() / n;
  r.rbo = s5.value() / n;
  r.spearman = s6.value() / n;
  return r;
}

inline nlohmann::json to_json(const RankReport& r, bool with_per_query = true) {
  nlohmann::json j{{"method", r.method}, {"gold", r.gold},      {"top1", r.top1},
                   {"mrr", r.mrr},       {"ndcg3", r.ndcg3},    {"top3", r.top3},
                   {"rbo", r.rbo},       {"spearman", r.spearman}};
  if (with_per_query) {
    auto& pq = j["per_query"] = nlohmann::json::array();
    for (const auto& q : r.per_query)
      pq.push_back({{"query_id", q.query_id}, {"top1", q.top1}, {"rr", q.rr}, {"ndcg3", q.ndcg3},
                    {"top3", q.top3}, {"rbo", q.rbo}, {"spearman", q.spearman}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Serialization.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header `query_id,<group names...>`. `preamble` lines are written
/// first, each prefixed with "# ".
inline std::string to_csv(const AttributionMatrix& m, const std::vector<std::string>& preamble = {}) {
  std::ostringstream os;
  for (const auto& line : preamble) os << "# " << line << '\n';
  os << "query_id";
  for (const auto& g : m.group_names) os << ',' << g;
  os << '\n';
  for (std::size_t q = 0; q < m.scores.size(); ++q) {
    os << m.query_ids[q];
    for (double v : m.scores[q]) os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

inline AttributionMatrix from_csv(const std::string& text, std::string method = {}) {
  AttributionMatrix m;
  m.method = std::move(method);
  std::istringstream is(text);
  std::string line;
  bool header = true;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    return out;
  };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    require(!cells.empty(), "malformed attribution CSV");
    if (header) {
      require(cells[0] == "query_id", "attribution CSV must start with query_id");
      m.group_names.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    require(cells.size() == m.group_names.size() + 1, "attribution CSV row has wrong width");
    m.query_ids.push_back(cells[0]);
    Vec row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(std::stod(cells[i]));
    m.scores.push_back(std::move(row));
  }
  m.validate();
  return m;
}

inline nlohmann::json to_json(const AttributionMatrix& m) {
  return nlohmann::json{{"method", m.method},
                        {"query_ids", m.query_ids},
                        {"group_names", m.group_names},
                        {"scores", m.scores}};
}

inline AttributionMatrix matrix_from_json(const nlohmann::json& j) {
  AttributionMatrix m;
  m.method = j.at("method").get<std::string>();
  m.query_ids = j.at("query_ids").get<std::vector<std::string>>();
  m.group_names = j.at("group_names").get<std::vector<std::string>>();
  m.scores = j.at("scores").get<std::vector<Vec>>();
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Building matrices.

struct Query {
  std::string id;
  Vec x0;
  Vec cond;
};

/// scores[q][k] = ELBO(full) - ELBO(counterfactual_k) under shared noise, with
/// the per-query noise seed derived from (cfg.noise_seed, q).
template <EpsModel Full, EpsModel Cf>
AttributionMatrix attribution_matrix(std::string method, std::span<const Query> queries,
                                     const Full& full, std::span<const Cf> counterfactuals,
                                     std::vector<std::string> group_names, const ElboConfig& cfg,
                                     const Schedule& s) {
  cfg.validate(s.num_steps());
  require(counterfactuals.size() == group_names.size(), "one counterfactual model per group required");
  for (const auto& cf : counterfactuals)
    require(cf.dim() == full.dim(), "counterfactual model dimension mismatch");
  AttributionMatrix m;
  m.method = std::move(method);
  m.group_names = std::move(group_names);
  const auto grid = cfg.grid();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const Query& query = queries[q];
    const std::uint64_t seed = derive_seed(cfg.noise_seed, q);
    const double base = elbo_on_grid(full, query.x0, query.cond, grid, seed, cfg.samples_per_t, s);
    Vec row(counterfactuals.size());
    for (std::size_t k = 0; k < counterfactuals.size(); ++k)
      row[k] = base - elbo_on_grid(counterfactuals[k], query.x0, query.cond, grid, seed,
                                   cfg.samples_per_t, s);
    m.scores.push_back(std::move(row));
    m.query_ids.push_back(query.id);
  }
  m.validate();
  return m;
}

/// Parameter-record front end: every counterfactual must share the full
/// model's architecture.
inline AttributionMatrix attribution_matrix(std::string method, std::span<const Query> queries,
                                            const DenoiserParams& full,
                                            std::span<const DenoiserParams> counterfactuals,
                                            std::vector<std::string> group_names,
                                            const ElboConfig& cfg, const Schedule& s) {
  for (const auto& cf : counterfactuals)
    require(cf.arch == full.arch, "counterfactual checkpoint architecture mismatch");
  std::vector<NetworkModel> cfs;
  for (const auto& cf : counterfactuals) cfs.emplace_back(cf, s.num_steps());
  return attribution_matrix(std::move(method), queries, NetworkModel(full, s.num_steps()),
                            std::span<const NetworkModel>(cfs), std::move(group_names), cfg, s);
}

using FeatureMap = std::function<Vec(std::span<const double>)>;

inline Vec identity_features(std::span<const double> x) { return Vec(x.begin(), x.end()); }

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine similarity of a zero-norm embedding");
  return dot(a, b) / (na * nb);
}

/// Cosine similarity between each query's embedding and each group's mean
/// embedding.
inline AttributionMatrix prototype_baseline(std::span<const Query> queries, const GroupedDataset& d,
                                            const FeatureMap& embed = identity_features) {
  d.validate();
  std::vector<Vec> protos;
  for (const auto& g : d.groups) {
    std::vector<Vec> feats;
    for (const auto& x : g) feats.push_back(embed(x));
    Vec m(feats.front().size(), 0.0);
    for (const auto& f : feats)
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += f[i];
    for (auto& v : m) v /= static_cast<double>(feats.size());
    protos.push_back(std::move(m));
  }
  AttributionMatrix m;
  m.method = "prototype";
  m.group_names = d.group_names;
  for (const auto& q : queries) {
    const Vec e = embed(q.x0);
    Vec row;
    for (const auto& p : protos) row.push_back(cosine_similarity(e, p));
    m.scores.push_back(std::move(row));
    m.query_ids.push_back(q.id);
  }
  return m;
}

}  // namespace guda
