/*
 * Copyright 2026 The xtypes Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Hierarchy-aware NDCG@k and MRR for answer type rankings.
//
// A predicted type t gets gain max_g 1 / (1 + d(t, g)) over the gold types
// g, where d is the undirected subclass-graph distance (0 for unconnected
// types). DCG uses log2(i + 1) discounts; the ideal DCG assumes
// min(k, |gold|) exact hits. Partial credit can push DCG above the ideal,
// so NDCG is clamped to [0, 1].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/kg_store.hpp"
#include "xtypes/ranker.hpp"

namespace xtypes {

inline constexpr std::string_view kGainFunctionId = "inverse_distance_1_over_1_plus_d";

// Gains of arbitrary predicted types against one gold list. Distances are
// computed once per gold type.
class GainTable {
 public:
  GainTable(const TypeSystem* ts, const std::vector<std::string>& gold)
      : ts_(ts), gold_(gold.begin(), gold.end()) {
    if (ts_ == nullptr) return;
    for (const auto& g : gold_) {
      if (ts_->contains(g)) dist_.push_back(ts_->distances_from(ts_->index_of(g)));
    }
  }

  double operator()(const std::string& predicted) const {
    if (gold_.count(predicted)) return 1.0;
    if (ts_ == nullptr || !ts_->contains(predicted)) return 0.0;
    const std::size_t p = ts_->index_of(predicted);
    double best = 0.0;
    for (const auto& d : dist_) {
      if (d[p] != kUnreachable) best = std::max(best, 1.0 / (1.0 + static_cast<double>(d[p])));
    }
    return best;
  }

 private:
  const TypeSystem* ts_;
  std::set<std::string> gold_;
  std::vector<std::vector<std::size_t>> dist_;
};

inline double gain(const TypeSystem& ts, const std::string& predicted,
                   const std::vector<std::string>& gold) {
  return GainTable(&ts, gold)(predicted);
}

inline double discount(std::size_t rank) {  // rank is 1-based
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

// NDCG@k of `ranked` against `gold`; nullopt when gold is empty. `ts` may
// be null, in which case only exact matches earn gain.
inline std::optional<double> ndcg_at_k(const TypeSystem* ts, const std::vector<std::string>& ranked,
                                       const std::vector<std::string>& gold, std::size_t k) {
  if (gold.empty()) return std::nullopt;
  const GainTable g(ts, gold);
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) dcg += g(ranked[i]) * discount(i + 1);
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, gold.size()); ++i) idcg += discount(i + 1);
  if (idcg <= 0.0) return 0.0;
  return std::clamp(dcg / idcg, 0.0, 1.0);
}

inline double mrr(const std::vector<std::string>& ranked, const std::vector<std::string>& gold) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (std::find(gold.begin(), gold.end(), ranked[i]) != gold.end()) {
      return 1.0 / static_cast<double>(i + 1);
    }
  }
  return 0.0;
}

enum class EvalMode { kTypeOnly, kEndToEnd };
enum class EvalMetric { kNdcg, kMrr };

inline std::string_view to_string(EvalMode m) {
  return m == EvalMode::kTypeOnly ? "type_only" : "end_to_end";
}
inline std::string_view to_string(EvalMetric m) { return m == EvalMetric::kNdcg ? "ndcg" : "mrr"; }

inline std::optional<EvalMode> parse_eval_mode(std::string_view s) {
  if (s == "type_only") return EvalMode::kTypeOnly;
  if (s == "end_to_end") return EvalMode::kEndToEnd;
  return std::nullopt;
}
inline std::optional<EvalMetric> parse_eval_metric(std::string_view s) {
  if (s == "ndcg") return EvalMetric::kNdcg;
  if (s == "mrr") return EvalMetric::kMrr;
  return std::nullopt;
}

inline constexpr std::array<std::size_t, 3> kNdcgCutoffs = {3, 5, 10};

struct QuestionScore {
  std::string id;
  CoarseCategory gold_category;
  std::map<std::string, double> scores;  // metric name -> value
};

struct EvalReport {
  EvalMode mode = EvalMode::kTypeOnly;
  EvalMetric metric = EvalMetric::kNdcg;
  std::vector<std::string> metric_names;
  std::map<std::string, double> means;
  std::vector<QuestionScore> per_question;
  std::map<std::string, std::size_t> category_counts;  // gold questions per category
  std::size_t skipped_empty_gold = 0;
  std::size_t missing_predictions = 0;
  std::size_t extra_predictions = 0;

  nlohmann::json to_json() const {
    nlohmann::json pq = nlohmann::json::array();
    for (const auto& q : per_question) {
      pq.push_back({{"id", q.id}, {"category", std::string(to_string(q.gold_category))},
                    {"scores", q.scores}});
    }
    return {{"mode", std::string(to_string(mode))},
            {"metric", std::string(to_string(metric))},
            {"gain_function", std::string(kGainFunctionId)},
            {"k_values", kNdcgCutoffs},
            {"means", means},
            {"evaluated", per_question.size()},
            {"category_counts", category_counts},
            {"skipped_empty_gold", skipped_empty_gold},
            {"missing_predictions", missing_predictions},
            {"extra_predictions", extra_predictions},
            {"per_question", pq}};
  }
};

inline std::vector<std::string> metric_names(EvalMetric metric) {
  if (metric == EvalMetric::kMrr) return {"mrr"};
  std::vector<std::string> out;
  for (const auto k : kNdcgCutoffs) out.push_back("ndcg@" + std::to_string(k));
  return out;
}

// Scores a prediction file against gold data. Mismatched ids above 5% of
// the gold set are treated as a file pairing error.
inline EvalReport evaluate_run(const TypeSystem* ts, const std::vector<PredictionRecord>& predictions,
                               const QuestionDataset& gold, EvalMode mode, EvalMetric metric) {
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  EvalReport report;
  report.mode = mode;
  report.metric = metric;
  report.metric_names = metric_names(metric);
  for (const auto& p : predictions) {
    if (gold.find(p.id) == nullptr) {
      ++report.extra_predictions;
    } else {
      by_id.emplace(p.id, &p);
    }
  }
  for (const auto& q : gold.questions()) {
    if (!by_id.count(q.id)) ++report.missing_predictions;
  }
  const double mismatch =
      static_cast<double>(report.missing_predictions + report.extra_predictions) /
      static_cast<double>(std::max<std::size_t>(gold.size(), 1));
  if (mismatch > 0.05) {
    throw DataError("prediction/gold id mismatch of " + std::to_string(mismatch * 100.0) +
                    "% exceeds 5% (" + std::to_string(report.missing_predictions) + " missing, " +
                    std::to_string(report.extra_predictions) + " unknown)");
  }

  auto type_scores = [&](const std::vector<std::string>& ranked, const std::vector<std::string>& g) {
    std::map<std::string, double> s;
    if (metric == EvalMetric::kMrr) {
      s["mrr"] = mrr(ranked, g);
    } else {
      for (const auto k : kNdcgCutoffs) s["ndcg@" + std::to_string(k)] = *ndcg_at_k(ts, ranked, g, k);
    }
    return s;
  };
  auto constant_scores = [&](double v) {
    std::map<std::string, double> s;
    for (const auto& n : report.metric_names) s[n] = v;
    return s;
  };

  for (const auto& q : gold.questions()) {
    if (!q.category) continue;
    ++report.category_counts[std::string(to_string(*q.category))];
    const bool resource = *q.category == CoarseCategory::kResource;
    if (mode == EvalMode::kTypeOnly && !resource) continue;
    if (resource && q.gold_types.empty()) {
      ++report.skipped_empty_gold;
      continue;
    }
    auto it = by_id.find(q.id);
    const PredictionRecord* p = it == by_id.end() ? nullptr : it->second;
    QuestionScore qs{q.id, *q.category, {}};
    if (p == nullptr) {
      qs.scores = constant_scores(0.0);
    } else if (!resource) {
      qs.scores = constant_scores(p->category == q.category ? 1.0 : 0.0);
    } else if (mode == EvalMode::kEndToEnd && p->category != CoarseCategory::kResource) {
      qs.scores = constant_scores(0.0);
    } else {
      qs.scores = type_scores(p->types, q.gold_types);
    }
    report.per_question.push_back(std::move(qs));
  }
  for (const auto& n : report.metric_names) {
    double sum = 0.0;
    for (const auto& q : report.per_question) sum += q.scores.at(n);
    report.means[n] =
        report.per_question.empty() ? 0.0 : sum / static_cast<double>(report.per_question.size());
  }
  return report;
}

struct TableRow {
  std::string method;
  std::optional<EvalReport> type_only;
  std::optional<EvalReport> end_to_end;
};

// Aligned text table: one row per method, a type-prediction block and an
// end-to-end block of metric columns.
inline std::string render_table(const std::vector<TableRow>& rows) {
  std::vector<std::string> cols;
  for (const auto& r : rows) {
    for (const auto* rep : {r.type_only ? &*r.type_only : nullptr, r.end_to_end ? &*r.end_to_end : nullptr}) {
      if (rep != nullptr && cols.empty()) cols = rep->metric_names;
    }
  }
  std::size_t method_w = 6;
  for (const auto& r : rows) method_w = std::max(method_w, r.method.size());
  const std::size_t col_w = 9;
  std::ostringstream out;
  auto cell = [&](const std::optional<EvalReport>& rep, const std::string& name) {
    if (!rep || !rep->means.count(name)) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << rep->means.at(name);
    return s.str();
  };
  const std::size_t block_w = cols.size() * (col_w + 1);
  out << std::left << std::setw(static_cast<int>(method_w)) << "Method" << " | "
      << std::setw(static_cast<int>(block_w)) << "Type prediction" << "| End-to-end\n";
  out << std::setw(static_cast<int>(method_w)) << "" << " | ";
  for (int block = 0; block < 2; ++block) {
    for (const auto& c : cols) out << std::setw(static_cast<int>(col_w)) << c << ' ';
    if (block == 0) out << "| ";
  }
  out << '\n' << std::string(method_w + 3 + 2 * block_w + 2, '-') << '\n';
  for (const auto& r : rows) {
    out << std::setw(static_cast<int>(method_w)) << r.method << " | ";
    for (const auto& c : cols) out << std::setw(static_cast<int>(col_w)) << cell(r.type_only, c) << ' ';
    out << "| ";
    for (const auto& c : cols) out << std::setw(static_cast<int>(col_w)) << cell(r.end_to_end, c) << ' ';
    out << '\n';
  }
  return out.str();
}

}  // namespace xtypes
