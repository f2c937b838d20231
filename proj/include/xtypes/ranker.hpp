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

// Label ranking inside clusters and score fusion.
//
//   h(q, t)  one-vs-all logistic ranker of type t, trained on the questions
//            that have a gold type in t's cluster
//   f(q, t)  sigmoid(w0 + w1 * m(q, c(t)) + w2 * h(q, t)), fitted on
//            held-out questions
//
// Prediction opens the b best-matching clusters and ranks their types by f
// (ties: higher m, then type id).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xtypes/category.hpp"
#include "xtypes/clustering.hpp"
#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/linear.hpp"
#include "xtypes/matcher.hpp"
#include "xtypes/text.hpp"

namespace xtypes {

struct RankerModel {
  LinearHyperParams hp;
  std::map<std::string, BinaryLinearModel> rankers;
  std::set<std::string> constant;  // types whose pool had no negatives

  double score(const std::string& type, const SparseVector& x) const {
    auto it = rankers.find(type);
    if (it == rankers.end()) throw LookupError("no ranker for type " + type);
    return it->second.score(x);
  }

  nlohmann::json to_json() const {
    nlohmann::json rs = nlohmann::json::object();
    for (const auto& [t, m] : rankers) rs[t] = m.to_json();
    return {{"hp", hp.to_json()}, {"rankers", rs}, {"constant", constant}};
  }
  static RankerModel from_json(const nlohmann::json& j) {
    RankerModel m;
    m.hp = LinearHyperParams::from_json(j.at("hp"));
    for (const auto& [t, r] : j.at("rankers").items()) {
      m.rankers.emplace(t, BinaryLinearModel::from_json(r));
    }
    m.constant = j.at("constant").get<std::set<std::string>>();
    return m;
  }
};

inline RankerModel train_ranker(const QuestionDataset& train, const ClusterModel& cm,
                                const QuestionFeaturizer& featurizer,
                                const LinearHyperParams& hp = {}, Diagnostics* diag = nullptr) {
  std::vector<SparseVector> xs;
  std::vector<const Question*> qs;
  std::vector<std::set<std::size_t>> clusters_of;
  for (const auto& q : train.questions()) {
    if (!q.is_resource() || q.gold_types.empty()) continue;
    xs.push_back(featurizer.featurize(q.text));
    qs.push_back(&q);
    clusters_of.push_back(gold_clusters(q, cm));
  }
  RankerModel rm;
  rm.hp = hp;
  const auto members = cm.members();
  for (std::size_t c = 0; c < cm.k; ++c) {
    std::vector<const SparseVector*> pool;
    std::vector<const Question*> pool_q;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (clusters_of[i].count(c)) {
        pool.push_back(&xs[i]);
        pool_q.push_back(qs[i]);
      }
    }
    for (const auto& t : members[c]) {
      std::vector<std::uint8_t> ys(pool.size());
      std::size_t pos = 0;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& g = pool_q[i]->gold_types;
        ys[i] = std::find(g.begin(), g.end(), t) != g.end() ? 1 : 0;
        pos += ys[i];
      }
      if (pos == pool.size()) {
        // Every pool question is a positive: constant ranker above 0.5.
        const double p = (static_cast<double>(pos) + 1.0) / (static_cast<double>(pos) + 2.0);
        rm.rankers.emplace(t, BinaryLinearModel::constant(featurizer.dim(), std::log(p / (1.0 - p))));
        rm.constant.insert(t);
        warn(diag, "type " + t + ": training pool has no negatives; using a constant ranker");
        continue;
      }
      rm.rankers.emplace(t, train_logistic(std::span<const SparseVector* const>(pool),
                                           std::span<const std::uint8_t>(ys), featurizer.dim(), hp));
    }
  }
  return rm;
}

struct FusionModel {
  double w0 = 0.0;
  double w1 = 1.0;
  double w2 = 1.0;
  bool fitted = false;
  bool fit_failed = false;

  double score(double m, double h) const { return sigmoid(w0 + w1 * m + w2 * h); }

  nlohmann::json to_json() const {
    return {{"w0", w0}, {"w1", w1}, {"w2", w2}, {"fitted", fitted}, {"fit_failed", fit_failed}};
  }
  static FusionModel from_json(const nlohmann::json& j) {
    FusionModel f;
    f.w0 = j.at("w0").get<double>();
    f.w1 = j.at("w1").get<double>();
    f.w2 = j.at("w2").get<double>();
    f.fitted = j.at("fitted").get<bool>();
    f.fit_failed = j.at("fit_failed").get<bool>();
    return f;
  }
};

struct FusionOptions {
  std::size_t b = 3;
  std::size_t max_negatives_per_question = 20;
  std::uint64_t seed = 23;
  LinearHyperParams hp{.epochs = 100, .lr = 1.0, .l2 = 1e-4, .batch_size = 8, .seed = 29};
};

// Matching scores for one question: external table first, built-in
// matcher as fallback.
class ClusterScorer {
 public:
  ClusterScorer(const MatcherModel* matcher, const ScoreTable* external)
      : matcher_(matcher), external_(external) {}

  std::vector<double> operator()(const Question& q, const SparseVector& x) const {
    if (external_ != nullptr) {
      if (auto it = external_->find(q.id); it != external_->end()) return it->second;
    }
    if (matcher_ == nullptr) {
      throw DataError("no matching scores for question " + q.id +
                      " and no built-in matcher loaded");
    }
    return score_clusters(*matcher_, x);
  }

 private:
  const MatcherModel* matcher_;
  const ScoreTable* external_;
};

// Indices of the b largest scores, ties to the lower cluster id.
inline std::vector<std::size_t> top_clusters(const std::vector<double>& m, std::size_t b) {
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return m[a] > m[c]; });
  idx.resize(std::min(b, idx.size()));
  return idx;
}

inline FusionModel fit_fusion(const QuestionDataset& val, const ClusterScorer& scorer,
                              const RankerModel& rm, const ClusterModel& cm,
                              const QuestionFeaturizer& featurizer, const FusionOptions& opt = {},
                              Diagnostics* diag = nullptr) {
  const auto members = cm.members();
  std::vector<SparseVector> xs;
  std::vector<std::uint8_t> ys;
  Rng rng(opt.seed);
  std::size_t used = 0;
  for (const auto& q : val.questions()) {
    if (!q.is_resource() || q.gold_types.empty()) continue;
    ++used;
    const SparseVector x = featurizer.featurize(q.text);
    const auto m = scorer(q, x);
    const std::set<std::string> gold(q.gold_types.begin(), q.gold_types.end());
    std::vector<SparseVector> negatives;
    for (const std::size_t c : top_clusters(m, opt.b)) {
      for (const auto& t : members[c]) {
        SparseVector pair{{0, m[c]}, {1, rm.score(t, x)}};
        if (gold.count(t)) {
          xs.push_back(std::move(pair));
          ys.push_back(1);
        } else {
          negatives.push_back(std::move(pair));
        }
      }
    }
    rng.shuffle(negatives);
    if (negatives.size() > opt.max_negatives_per_question) {
      negatives.resize(opt.max_negatives_per_question);
    }
    for (auto& n : negatives) {
      xs.push_back(std::move(n));
      ys.push_back(0);
    }
  }
  if (used == 0) throw DataError("fusion: validation set has no resource questions");

  auto fit = [&](bool nonnegative) {
    LinearHyperParams hp = opt.hp;
    hp.nonnegative = nonnegative;
    const auto model = train_logistic(xs, ys, 2, hp);
    FusionModel f;
    f.w0 = model.bias();
    f.w1 = model.weights()[0];
    f.w2 = model.weights()[1];
    f.fitted = true;
    return f;
  };
  FusionModel f = fit(false);
  if (!(f.w1 > 0.0 && f.w2 > 0.0)) {
    warn(diag, "fusion weights not both positive (w1=" + format_double(f.w1) +
                   ", w2=" + format_double(f.w2) + "); refitting with non-negativity");
    f = fit(true);
  }
  if (f.w1 == 0.0 && f.w2 == 0.0) {
    f.fit_failed = true;
    warn(diag, "fusion fit failed: constant combiner");
  }
  return f;
}

struct ScoredType {
  std::string type;
  double score;  // f(q, t)
  double match;  // m(q, c(t))

  friend bool operator==(const ScoredType&, const ScoredType&) = default;
};

struct RankedPrediction {
  std::string question_id;
  CoarseCategory category = CoarseCategory::kResource;
  std::vector<ScoredType> ranked_types;

  std::vector<std::string> types() const {
    std::vector<std::string> out;
    for (const auto& s : ranked_types) out.push_back(s.type);
    return out;
  }
};

// Everything predict_topk needs, trained against one featurizer and one
// cluster model.
struct PredictorParts {
  const QuestionFeaturizer* featurizer = nullptr;
  const CategoryModel* category = nullptr;
  const ClusterModel* clusters = nullptr;
  const MatcherModel* matcher = nullptr;
  const ScoreTable* external_scores = nullptr;
  const RankerModel* ranker = nullptr;
  const FusionModel* fusion = nullptr;
};

inline void sort_ranked(std::vector<ScoredType>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredType& a, const ScoredType& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.match != b.match) return a.match > b.match;
    return a.type < b.type;
  });
}

struct PredictOptions {
  std::size_t b = 3;
  std::size_t k_out = 10;
  // When false the category gate is skipped and types are ranked for every
  // question (type-only evaluation).
  bool gate_on_category = true;
};

inline RankedPrediction predict_topk(const Question& q, const PredictorParts& parts,
                                     const PredictOptions& opt = {}) {
  if (parts.featurizer == nullptr || parts.clusters == nullptr || parts.ranker == nullptr ||
      parts.fusion == nullptr || (parts.matcher == nullptr && parts.external_scores == nullptr)) {
    throw Error("predict_topk: model parts are missing");
  }
  if (opt.gate_on_category && parts.category == nullptr) {
    throw Error("predict_topk: category model is missing");
  }
  const SparseVector x = parts.featurizer->featurize(q.text);
  RankedPrediction out;
  out.question_id = q.id;
  out.category = opt.gate_on_category ? predict_category(*parts.category, x)
                                      : CoarseCategory::kResource;
  if (out.category != CoarseCategory::kResource) return out;

  const ClusterScorer scorer(parts.matcher, parts.external_scores);
  const auto m = scorer(q, x);
  const auto members = parts.clusters->members();
  for (const std::size_t c : top_clusters(m, opt.b)) {
    for (const auto& t : members[c]) {
      out.ranked_types.push_back({t, parts.fusion->score(m[c], parts.ranker->score(t, x)), m[c]});
    }
  }
  sort_ranked(out.ranked_types);
  if (out.ranked_types.size() > opt.k_out) out.ranked_types.resize(opt.k_out);
  return out;
}

// SMART submission format.
inline nlohmann::json to_predictions_json(const std::vector<RankedPrediction>& preds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : preds) arr.push_back(smart_record(p.question_id, nullptr, p.category, p.types()));
  return arr;
}

// A prediction as read back from a submission file.
struct PredictionRecord {
  std::string id;
  std::optional<CoarseCategory> category;
  std::vector<std::string> types;
};

inline std::vector<PredictionRecord> parse_predictions_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw DataError("predictions must be a JSON array");
  std::vector<PredictionRecord> out;
  std::set<std::string> seen;
  for (const auto& rec : doc) {
    PredictionRecord p;
    p.id = rec.contains("id") ? detail::json_id(rec["id"]) : std::string();
    if (p.id.empty()) throw DataError("prediction without id");
    if (!seen.insert(p.id).second) throw DataError("duplicate prediction id " + p.id);
    if (auto tit = rec.find("type"); tit != rec.end() && tit->is_array()) {
      for (const auto& t : *tit) {
        if (t.is_string()) p.types.push_back(t.get<std::string>());
      }
    }
    if (auto cit = rec.find("category"); cit != rec.end() && cit->is_string()) {
      const auto& name = cit->get_ref<const std::string&>();
      if (name == "literal") {
        if (!p.types.empty()) p.category = parse_category(p.types.front());
        if (!p.category || !is_literal(*p.category)) {
          throw DataError("prediction " + p.id + ": literal category without subtype");
        }
      } else {
        p.category = parse_category(name);
        if (!p.category) throw DataError("prediction " + p.id + ": unknown category " + name);
      }
      if (*p.category != CoarseCategory::kResource) p.types.clear();
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  return parse_predictions_json(doc);
}

}  // namespace xtypes
