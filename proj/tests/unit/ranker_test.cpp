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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "model_fixture.hpp"
#include "test_util.hpp"
#include "xtypes/category.hpp"
#include "xtypes/ranker.hpp"

namespace xtypes {
namespace {

struct Trained {
  testing::SmallWorld w;
  QuestionDataset type_train;
  QuestionDataset validation;
  CategoryModel category;
  MatcherModel matcher;
  RankerModel ranker;
  FusionModel fusion;

  PredictorParts parts(const ScoreTable* external = nullptr) const {
    return {&w.featurizer, &category, &w.cm, &matcher, external, &ranker, &fusion};
  }
};

Trained train_world(std::size_t b = 2) {
  Trained t{testing::small_world(), {}, {}, {}, {}, {}, {}};
  auto [train, val] = split_train_validation(t.w.fx.train, 0.8, 5);
  t.type_train = testing::resource_only(train);
  t.validation = val;
  Diagnostics diag;
  t.category = train_category(train, t.w.featurizer);
  t.matcher = train_matcher(t.type_train, t.w.cm, t.w.featurizer, {}, &diag);
  t.ranker = train_ranker(t.type_train, t.w.cm, t.w.featurizer, {}, &diag);
  FusionOptions fo;
  fo.b = b;
  t.fusion = fit_fusion(val, ClusterScorer(&t.matcher, nullptr), t.ranker, t.w.cm, t.w.featurizer, fo, &diag);
  return t;
}

// Kendall tau between two rankings of the same items (1 = identical order).
double kendall_tau(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size() || std::set<std::string>(a.begin(), a.end()) != std::set<std::string>(b.begin(), b.end())) {
    return -2.0;
  }
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < b.size(); ++i) pos[b[i]] = i;
  long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) (pos[a[i]] < pos[a[j]] ? concordant : discordant)++;
  }
  const long pairs = concordant + discordant;
  return pairs == 0 ? 1.0 : static_cast<double>(concordant - discordant) / static_cast<double>(pairs);
}

TEST(Ranker, OneRankerPerTypeAndSeparablePools) {
  // Trained to convergence; the default schedule stops short (as for the matcher).
  auto t = train_world();
  LinearHyperParams hp;
  hp.epochs = 100;
  t.ranker = train_ranker(t.type_train, t.w.cm, t.w.featurizer, hp);
  EXPECT_EQ(t.ranker.rankers.size(), t.w.cm.assignment.size());
  const auto members = t.w.cm.members();
  std::size_t right = 0, total = 0;
  for (const auto& q : t.type_train.questions()) {
    const auto c = t.w.cm.cluster_of(q.gold_types.front());
    const auto x = t.w.featurizer.featurize(q.text);
    for (const auto& type : members[c]) {
      if (t.ranker.constant.count(type)) continue;
      const bool gold = std::find(q.gold_types.begin(), q.gold_types.end(), type) != q.gold_types.end();
      ++total;
      right += (t.ranker.score(type, x) > 0.5) == gold ? 1 : 0;
    }
  }
  ASSERT_GT(total, 0u);
  EXPECT_GE(static_cast<double>(right) / static_cast<double>(total), 0.99);
  for (const auto& [type, m] : t.ranker.rankers) EXPECT_TRUE(m.all_finite());
}

// Roots are gold for every question of their subtree: no negatives.
TEST(Ranker, DegeneratePoolGetsConstantRankerAboveHalf) {
  const auto t = train_world();
  EXPECT_EQ(t.ranker.constant, std::set<std::string>(t.w.roots.begin(), t.w.roots.end()));
  for (const auto& r : t.w.roots) {
    for (const auto& q : t.w.fx.test.questions()) EXPECT_GE(t.ranker.score(r, t.w.featurizer.featurize(q.text)), 0.5);
    EXPECT_GE(t.ranker.score(r, SparseVector{}), 0.5);
  }
  EXPECT_THROW(t.ranker.score("nope", SparseVector{}), LookupError);
}

// Adding questions whose gold types all lie outside cluster c leaves the
// rankers of c's types bit-identical.
TEST(Ranker, PoolsAreRestrictedToTheirCluster) {
  const auto w = testing::small_world();
  const auto base = testing::resource_only(w.fx.train);
  std::vector<Question> extended = base.questions();
  const auto members = w.cm.members();
  const std::string other = members[1].front();
  for (int i = 0; i < 10; ++i) {
    // Text reuses cluster-0 markers but the gold lies in cluster 1.
    extended.push_back({"extra" + std::to_string(i), "which " + w.fx.marker.at(members[0].back()) + " " +
                                                          w.fx.marker.at(members[0].front()),
                        CoarseCategory::kResource, {other}});
  }
  const auto a = train_ranker(base, w.cm, w.featurizer);
  const auto b = train_ranker(QuestionDataset(extended), w.cm, w.featurizer);
  for (const auto& type : members[0]) EXPECT_TRUE(a.rankers.at(type) == b.rankers.at(type)) << type;
  bool changed = false;
  for (const auto& type : members[1]) changed |= !(a.rankers.at(type) == b.rankers.at(type));
  EXPECT_TRUE(changed);
}

double validation_mrr(const Trained& t, const std::function<std::vector<std::string>(const Question&)>& rank) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& q : t.validation.questions()) {
    if (!q.is_resource() || q.gold_types.empty()) continue;
    const auto r = rank(q);
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (std::find(q.gold_types.begin(), q.gold_types.end(), r[i]) != q.gold_types.end()) {
        sum += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
    ++n;
  }
  return sum / static_cast<double>(n);
}

TEST(Fusion, FusedMrrAtLeastBestSingleSignal) {
  const auto t = train_world(2);
  EXPECT_TRUE(t.fusion.fitted);
  EXPECT_FALSE(t.fusion.fit_failed);
  EXPECT_GE(t.fusion.w1, 0.0);
  EXPECT_GE(t.fusion.w2, 0.0);
  const auto members = t.w.cm.members();
  auto by_signal = [&](bool use_m) {
    return [&, use_m](const Question& q) {
      const auto x = t.w.featurizer.featurize(q.text);
      const auto m = score_clusters(t.matcher, x);
      std::vector<std::pair<double, std::string>> c;
      for (const auto cl : top_clusters(m, 2)) {
        for (const auto& type : members[cl]) c.emplace_back(use_m ? m[cl] : t.ranker.score(type, x), type);
      }
      std::stable_sort(c.begin(), c.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<std::string> out;
      for (const auto& [s, type] : c) out.push_back(type);
      return out;
    };
  };
  const double m_only = validation_mrr(t, by_signal(true));
  const double h_only = validation_mrr(t, by_signal(false));
  const double fused = validation_mrr(t, [&](const Question& q) {
    return predict_topk(q, t.parts(), {2, 100, false}).types();
  });
  EXPECT_GE(fused, std::max(m_only, h_only) - 0.01) << m_only << " " << h_only;
}

// Gold pairs carry the lowest m and h: the constrained fit collapses.
TEST(Fusion, DegenerateFitIsFlagged) {
  ClusterModel cm;
  cm.k = 2;
  cm.dim = 1;
  cm.centroids = {0, 0};
  cm.assignment = {{"A", 0}, {"B", 1}};
  RankerModel rm;
  rm.rankers.emplace("A", BinaryLinearModel::constant(1, std::log(0.2 / 0.8)));
  rm.rankers.emplace("B", BinaryLinearModel::constant(1, std::log(0.8 / 0.2)));
  std::vector<Question> qs;
  ScoreTable ext;
  for (int i = 0; i < 20; ++i) {
    qs.push_back({"v" + std::to_string(i), "which one", CoarseCategory::kResource, {"A"}});
    ext["v" + std::to_string(i)] = {0.2, 0.8};
  }
  const auto f = QuestionFeaturizer::fit(std::vector<std::string>{"which one"});
  FusionOptions fo;
  fo.b = 2;
  Diagnostics diag;
  const auto fm = fit_fusion(QuestionDataset(qs), ClusterScorer(nullptr, &ext), rm, cm, f, fo, &diag);
  EXPECT_TRUE(fm.fit_failed);
  EXPECT_EQ(fm.w1, 0.0);
  EXPECT_EQ(fm.w2, 0.0);
  EXPECT_EQ(fm.score(0.1, 0.9), fm.score(0.9, 0.1));
  EXPECT_EQ(diag.count(), 2u);
}

TEST(Fusion, NoResourceValidationQuestionsIsFatal) {
  const auto t = train_world();
  const QuestionDataset val({{"b", "is it", CoarseCategory::kBoolean, {}}});
  EXPECT_THROW(fit_fusion(val, ClusterScorer(&t.matcher, nullptr), t.ranker, t.w.cm, t.w.featurizer), DataError);
}

TEST(Predict, CategoryGateEmptiesNonResource) {
  const auto t = train_world();
  for (const auto& q : t.w.fx.test.questions()) {
    const auto p = predict_topk(q, t.parts(), {2, 10, true});
    if (p.category != CoarseCategory::kResource) {
      EXPECT_TRUE(p.ranked_types.empty());
    }
  }
  CategoryModel always_boolean;
  for (auto& c : always_boolean.classifiers) c = BinaryLinearModel::constant(t.w.featurizer.dim(), -3.0);
  always_boolean.classifiers[static_cast<std::size_t>(CoarseCategory::kBoolean)] =
      BinaryLinearModel::constant(t.w.featurizer.dim(), 3.0);
  auto parts = t.parts();
  parts.category = &always_boolean;
  const auto p = predict_topk(t.w.fx.test.questions().front(), parts);
  EXPECT_EQ(p.category, CoarseCategory::kBoolean);
  EXPECT_TRUE(p.ranked_types.empty());
  parts.category = nullptr;
  EXPECT_THROW(predict_topk(t.w.fx.test.questions().front(), parts), Error);
}

// All clusters open: identical to scoring every type directly.
TEST(Predict, FullyOpenEqualsExhaustiveScoring) {
  const auto t = train_world();
  for (const auto& q : t.w.fx.test.questions()) {
    const auto x = t.w.featurizer.featurize(q.text);
    const auto m = score_clusters(t.matcher, x);
    std::vector<ScoredType> all;
    for (const auto& [type, c] : t.w.cm.assignment) {
      all.push_back({type, t.fusion.score(m[c], t.ranker.score(type, x)), m[c]});
    }
    std::sort(all.begin(), all.end(), [](const ScoredType& a, const ScoredType& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.match != b.match) return a.match > b.match;
      return a.type < b.type;
    });
    all.resize(std::min<std::size_t>(10, all.size()));
    std::vector<std::string> oracle;
    for (const auto& s : all) oracle.push_back(s.type);
    const auto p = predict_topk(q, t.parts(), {t.w.cm.k, 10, false});
    ASSERT_EQ(p.types(), oracle);
    ASSERT_EQ(kendall_tau(p.types(), oracle), 1.0);
  }
}

TEST(Predict, OutputInvariants) {
  const auto t = train_world();
  for (const auto& q : t.w.fx.test.questions()) {
    for (const std::size_t k_out : {1, 3, 10}) {
      const auto p = predict_topk(q, t.parts(), {2, k_out, false});
      ASSERT_LE(p.ranked_types.size(), k_out);
      std::set<std::string> seen;
      for (std::size_t i = 0; i < p.ranked_types.size(); ++i) {
        const double s = p.ranked_types[i].score;
        ASSERT_TRUE(s > 0.0 && s < 1.0);
        ASSERT_TRUE(seen.insert(p.ranked_types[i].type).second);
        if (i > 0) {
          ASSERT_LE(s, p.ranked_types[i - 1].score);
        }
      }
      const auto again = predict_topk(q, t.parts(), {2, k_out, false});
      ASSERT_EQ(again.ranked_types, p.ranked_types);
    }
  }
}

// A question repeated in training whose type sits alone in its cluster
// comes back with that type on top.
TEST(Predict, DuplicatedQuestionOfSingletonClusterRanksItsTypeFirst) {
  ClusterModel cm;
  cm.k = 3;
  cm.dim = 1;
  cm.centroids = {0, 0, 0};
  cm.assignment = {{"A", 0}, {"B", 1}, {"C", 1}, {"D", 2}};
  std::vector<Question> train;
  for (int i = 0; i < 5; ++i) {
    train.push_back({"a" + std::to_string(i), "which lighthouse stands here", CoarseCategory::kResource, {"A"}});
    train.push_back({"b" + std::to_string(i), "which bakery sells bread " + std::to_string(i), CoarseCategory::kResource, {"B"}});
    train.push_back({"c" + std::to_string(i), "which carpenter builds " + std::to_string(i), CoarseCategory::kResource, {"C"}});
    train.push_back({"d" + std::to_string(i), "which dancer performs " + std::to_string(i), CoarseCategory::kResource, {"D"}});
  }
  std::vector<std::string> texts;
  for (const auto& q : train) texts.push_back(q.text);
  const auto f = QuestionFeaturizer::fit(texts);
  const QuestionDataset ds(train);
  const auto mm = train_matcher(ds, cm, f);
  const auto rm = train_ranker(ds, cm, f);
  const FusionModel fusion;  // unit weights
  const PredictorParts parts{&f, nullptr, &cm, &mm, nullptr, &rm, &fusion};
  const auto p = predict_topk({"q", "which lighthouse stands here", CoarseCategory::kResource, {}}, parts,
                              {3, 10, false});
  ASSERT_FALSE(p.ranked_types.empty());
  EXPECT_EQ(p.ranked_types.front().type, "A");
}

TEST(Predict, ExternalScoresEqualToBuiltInGiveIdenticalPredictions) {
  const auto t = train_world();
  ScoreTable ext;
  for (const auto& q : t.w.fx.test.questions()) ext[q.id] = score_clusters(t.matcher, t.w.featurizer, q);
  testing::ScratchDir dir;
  write_file(dir / "scores.tsv", serialize_score_file(ext, t.w.cm.k));
  const auto imported = import_external_scores(dir / "scores.tsv", t.w.fx.test, t.w.cm.k);
  auto external_only = t.parts(&imported);
  external_only.matcher = nullptr;
  for (const auto& q : t.w.fx.test.questions()) {
    const auto a = predict_topk(q, t.parts(), {2, 10, true});
    const auto b = predict_topk(q, external_only, {2, 10, true});
    ASSERT_EQ(a.types(), b.types()) << q.id;
    ASSERT_EQ(a.category, b.category);
  }
  // Missing rows fall back to the matcher, or fail without one.
  ScoreTable partial(ext.begin(), std::next(ext.begin()));
  auto fallback = t.parts(&partial);
  EXPECT_NO_THROW(predict_topk(t.w.fx.test.questions().back(), fallback, {2, 10, false}));
  fallback.matcher = nullptr;
  const auto& missing = *std::find_if(t.w.fx.test.questions().begin(), t.w.fx.test.questions().end(),
                                      [&](const Question& q) { return q.is_resource() && !partial.count(q.id); });
  EXPECT_THROW(predict_topk(missing, fallback, {2, 10, false}), DataError);
}

// Scaling every feature by a positive constant and retraining keeps each
// classifier's decisions: the same types score above 0.5 on every training
// question. Scores near 0 or near 1 may trade places, since the L2 penalty
// is not scale invariant.
TEST(Predict, DecisionsInvariantToFeatureScaling) {
  const auto w = testing::small_world();
  const auto train = testing::resource_only(w.fx.train);
  std::vector<SparseVector> xs;
  for (const auto& q : train.questions()) xs.push_back(w.featurizer.featurize(q.text));
  auto scaled = [](SparseVector x, double c) {
    for (auto& [i, v] : x) v *= c;
    return x;
  };
  LinearHyperParams hp;
  hp.epochs = 200;
  hp.lr = 1.0;
  std::map<std::string, BinaryLinearModel> plain, scaled_models;
  for (const auto& type : w.fx.type_ids) {
    std::vector<std::uint8_t> ys;
    std::vector<SparseVector> xs2;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& g = train.questions()[i].gold_types;
      ys.push_back(std::find(g.begin(), g.end(), type) != g.end() ? 1 : 0);
      xs2.push_back(scaled(xs[i], 3.0));
    }
    plain.emplace(type, train_logistic(xs, ys, w.featurizer.dim(), hp));
    scaled_models.emplace(type, train_logistic(xs2, ys, w.featurizer.dim(), hp));
  }
  auto ranked = [&](const std::map<std::string, BinaryLinearModel>& models, const SparseVector& x) {
    std::vector<std::pair<double, std::string>> s;
    for (const auto& [type, m] : models) s.emplace_back(m.score(x), type);
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    return s;
  };
  for (const auto& q : train.questions()) {
    const auto x = w.featurizer.featurize(q.text);
    const auto a = ranked(plain, x);
    const auto b = ranked(scaled_models, scaled(x, 3.0));
    std::vector<std::string> pa, pb;
    for (const auto& [s, t] : a) {
      if (s > 0.5) pa.push_back(t);
    }
    for (const auto& [s, t] : b) {
      if (s > 0.5) pb.push_back(t);
    }
    ASSERT_FALSE(pa.empty());
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    EXPECT_EQ(pa, pb) << q.id;
    std::vector<std::string> gold = q.gold_types;
    std::sort(gold.begin(), gold.end());
    EXPECT_EQ(pa, gold) << q.id;
  }
}

}  // namespace
}  // namespace xtypes
