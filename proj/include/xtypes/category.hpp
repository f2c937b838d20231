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

// Coarse answer category: five one-vs-rest logistic classifiers, argmax
// of their sigmoid scores. A tie that involves `resource` resolves to it.

#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/linear.hpp"
#include "xtypes/text.hpp"

namespace xtypes {

struct CategoryModel {
  LinearHyperParams hp;
  std::array<BinaryLinearModel, 5> classifiers;

  std::array<double, 5> scores(const SparseVector& x) const {
    std::array<double, 5> s{};
    for (std::size_t c = 0; c < 5; ++c) s[c] = classifiers[c].score(x);
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json cs = nlohmann::json::object();
    for (const auto c : kAllCategories) {
      cs[std::string(to_string(c))] = classifiers[static_cast<std::size_t>(c)].to_json();
    }
    return {{"hp", hp.to_json()}, {"classifiers", cs}};
  }
  static CategoryModel from_json(const nlohmann::json& j) {
    CategoryModel m;
    m.hp = LinearHyperParams::from_json(j.at("hp"));
    for (const auto c : kAllCategories) {
      m.classifiers[static_cast<std::size_t>(c)] =
          BinaryLinearModel::from_json(j.at("classifiers").at(std::string(to_string(c))));
    }
    return m;
  }
};

inline CategoryModel train_category(const QuestionDataset& train,
                                    const QuestionFeaturizer& featurizer,
                                    const LinearHyperParams& hp = {}) {
  std::vector<SparseVector> xs;
  std::vector<CoarseCategory> labels;
  std::set<CoarseCategory> distinct;
  for (const auto& q : train.questions()) {
    if (!q.category) continue;
    xs.push_back(featurizer.featurize(q.text));
    labels.push_back(*q.category);
    distinct.insert(*q.category);
  }
  if (distinct.size() < 2) {
    throw DataError("category classifier needs at least two distinct categories in training data");
  }
  CategoryModel m;
  m.hp = hp;
  std::vector<std::uint8_t> ys(xs.size());
  for (const auto c : kAllCategories) {
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = labels[i] == c ? 1 : 0;
    m.classifiers[static_cast<std::size_t>(c)] = train_logistic(xs, ys, featurizer.dim(), hp);
  }
  return m;
}

inline CoarseCategory predict_category(const CategoryModel& m, const SparseVector& x) {
  const auto s = m.scores(x);
  const auto resource = static_cast<std::size_t>(CoarseCategory::kResource);
  std::size_t best = resource;
  for (std::size_t c = 0; c < 5; ++c) {
    if (s[c] > s[best]) best = c;
  }
  return kAllCategories[best];
}

inline CoarseCategory predict_category(const CategoryModel& m,
                                       const QuestionFeaturizer& featurizer, const Question& q) {
  return predict_category(m, featurizer.featurize(q.text));
}

}  // namespace xtypes
