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

// Cluster matching: m(q, c) for every cluster, from one-vs-rest logistic
// classifiers over question features, or from an external score file.
//
// Score file:
//   #k <k>
//   <question_id>\t<s1>\t...\t<sk>

#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtypes/clustering.hpp"
#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/linear.hpp"
#include "xtypes/text.hpp"

namespace xtypes {

struct MatcherModel {
  std::size_t k = 0;
  LinearHyperParams hp;
  std::vector<BinaryLinearModel> clusters;

  nlohmann::json to_json() const {
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : clusters) cs.push_back(c.to_json());
    return {{"k", k}, {"hp", hp.to_json()}, {"clusters", cs}};
  }
  static MatcherModel from_json(const nlohmann::json& j) {
    MatcherModel m;
    m.k = j.at("k").get<std::size_t>();
    m.hp = LinearHyperParams::from_json(j.at("hp"));
    for (const auto& c : j.at("clusters")) m.clusters.push_back(BinaryLinearModel::from_json(c));
    if (m.clusters.size() != m.k) throw DataError("matcher: cluster count mismatch");
    return m;
  }
};

// Clusters holding at least one gold type of `q`.
inline std::set<std::size_t> gold_clusters(const Question& q, const ClusterModel& cm) {
  std::set<std::size_t> out;
  for (const auto& t : q.gold_types) {
    auto it = cm.assignment.find(t);
    if (it == cm.assignment.end()) {
      throw ParameterError("question " + q.id + ": gold type " + t + " has no cluster");
    }
    out.insert(it->second);
  }
  return out;
}

// One logistic classifier per cluster; a resource question is a positive
// for cluster c iff one of its gold types lies in c.
inline MatcherModel train_matcher(const QuestionDataset& train, const ClusterModel& cm,
                                  const QuestionFeaturizer& featurizer,
                                  const LinearHyperParams& hp = {}, Diagnostics* diag = nullptr) {
  std::vector<SparseVector> xs;
  std::vector<std::set<std::size_t>> positives;
  for (const auto& q : train.questions()) {
    if (!q.is_resource() || q.gold_types.empty()) continue;
    xs.push_back(featurizer.featurize(q.text));
    positives.push_back(gold_clusters(q, cm));
  }
  MatcherModel mm;
  mm.k = cm.k;
  mm.hp = hp;
  std::vector<std::uint8_t> ys(xs.size());
  for (std::size_t c = 0; c < cm.k; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ys[i] = positives[i].count(c) ? 1 : 0;
      pos += ys[i];
    }
    if (pos == 0) {
      warn(diag, "cluster " + std::to_string(c) + " has no positive training question");
    }
    mm.clusters.push_back(train_logistic(xs, ys, featurizer.dim(), hp));
  }
  return mm;
}

inline std::vector<double> score_clusters(const MatcherModel& mm, const SparseVector& features) {
  std::vector<double> out;
  out.reserve(mm.k);
  for (const auto& c : mm.clusters) out.push_back(c.score(features));
  return out;
}

inline std::vector<double> score_clusters(const MatcherModel& mm,
                                          const QuestionFeaturizer& featurizer,
                                          const Question& q) {
  return score_clusters(mm, featurizer.featurize(q.text));
}

using ScoreTable = std::map<std::string, std::vector<double>>;

// Reads a score file. `expected_k` of 0 accepts whatever the header says.
inline ScoreTable read_score_file(const std::filesystem::path& path, std::size_t expected_k = 0) {
  const std::string where = path.filename().string();
  const std::string content = read_file(path);
  ScoreTable table;
  std::size_t k = 0;
  std::size_t line_no = 0;
  for (std::string_view line : split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string lno = where + ":" + std::to_string(line_no);
    if (k == 0) {
      if (trim(line).empty()) continue;
      long long parsed = 0;
      if (line.substr(0, 3) != "#k " || !parse_int(line.substr(3), parsed) || parsed <= 0) {
        throw DataError(lno + ": expected header '#k <k>'");
      }
      k = static_cast<std::size_t>(parsed);
      if (expected_k != 0 && k != expected_k) {
        throw DataError(lno + ": score file has k = " + std::to_string(k) + ", model has " +
                        std::to_string(expected_k));
      }
      continue;
    }
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != k + 1) {
      throw DataError(lno + ": expected " + std::to_string(k) + " scores, got " +
                      std::to_string(fields.size() - 1));
    }
    std::vector<double> scores;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v) || std::isnan(v)) {
        throw DataError(lno + ": invalid score in column " + std::to_string(j));
      }
      if (v < 0.0 || v > 1.0) throw DataError(lno + ": score outside [0, 1]");
      scores.push_back(v);
    }
    const std::string id(fields[0]);
    if (!table.emplace(id, std::move(scores)).second) {
      throw DataError(lno + ": duplicate question id " + id);
    }
  }
  if (k == 0) throw DataError(where + ": empty score file");
  return table;
}

inline std::string serialize_score_file(const ScoreTable& table, std::size_t k) {
  std::string out = "#k " + std::to_string(k) + "\n";
  for (const auto& [id, scores] : table) {
    out += id;
    for (const double s : scores) {
      out += '\t';
      out += format_double(s);
    }
    out += '\n';
  }
  return out;
}

// External matcher scores restricted to the questions of `dataset`.
inline ScoreTable import_external_scores(const std::filesystem::path& path,
                                         const QuestionDataset& dataset, std::size_t k,
                                         Diagnostics* diag = nullptr) {
  ScoreTable all = read_score_file(path, k);
  ScoreTable out;
  std::size_t unknown = 0;
  for (auto& [id, scores] : all) {
    if (dataset.find(id) == nullptr) {
      ++unknown;
      continue;
    }
    out.emplace(id, std::move(scores));
  }
  if (unknown > 0) {
    warn(diag, std::to_string(unknown) + " score row(s) for questions not in the dataset ignored");
  }
  return out;
}

}  // namespace xtypes
