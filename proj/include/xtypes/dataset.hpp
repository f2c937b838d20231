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

// SMART-format question datasets.
//
// The release files are JSON arrays of
//   {"id": ..., "question": str|null, "category": str, "type": [str]}
// where literal answers are written either as category "literal" with the
// subtype in "type" (the official release) or directly as category
// "number" / "string" / "date". Both spellings load to the same Question.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"
#include "xtypes/kg_store.hpp"

namespace xtypes {

enum class CoarseCategory { kBoolean = 0, kNumber, kString, kDate, kResource };

inline constexpr std::array<CoarseCategory, 5> kAllCategories = {
    CoarseCategory::kBoolean, CoarseCategory::kNumber, CoarseCategory::kString,
    CoarseCategory::kDate, CoarseCategory::kResource};

inline std::string_view to_string(CoarseCategory c) {
  switch (c) {
    case CoarseCategory::kBoolean: return "boolean";
    case CoarseCategory::kNumber: return "number";
    case CoarseCategory::kString: return "string";
    case CoarseCategory::kDate: return "date";
    case CoarseCategory::kResource: return "resource";
  }
  return "resource";
}

inline std::optional<CoarseCategory> parse_category(std::string_view s) {
  for (const auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

inline bool is_literal(CoarseCategory c) {
  return c == CoarseCategory::kNumber || c == CoarseCategory::kString ||
         c == CoarseCategory::kDate;
}

struct Question {
  std::string id;
  std::string text;
  std::optional<CoarseCategory> category;  // absent for unlabeled input
  std::vector<std::string> gold_types;     // specific -> generic

  bool is_resource() const { return category == CoarseCategory::kResource; }

  friend bool operator==(const Question&, const Question&) = default;
};

class QuestionDataset {
 public:
  QuestionDataset() = default;

  explicit QuestionDataset(std::vector<Question> questions) : questions_(std::move(questions)) {
    for (std::size_t i = 0; i < questions_.size(); ++i) {
      const auto& q = questions_[i];
      if (!by_id_.emplace(q.id, i).second) throw DataError("duplicate question id: " + q.id);
      vocabulary_.insert(q.gold_types.begin(), q.gold_types.end());
    }
  }

  const std::vector<Question>& questions() const { return questions_; }
  std::size_t size() const { return questions_.size(); }
  bool empty() const { return questions_.empty(); }

  // T': every type observed in some gold list, in lexicographic order.
  const std::set<std::string>& type_vocabulary() const { return vocabulary_; }

  std::vector<std::string> type_vocabulary_list() const {
    return {vocabulary_.begin(), vocabulary_.end()};
  }

  const Question* find(std::string_view id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &questions_[it->second];
  }

  std::size_t count(CoarseCategory c) const {
    return static_cast<std::size_t>(std::count_if(
        questions_.begin(), questions_.end(), [c](const Question& q) { return q.category == c; }));
  }

  friend bool operator==(const QuestionDataset& a, const QuestionDataset& b) {
    return a.questions_ == b.questions_;
  }

 private:
  std::vector<Question> questions_;
  std::set<std::string> vocabulary_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

namespace detail {

inline std::string json_id(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  return {};
}

}  // namespace detail

struct LoadStats {
  std::size_t records = 0;
  std::size_t dropped_empty_text = 0;
};

inline QuestionDataset parse_smart_json(const nlohmann::json& doc, LoadStats* stats = nullptr,
                                        Diagnostics* diag = nullptr) {
  if (!doc.is_array()) throw DataError("SMART dataset must be a JSON array");
  LoadStats local;
  std::vector<Question> out;
  out.reserve(doc.size());
  for (const auto& rec : doc) {
    ++local.records;
    if (!rec.is_object()) throw DataError("SMART record " + std::to_string(local.records) +
                                          " is not an object");
    Question q;
    q.id = rec.contains("id") ? detail::json_id(rec["id"]) : std::string();
    if (q.id.empty()) {
      throw DataError("SMART record " + std::to_string(local.records) + " has no id");
    }
    const auto qit = rec.find("question");
    if (qit == rec.end() || !qit->is_string() || trim(qit->get_ref<const std::string&>()).empty()) {
      ++local.dropped_empty_text;
      continue;
    }
    q.text = std::string(trim(qit->get_ref<const std::string&>()));

    std::vector<std::string> types;
    if (auto tit = rec.find("type"); tit != rec.end() && tit->is_array()) {
      for (const auto& t : *tit) {
        if (t.is_string() && !t.get_ref<const std::string&>().empty()) {
          types.push_back(t.get<std::string>());
        }
      }
    }

    if (auto cit = rec.find("category"); cit != rec.end() && !cit->is_null()) {
      if (!cit->is_string()) throw DataError("record " + q.id + ": category is not a string");
      const auto& name = cit->get_ref<const std::string&>();
      if (name == "literal") {
        // Official release: the literal subtype is carried in "type".
        std::optional<CoarseCategory> sub;
        if (!types.empty()) sub = parse_category(types.front());
        if (!sub || !is_literal(*sub)) {
          throw DataError("record " + q.id + ": literal category without number/string/date type");
        }
        q.category = sub;
      } else {
        q.category = parse_category(name);
        if (!q.category) throw DataError("record " + q.id + ": unknown category '" + name + "'");
      }
      if (*q.category == CoarseCategory::kResource) {
        std::set<std::string> seen;
        for (auto& t : types) {
          if (seen.insert(t).second) q.gold_types.push_back(std::move(t));
        }
      }
      // Non-resource type lists only echo the category and are dropped.
    }
    out.push_back(std::move(q));
  }
  if (local.dropped_empty_text > 0) {
    warn(diag, "dropped " + std::to_string(local.dropped_empty_text) +
                   " record(s) with null or empty question text");
  }
  if (stats != nullptr) *stats = local;
  return QuestionDataset(std::move(out));
}

inline QuestionDataset load_smart_json(const std::filesystem::path& path,
                                       LoadStats* stats = nullptr, Diagnostics* diag = nullptr) {
  const std::string content = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  try {
    return parse_smart_json(doc, stats, diag);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Serializes one labelled answer in the official release spelling.
inline nlohmann::json smart_record(const std::string& id, const std::string* text,
                                   std::optional<CoarseCategory> category,
                                   const std::vector<std::string>& types) {
  nlohmann::json rec;
  rec["id"] = id;
  if (text != nullptr) rec["question"] = *text;
  if (category) {
    if (*category == CoarseCategory::kResource) {
      rec["category"] = "resource";
      rec["type"] = types;
    } else if (*category == CoarseCategory::kBoolean) {
      rec["category"] = "boolean";
      rec["type"] = nlohmann::json::array({"boolean"});
    } else {
      rec["category"] = "literal";
      rec["type"] = nlohmann::json::array({std::string(to_string(*category))});
    }
  }
  return rec;
}

inline nlohmann::json to_smart_json(const QuestionDataset& ds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& q : ds.questions()) {
    arr.push_back(smart_record(q.id, &q.text, q.category, q.gold_types));
  }
  return arr;
}

inline void save_smart_json(const std::filesystem::path& path, const QuestionDataset& ds) {
  write_file(path, to_smart_json(ds).dump(1) + "\n");
}

// Stratified (by category) deterministic split. `ratio` is the fraction
// that goes to the first (training) part.
inline std::pair<QuestionDataset, QuestionDataset> split_train_validation(
    const QuestionDataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split ratio must lie in (0, 1)");
  if (ds.size() < 5) throw ParameterError("dataset too small to split (need >= 5 questions)");

  // Stratum key: category index, unlabeled last.
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& c = ds.questions()[i].category;
    strata[c ? static_cast<int>(*c) : 99].push_back(i);
  }

  struct Alloc {
    double ideal;
    std::size_t lo, hi, take;
  };
  std::vector<Alloc> alloc;
  std::size_t assigned = 0;
  for (const auto& [key, members] : strata) {
    const std::size_t n = members.size();
    Alloc a;
    a.ideal = ratio * static_cast<double>(n);
    a.lo = n >= 2 ? 1 : n;
    a.hi = n >= 2 ? n - 1 : n;
    a.take = std::clamp(static_cast<std::size_t>(std::floor(a.ideal)), a.lo, a.hi);
    assigned += a.take;
    alloc.push_back(a);
  }
  const auto target =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size())));
  // Largest-remainder adjustment towards the global target.
  while (assigned < target) {
    std::size_t best = alloc.size();
    for (std::size_t s = 0; s < alloc.size(); ++s) {
      if (alloc[s].take >= alloc[s].hi) continue;
      if (best == alloc.size() ||
          alloc[s].ideal - alloc[s].take > alloc[best].ideal - alloc[best].take) {
        best = s;
      }
    }
    if (best == alloc.size()) break;
    ++alloc[best].take;
    ++assigned;
  }
  while (assigned > target) {
    std::size_t best = alloc.size();
    for (std::size_t s = 0; s < alloc.size(); ++s) {
      if (alloc[s].take <= alloc[s].lo) continue;
      if (best == alloc.size() ||
          alloc[s].ideal - alloc[s].take < alloc[best].ideal - alloc[best].take) {
        best = s;
      }
    }
    if (best == alloc.size()) break;
    --alloc[best].take;
    --assigned;
  }

  Rng rng(seed);
  std::vector<bool> in_train(ds.size(), false);
  std::size_t s = 0;
  for (auto& [key, members] : strata) {
    auto shuffled = members;
    rng.shuffle(shuffled);
    for (std::size_t i = 0; i < alloc[s].take; ++i) in_train[shuffled[i]] = true;
    ++s;
  }
  std::vector<Question> train, val;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (in_train[i] ? train : val).push_back(ds.questions()[i]);
  }
  return {QuestionDataset(std::move(train)), QuestionDataset(std::move(val))};
}

// Types of T' missing from the KG type system, sorted.
inline std::vector<std::string> types_outside_kg(const QuestionDataset& ds, const TypeSystem& ts) {
  std::vector<std::string> out;
  for (const auto& t : ds.type_vocabulary()) {
    if (!ts.contains(t)) out.push_back(t);
  }
  return out;
}

// Resource questions usable for cluster matching / label ranking: at least
// one gold type, and (when a KG is given) at least one gold type in the KG.
inline QuestionDataset type_training_subset(const QuestionDataset& ds, const TypeSystem* ts,
                                            std::size_t* excluded = nullptr) {
  std::vector<Question> keep;
  std::size_t dropped = 0;
  for (const auto& q : ds.questions()) {
    if (!q.is_resource() || q.gold_types.empty()) continue;
    if (ts != nullptr && std::none_of(q.gold_types.begin(), q.gold_types.end(),
                                      [&](const std::string& t) { return ts->contains(t); })) {
      ++dropped;
      continue;
    }
    keep.push_back(q);
  }
  if (excluded != nullptr) *excluded = dropped;
  return QuestionDataset(std::move(keep));
}

}  // namespace xtypes
