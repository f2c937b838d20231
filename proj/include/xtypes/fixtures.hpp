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

// Synthetic KGs and question sets with known answers.
//
// Types form a forest whose level sizes grow geometrically. Every type owns
// a unique marker keyword that appears in all of its questions, so type
// membership is linearly separable from question text. Literal and boolean
// questions use category-specific cue words. Entities are typed with their
// type and (optionally) its ancestors; siblings can be forced to share a
// fraction of their entities.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/kg_store.hpp"

namespace xtypes {

struct FixtureSpec {
  std::size_t type_count = 27;
  std::size_t depth = 3;
  std::size_t entities_per_type = 10;
  double sibling_overlap = 0.0;
  std::size_t questions_per_type = 20;
  std::size_t test_questions_per_type = 5;
  std::size_t literal_questions_per_category = 20;
  std::size_t test_literal_questions_per_category = 5;
  std::vector<std::string> keywords;  // one marker per type; generated when empty
  bool assert_ancestor_types = true;
  std::string prefix = "fx:";
  std::uint64_t seed = 1;

  void validate() const {
    if (type_count == 0 || depth == 0 || entities_per_type == 0 || questions_per_type == 0) {
      throw ParameterError("fixture counts must be positive");
    }
    if (depth > type_count) throw ParameterError("fixture depth exceeds type count");
    if (!(sibling_overlap >= 0.0 && sibling_overlap <= 1.0)) {
      throw ParameterError("sibling overlap must lie in [0, 1] (overlap entities exceed entities)");
    }
    if (!keywords.empty() && keywords.size() < type_count) {
      throw ParameterError("fewer keywords than types");
    }
  }
};

struct Fixture {
  KnowledgeGraph kg;
  QuestionDataset train;
  QuestionDataset test;
  std::vector<std::string> type_ids;                 // level order
  std::map<std::string, std::string> marker;         // type -> keyword
  std::map<std::string, std::string> parent;         // type -> parent (roots absent)
  std::vector<std::vector<std::string>> sibling_groups;

  // Intended optimal prediction per test question, in submission format.
  nlohmann::json manifest() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& q : test.questions()) arr.push_back(smart_record(q.id, nullptr, q.category, q.gold_types));
    return arr;
  }
};

namespace detail {

// Pronounceable pseudo-words that never collide with the template words.
inline std::string marker_word(std::size_t i) {
  static constexpr std::array<const char*, 12> kSyl = {"ka", "lo", "mi", "ru", "te", "zo",
                                                       "ne", "vi", "sa", "po", "gu", "fe"};
  std::string w = "q";
  std::size_t x = i;
  for (int d = 0; d < 3; ++d) {
    w += kSyl[x % kSyl.size()];
    x /= kSyl.size();
  }
  return w + std::to_string(i / 1728) + "x";
}

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& words) {
  return words[static_cast<std::size_t>(rng.below(N))];
}

}  // namespace detail

inline Fixture generate_fixture(const FixtureSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Fixture fx;

  // Level sizes proportional to 3^level, at least one type per level.
  std::vector<double> weight(spec.depth);
  double total = 0.0;
  for (std::size_t l = 0; l < spec.depth; ++l) total += weight[l] = std::pow(3.0, static_cast<double>(l));
  std::vector<std::size_t> level_size(spec.depth, 1);
  std::size_t assigned = spec.depth;
  std::vector<double> remainder(spec.depth);
  for (std::size_t l = 0; l < spec.depth; ++l) {
    const double ideal = static_cast<double>(spec.type_count) * weight[l] / total;
    const auto base = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ideal)));
    assigned += base - 1;
    level_size[l] = base;
    remainder[l] = ideal - static_cast<double>(base);
  }
  while (assigned < spec.type_count) {
    const auto l = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++level_size[l];
    remainder[l] -= 1.0;
    ++assigned;
  }
  while (assigned > spec.type_count) {
    // Shrink the deepest level that can give one up.
    for (std::size_t l = spec.depth; l-- > 0;) {
      if (level_size[l] > 1) {
        --level_size[l];
        --assigned;
        break;
      }
    }
  }

  auto& ts = fx.kg.types;
  std::vector<std::vector<std::string>> levels(spec.depth);
  std::size_t next_id = 0;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    for (std::size_t i = 0; i < level_size[l]; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "T%03zu", next_id);
      const std::string id = spec.prefix + buf;
      const std::string kw = spec.keywords.empty() ? detail::marker_word(next_id) : spec.keywords[next_id];
      ++next_id;
      ts.add_type(id);
      fx.type_ids.push_back(id);
      fx.marker[id] = kw;
      levels[l].push_back(id);
      if (l > 0) {
        const std::string& p = levels[l - 1][i % levels[l - 1].size()];
        ts.add_parent(id, p);
        fx.parent[id] = p;
      }
    }
  }
  for (const auto& id : fx.type_ids) {
    std::string label = fx.marker[id];
    label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
    ts.set_label(id, label);
    auto pit = fx.parent.find(id);
    ts.set_description(id, pit == fx.parent.end()
                               ? "a " + fx.marker[id] + " is a top level kind of thing"
                               : "a " + fx.marker[id] + " is a kind of " + fx.marker[pit->second]);
  }
  ts.finalize();

  // Sibling groups in level order.
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& id : fx.type_ids) {
    if (auto pit = fx.parent.find(id); pit != fx.parent.end()) children[pit->second].push_back(id);
  }
  for (const auto& id : fx.type_ids) {
    if (auto cit = children.find(id); cit != children.end() && cit->second.size() > 1) {
      fx.sibling_groups.push_back(cit->second);
    }
  }
  std::map<std::string, std::string> anchor;  // sibling -> first sibling of its group
  for (const auto& g : fx.sibling_groups) {
    for (std::size_t i = 1; i < g.size(); ++i) anchor[g[i]] = g[0];
  }

  // Entities.
  const auto shared = static_cast<std::size_t>(
      std::llround(spec.sibling_overlap * static_cast<double>(spec.entities_per_type)));
  std::map<std::string, std::vector<std::string>> own;
  std::size_t next_entity = 0;
  auto& index = fx.kg.index;
  auto assert_type = [&](const std::string& e, const std::string& t) {
    index.add(e, t);
    if (!spec.assert_ancestor_types) return;
    for (auto pit = fx.parent.find(t); pit != fx.parent.end(); pit = fx.parent.find(pit->second)) {
      index.add(e, pit->second);
    }
  };
  for (const auto& t : fx.type_ids) {
    std::vector<std::string> ents;
    if (auto ait = anchor.find(t); ait != anchor.end()) {
      const auto& a = own[ait->second];
      ents.assign(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(std::min(shared, a.size())));
    }
    while (ents.size() < spec.entities_per_type) {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "E%05zu", next_entity++);
      const std::string e = spec.prefix + buf;
      index.set_description(e, "entity " + std::string(buf) + " is a notable " + fx.marker[t] +
                                   " with a long and varied record");
      ents.push_back(e);
    }
    for (const auto& e : ents) assert_type(e, t);
    own[t] = ents;
  }

  // Questions.
  static constexpr std::array<const char*, 6> kAdj = {"famous", "notable", "early", "modern", "small", "large"};
  static constexpr std::array<const char*, 5> kVerb = {"appeared in", "was founded in", "is located in",
                                                       "was born in", "is associated with"};
  static constexpr std::array<const char*, 5> kPlace = {"the city", "the region", "europe", "the old town",
                                                        "the valley"};
  auto resource_question = [&](const std::string& kw) {
    const std::string adj = detail::pick(rng, kAdj), verb = detail::pick(rng, kVerb),
                      place = detail::pick(rng, kPlace);
    switch (rng.below(4)) {
      case 0: return "Which " + adj + " " + kw + " " + verb + " " + place + "?";
      case 1: return "Who is the " + adj + " " + kw + " that " + verb + " " + place + "?";
      case 2: return "Name a " + kw + " that " + verb + " " + place + ".";
      default: return "List every " + adj + " " + kw + " " + verb + " " + place + ".";
    }
  };
  auto literal_question = [&](CoarseCategory c) -> std::string {
    const std::string place = detail::pick(rng, kPlace), adj = detail::pick(rng, kAdj);
    const bool alt = rng.below(2) == 0;
    switch (c) {
      case CoarseCategory::kBoolean:
        return alt ? "Is " + place + " " + adj + "?" : "Does " + place + " have a " + adj + " history?";
      case CoarseCategory::kNumber:
        return alt ? "How many bridges does " + place + " have?" : "How much population has " + place + "?";
      case CoarseCategory::kDate:
        return alt ? "When was " + place + " established?" : "In what year did " + place + " begin?";
      case CoarseCategory::kString:
        return alt ? "What is the motto of " + place + "?" : "What nickname is given to " + place + "?";
      default: return {};
    }
  };
  auto gold_chain = [&](const std::string& t) {
    std::vector<std::string> g{t};
    for (auto pit = fx.parent.find(t); pit != fx.parent.end(); pit = fx.parent.find(pit->second)) {
      g.push_back(pit->second);
    }
    return g;
  };

  auto build = [&](const char* tag, std::size_t per_type, std::size_t per_category) {
    std::vector<Question> qs;
    auto next_qid = [&] {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%05zu", tag, qs.size());
      return std::string(buf);
    };
    for (const auto& t : fx.type_ids) {
      for (std::size_t i = 0; i < per_type; ++i) {
        qs.push_back({next_qid(), resource_question(fx.marker[t]), CoarseCategory::kResource, gold_chain(t)});
      }
    }
    for (const auto c : {CoarseCategory::kBoolean, CoarseCategory::kNumber, CoarseCategory::kString,
                         CoarseCategory::kDate}) {
      for (std::size_t i = 0; i < per_category; ++i) qs.push_back({next_qid(), literal_question(c), c, {}});
    }
    return QuestionDataset(std::move(qs));
  };
  fx.train = build("train", spec.questions_per_type, spec.literal_questions_per_category);
  fx.test = build("test", spec.test_questions_per_type, spec.test_literal_questions_per_category);
  return fx;
}

struct FixturePaths {
  std::filesystem::path kg_dir, train, test, manifest;
};

inline FixturePaths write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
  FixturePaths p{dir / "kg", dir / "train.json", dir / "test.json", dir / "manifest.json"};
  write_kg_tables(p.kg_dir, fx.kg.types, fx.kg.index);
  save_smart_json(p.train, fx.train);
  save_smart_json(p.test, fx.test);
  write_file(p.manifest, fx.manifest().dump(1) + "\n");
  return p;
}

}  // namespace xtypes
