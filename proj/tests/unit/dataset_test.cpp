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

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "test_util.hpp"
#include "xtypes/dataset.hpp"

namespace xtypes {
namespace {

using nlohmann::json;

TEST(SmartJson, ResourceRecord) {
  const auto ds = parse_smart_json(json::parse(
      R"([{"id":"q1","question":"Who is it?","category":"resource","type":["dbo:Person"]}])"));
  ASSERT_EQ(ds.size(), 1u);
  const auto& q = ds.questions()[0];
  EXPECT_EQ(q.id, "q1");
  EXPECT_EQ(q.category, CoarseCategory::kResource);
  EXPECT_EQ(q.gold_types, std::vector<std::string>{"dbo:Person"});
}

TEST(SmartJson, BooleanTypesAreCleared) {
  const auto ds = parse_smart_json(
      json::parse(R"([{"id":"q2","question":"Is it?","category":"boolean","type":["boolean"]}])"));
  const auto& q = ds.questions()[0];
  EXPECT_EQ(q.category, CoarseCategory::kBoolean);
  EXPECT_TRUE(q.gold_types.empty());
}

TEST(SmartJson, LiteralSubtypeAndNumericIds) {
  const auto ds = parse_smart_json(json::parse(
      R"([{"id":7,"question":"How many?","category":"literal","type":["number"]},
          {"id":"d","question":"When?","category":"date","type":["date"]}])"));
  EXPECT_EQ(ds.questions()[0].id, "7");
  EXPECT_EQ(ds.questions()[0].category, CoarseCategory::kNumber);
  EXPECT_EQ(ds.questions()[1].category, CoarseCategory::kDate);
  EXPECT_THROW(parse_smart_json(json::parse(R"([{"id":1,"question":"x","category":"literal","type":[]}])")),
               DataError);
  EXPECT_THROW(parse_smart_json(json::parse(R"([{"id":1,"question":"x","category":"weird"}])")), DataError);
}

TEST(SmartJson, DuplicateIdsAreFatal) {
  EXPECT_THROW(parse_smart_json(json::parse(R"([{"id":"a","question":"x"},{"id":"a","question":"y"}])")),
               DataError);
}

TEST(SmartJson, DuplicateGoldTypesCollapseInOrder) {
  const auto ds = parse_smart_json(
      json::parse(R"([{"id":"a","question":"x","category":"resource","type":["B","A","B"]}])"));
  EXPECT_EQ(ds.questions()[0].gold_types, (std::vector<std::string>{"B", "A"}));
}

// Null / missing texts are dropped; the oracle walks the raw JSON itself.
TEST(SmartJson, NullQuestionsDroppedCountMatchesIndependentWalk) {
  std::mt19937_64 gen(3);
  json doc = json::array();
  for (int i = 0; i < 300; ++i) {
    json rec = {{"id", "q" + std::to_string(i)}, {"category", "resource"}, {"type", {"dbo:T" + std::to_string(i % 7)}}};
    switch (gen() % 5) {
      case 0: rec["question"] = nullptr; break;
      case 1: break;  // missing
      case 2: rec["question"] = "   "; break;
      default: rec["question"] = "which thing " + std::to_string(i);
    }
    doc.push_back(rec);
  }
  std::size_t with_text = 0;
  for (const auto& rec : doc) {
    if (rec.contains("question") && rec["question"].is_string()) {
      const auto& s = rec["question"].get_ref<const std::string&>();
      if (s.find_first_not_of(' ') != std::string::npos) ++with_text;
    }
  }
  Diagnostics diag;
  LoadStats stats;
  const auto ds = parse_smart_json(doc, &stats, &diag);
  EXPECT_EQ(ds.size(), with_text);
  EXPECT_EQ(stats.records, 300u);
  EXPECT_EQ(stats.dropped_empty_text, 300u - with_text);
  EXPECT_EQ(diag.count(), 1u);
}

TEST(SmartJson, RoundTrip) {
  const auto ds = parse_smart_json(json::parse(R"([
    {"id":"1","question":"Who?","category":"resource","type":["A","B"]},
    {"id":"2","question":"Is?","category":"boolean","type":["boolean"]},
    {"id":"3","question":"Name?","category":"literal","type":["string"]},
    {"id":"4","question":"Unlabeled?"}])"));
  testing::ScratchDir dir;
  save_smart_json(dir / "x.json", ds);
  const auto back = load_smart_json(dir / "x.json");
  EXPECT_TRUE(back == ds);
  EXPECT_EQ(to_smart_json(back)[2]["category"], "literal");
}

TEST(SmartJson, MalformedFileNamesPath) {
  testing::ScratchDir dir;
  write_file(dir / "bad.json", "[{");
  try {
    load_smart_json(dir / "bad.json");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
  }
}

QuestionDataset mixed(std::size_t resource, std::size_t boolean) {
  std::vector<Question> qs;
  for (std::size_t i = 0; i < resource; ++i) {
    qs.push_back({"r" + std::to_string(i), "which r", CoarseCategory::kResource, {"T"}});
  }
  for (std::size_t i = 0; i < boolean; ++i) {
    qs.push_back({"b" + std::to_string(i), "is b", CoarseCategory::kBoolean, {}});
  }
  return QuestionDataset(std::move(qs));
}

TEST(Split, SmallStratifiedExample) {
  const auto [train, val] = split_train_validation(mixed(8, 2), 0.8, 1);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(val.size(), 2u);
  EXPECT_EQ(train.count(CoarseCategory::kBoolean), 1u);
  EXPECT_EQ(val.count(CoarseCategory::kBoolean), 1u);
}

TEST(Split, DeterministicAndDisjoint) {
  const auto ds = mixed(40, 13);
  const auto a = split_train_validation(ds, 0.7, 99);
  const auto b = split_train_validation(ds, 0.7, 99);
  EXPECT_TRUE(a.first == b.first);
  EXPECT_TRUE(a.second == b.second);
  std::set<std::string> ids;
  for (const auto* part : {&a.first, &a.second}) {
    for (const auto& q : part->questions()) EXPECT_TRUE(ids.insert(q.id).second);
  }
  EXPECT_EQ(ids.size(), ds.size());
  const auto c = split_train_validation(ds, 0.7, 100);
  EXPECT_FALSE(a.first == c.first);
}

TEST(Split, ThousandQuestionsPerStratumSizes) {
  std::mt19937_64 gen(8);
  std::vector<Question> qs;
  std::map<CoarseCategory, std::size_t> stratum;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto c = kAllCategories[gen() % 5];
    ++stratum[c];
    qs.push_back({"q" + std::to_string(i), "text", c, c == CoarseCategory::kResource ? std::vector<std::string>{"T"} : std::vector<std::string>{}});
  }
  const auto [train, val] = split_train_validation(QuestionDataset(qs), 0.9, 4);
  EXPECT_EQ(train.size(), 900u);
  EXPECT_EQ(val.size(), 100u);
  for (const auto& [c, n] : stratum) {
    const double ideal = 0.9 * static_cast<double>(n);
    EXPECT_LE(std::fabs(static_cast<double>(train.count(c)) - ideal), 1.0) << to_string(c);
    EXPECT_EQ(train.count(c) + val.count(c), n);
  }
}

TEST(Split, RejectsBadParameters) {
  EXPECT_THROW(split_train_validation(mixed(3, 1), 0.8, 1), ParameterError);
  EXPECT_THROW(split_train_validation(mixed(8, 2), 1.0, 1), ParameterError);
  EXPECT_THROW(split_train_validation(mixed(8, 2), 0.0, 1), ParameterError);
}

TEST(Vocabulary, TypesOutsideKgAreReportedAndKept) {
  TypeSystem ts;
  ts.add_parent("A", "B");
  ts.finalize();
  const QuestionDataset ds({{"1", "x", CoarseCategory::kResource, {"A", "Z"}},
                            {"2", "y", CoarseCategory::kResource, {"Y"}},
                            {"3", "z", CoarseCategory::kBoolean, {}}});
  EXPECT_EQ(types_outside_kg(ds, ts), (std::vector<std::string>{"Y", "Z"}));
  std::size_t excluded = 0;
  const auto sub = type_training_subset(ds, &ts, &excluded);
  EXPECT_EQ(sub.size(), 1u);
  EXPECT_EQ(excluded, 1u);
  // Z stays in the label space of the kept question.
  EXPECT_TRUE(sub.type_vocabulary().count("Z"));
}

}  // namespace
}  // namespace xtypes
