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

#include <sys/wait.h>

#include <cstdlib>
#include <map>

#include "test_util.hpp"
#include "xtypes/fixtures.hpp"
#include "xtypes/pipeline.hpp"

namespace xtypes {
namespace {

using testing::ScratchDir;
namespace fs = std::filesystem;

// Every regular file under `root` (except the lock) with its SHA-256.
std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == ".lock") continue;
    out[fs::relative(e.path(), root).string()] = sha256_hex(read_file(e.path()));
  }
  return out;
}

PipelineConfig fixture_config(const fs::path& dir, const FixtureSpec& spec = {}) {
  const auto paths = write_fixture(generate_fixture(spec), dir / "data");
  PipelineConfig cfg;
  cfg.kg_dir = paths.kg_dir;
  cfg.train_path = paths.train;
  cfg.test_path = paths.test;
  cfg.artifacts_dir = dir / "artifacts";
  cfg.k = 8;
  return cfg;
}

TEST(Config, ParsesSectionsCommentsAndRelativePaths) {
  PipelineConfig cfg;
  cfg.parse(R"(
# comment
[paths]
kg = kg
train = "data/train.json"
artifacts = /abs/out

[pipeline]
repr = question_tfidf
k = 16
b = 2
metric = mrr
mode = type_only
sweep_ks = 4, 8 ,16

; another comment
[matcher]
epochs = 5
lr = 0.5

[fusion]
max_negatives = 7
)",
            "/base");
  EXPECT_EQ(cfg.kg_dir, fs::path("/base/kg"));
  EXPECT_EQ(cfg.train_path, fs::path("/base/data/train.json"));
  EXPECT_EQ(cfg.artifacts_dir, fs::path("/abs/out"));
  EXPECT_EQ(cfg.repr, ReprKind::kQuestionTfidf);
  EXPECT_EQ(cfg.k, 16u);
  EXPECT_EQ(cfg.b, 2u);
  EXPECT_EQ(cfg.metric, EvalMetric::kMrr);
  EXPECT_EQ(cfg.mode, EvalMode::kTypeOnly);
  EXPECT_EQ(cfg.sweep_ks, (std::vector<std::size_t>{4, 8, 16}));
  EXPECT_EQ(cfg.matcher_hp.epochs, 5u);
  EXPECT_EQ(cfg.matcher_hp.lr, 0.5);
  EXPECT_EQ(cfg.fusion.max_negatives_per_question, 7u);
}

TEST(Config, ErrorsNameTheLine) {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    PipelineConfig cfg;
    try {
      cfg.parse(text);
      ADD_FAILURE() << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("[pipeline]\nk = 8\nwhat = 1\n", "config:3");
  expect_error("[nope]\nk = 1\n", "unknown section");
  expect_error("k = 1\n", "outside of a section");
  expect_error("[pipeline]\nk = -3\n", "config:2");
  expect_error("[pipeline]\nrepr = bert\n", "unknown representation");
  expect_error("[pipeline\n", "malformed section");
  expect_error("[pipeline]\nk\n", "key = value");
}

TEST(Config, ValidateChecksRangesAndPaths) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.k = 4;
  cfg.train_path = "/does/not/exist.json";
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(PipelineConfig::load("/does/not/exist.conf"), ConfigError);
  // The echo carries no paths.
  EXPECT_EQ(cfg.echo().dump().find("/does/not"), std::string::npos);
}

TEST(Pipeline, RunThenRerunIsCached) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  Diagnostics diag;
  const auto first = cmd_run(cfg, &diag);
  ASSERT_EQ(first.stages.size(), 6u);
  for (const auto& [name, s] : first.stages) EXPECT_EQ(s, StageStatus::kRan) << name;
  EXPECT_NE(first.report_text.find("category accuracy"), std::string::npos);
  EXPECT_FALSE(fs::exists(cfg.artifacts_dir / ".lock"));

  const auto second = cmd_run(cfg, &diag);
  for (const auto& [name, s] : second.stages) EXPECT_EQ(s, StageStatus::kCached) << name;
  EXPECT_EQ(first.report, second.report);

  // Changing k reruns clustering and everything after it.
  cfg.k = 6;
  const auto third = cmd_run(cfg, &diag);
  std::map<std::string, StageStatus> st(third.stages.begin(), third.stages.end());
  EXPECT_EQ(st["ingest"], StageStatus::kCached);
  EXPECT_EQ(st["build-repr"], StageStatus::kCached);
  for (const char* s : {"cluster", "train", "predict", "evaluate"}) EXPECT_EQ(st[s], StageStatus::kRan) << s;

  // A deleted output forces its stage to run again.
  fs::remove(cfg.artifacts_dir / "predict" / "type_only.json");
  const auto fourth = cmd_run(cfg, &diag);
  std::map<std::string, StageStatus> st4(fourth.stages.begin(), fourth.stages.end());
  EXPECT_EQ(st4["predict"], StageStatus::kRan);
  EXPECT_EQ(st4["evaluate"], StageStatus::kCached);  // same prediction content
}

TEST(Pipeline, SeparateStagesMatchRun) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  Diagnostics diag;
  for (const auto* name : kStageNames) EXPECT_EQ(cmd_stage(cfg, name, &diag), StageStatus::kRan) << name;
  const auto by_stage = tree_hashes(cfg.artifacts_dir);
  const auto r = cmd_run(cfg, &diag);
  for (const auto& [name, s] : r.stages) EXPECT_EQ(s, StageStatus::kCached) << name;
  EXPECT_THROW(cmd_stage(cfg, "bogus", &diag), ConfigError);
  EXPECT_FALSE(by_stage.empty());
}

TEST(Pipeline, TwoDirectoriesHashIdentical) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  Diagnostics diag;
  cmd_run(cfg, &diag);
  auto other = cfg;
  other.artifacts_dir = dir / "artifacts2";
  cmd_run(other, &diag);
  const auto a = tree_hashes(cfg.artifacts_dir);
  EXPECT_EQ(a, tree_hashes(other.artifacts_dir));
  EXPECT_TRUE(a.count("model/pipeline.json"));
  EXPECT_TRUE(a.count("cluster/question_clusters.tsv"));
}

TEST(Pipeline, LockedDirectoryIsRefused) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  fs::create_directories(cfg.artifacts_dir);
  write_file(cfg.artifacts_dir / ".lock", "");
  EXPECT_THROW(cmd_run(cfg), ConfigError);
  fs::remove(cfg.artifacts_dir / ".lock");
  {
    ArtifactLock held(cfg.artifacts_dir);
    EXPECT_THROW(ArtifactLock again(cfg.artifacts_dir), ConfigError);
  }
  EXPECT_NO_THROW(ArtifactLock again(cfg.artifacts_dir));
}

TEST(Pipeline, StageFailureNamesTheStage) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  write_file(cfg.train_path, "[{broken");
  try {
    cmd_run(cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("stage ingest"), std::string::npos) << e.what();
  }
  // Nothing stamped for the failed stage.
  EXPECT_FALSE(fs::exists(cfg.artifacts_dir / "ingest" / "stamp"));
}

TEST(Pipeline, ClusterLabelFileCoversTrainingQuestions) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  Diagnostics quiet;
  cmd_run(cfg, &quiet);
  const auto cm = ClusterModel::from_json(nlohmann::json::parse(read_file(cfg.artifacts_dir / "cluster" / "model.json")));
  const auto subset = load_smart_json(cfg.artifacts_dir / "repr" / "type_training.json");
  const auto text = read_file(cfg.artifacts_dir / "cluster" / "question_clusters.tsv");
  const auto lines = split(text, '\n');
  EXPECT_EQ(lines[0], "#k " + std::to_string(cm.k));
  std::size_t rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    ASSERT_EQ(f.size(), 2u);
    const Question* q = subset.find(f[0]);
    ASSERT_NE(q, nullptr);
    std::set<std::size_t> want;
    for (const auto& t : q->gold_types) want.insert(cm.cluster_of(t));
    std::set<std::size_t> got;
    for (auto c : split(f[1], ',')) got.insert(std::stoul(std::string(c)));
    EXPECT_EQ(got, want);
    ++rows;
  }
  EXPECT_EQ(rows, subset.size());
}

TEST(Pipeline, JaccardCoClustersSiblingsWithIdenticalEntities) {
  ScratchDir dir;
  FixtureSpec spec;
  spec.sibling_overlap = 1.0;
  spec.assert_ancestor_types = false;
  auto cfg = fixture_config(dir.path(), spec);
  cfg.k = 64;  // capped at the number of distinct rows
  Diagnostics diag;
  cmd_run(cfg, &diag);
  const auto cm = ClusterModel::from_json(nlohmann::json::parse(read_file(cfg.artifacts_dir / "cluster" / "model.json")));
  const auto fx = generate_fixture(spec);
  std::size_t checked = 0;
  for (const auto& g : fx.sibling_groups) {
    for (const auto& t : g) {
      if (!cm.assignment.count(t) || !cm.assignment.count(g[0])) continue;
      EXPECT_EQ(cm.cluster_of(t), cm.cluster_of(g[0])) << t;
      ++checked;
    }
  }
  EXPECT_GT(checked, 10u);
  EXPECT_LT(cm.k, 27u);
}

TEST(Pipeline, DescriptionEmbeddingFlow) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  cfg.repr = ReprKind::kDescriptionEmbedding;
  try {
    cmd_run(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("descriptions.tsv"), std::string::npos) << e.what();
  }
  // Stand-in encoder: a one-hot row per root-level word of the document.
  const auto docs = read_file(cfg.artifacts_dir / "repr" / "descriptions.tsv");
  std::string emb = "#dims 4 kind description_embedding\n";
  std::size_t rows = 0;
  for (auto line : split(docs, '\n')) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    ASSERT_NE(tab, std::string_view::npos);
    const std::size_t h = std::hash<std::string_view>{}(line.substr(tab + 1)) % 4;
    emb += std::string(line.substr(0, tab));
    for (std::size_t j = 0; j < 4; ++j) emb += j == h ? "\t1" : "\t0.1";
    emb += "\n";
    ++rows;
  }
  EXPECT_EQ(rows, 27u);
  write_file(dir / "emb.tsv", emb);
  cfg.embeddings_path = dir / "emb.tsv";
  Diagnostics diag;
  const auto r = cmd_run(cfg, &diag);
  const auto summary = nlohmann::json::parse(read_file(cfg.artifacts_dir / "repr" / "summary.json"));
  EXPECT_EQ(summary["kind"], "description_embedding");
  EXPECT_TRUE(summary["imputed"].empty());
  EXPECT_EQ(r.report["method"], "description_embedding");
}

// External scores equal to the built-in matcher's leave the artifacts of
// predict unchanged.
TEST(Pipeline, ExternalScoresEqualToBuiltInGiveIdenticalPredictions) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  Diagnostics quiet;
  cmd_run(cfg, &quiet);
  const auto pm = PipelineModel::from_json(nlohmann::json::parse(read_file(cfg.artifacts_dir / "model" / "pipeline.json")));
  ScoreTable table;
  for (const fs::path& p : {cfg.test_path, cfg.artifacts_dir / "ingest" / "validation.json"}) {
    const auto ds = load_smart_json(p);
    for (const auto& q : ds.questions()) table[q.id] = score_clusters(pm.matcher, pm.featurizer, q);
  }
  write_file(dir / "scores.tsv", serialize_score_file(table, pm.clusters.k));
  auto ext = cfg;
  ext.artifacts_dir = dir / "ext";
  ext.external_scores_path = dir / "scores.tsv";
  Diagnostics diag;
  cmd_run(ext, &diag);
  for (const char* f : {"predict/end_to_end.json", "predict/type_only.json"}) {
    EXPECT_EQ(read_file(cfg.artifacts_dir / f), read_file(ext.artifacts_dir / f)) << f;
  }
}

TEST(Sweep, TwoRowsWinnerMarkedDeterministic) {
  ScratchDir dir;
  auto cfg = fixture_config(dir.path());
  Diagnostics diag;
  const auto a = cmd_sweep(cfg, {64, 32}, &diag);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows[0].k, 32u);
  EXPECT_EQ(a.rows[1].k, 64u);
  EXPECT_LE(a.rows[0].effective_k, 27u);
  const auto table = a.table();
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  std::size_t marks = 0;
  for (std::size_t pos = table.find("<- best"); pos != std::string::npos; pos = table.find("<- best", pos + 1)) ++marks;
  EXPECT_EQ(marks, 1u);
  // Ties go to the smaller k.
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (i < a.winner) {
      EXPECT_LT(a.rows[i].metric, a.rows[a.winner].metric);
    } else {
      EXPECT_LE(a.rows[i].metric, a.rows[a.winner].metric);
    }
  }
  auto again = cfg;
  again.artifacts_dir = dir / "again";
  const auto b = cmd_sweep(again, {32, 64}, &diag);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_TRUE(fs::exists(cfg.artifacts_dir / "sweep" / "report.txt"));
}

// ------------------------------------------------------------ CLI

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(XTYPES_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  ScratchDir dir;
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("", log), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.conf").string(), log), 2);
  EXPECT_EQ(run_cli("generate-fixture --out " + (dir / "fx").string(), log), 0) << read_file(log);
  const std::string conf = (dir / "fx" / "xtypes.conf").string();
  EXPECT_EQ(run_cli("run --config " + conf + " --k 0", log), 2);
  EXPECT_EQ(run_cli("run --config " + conf + " --repr nonsense", log), 2);
  EXPECT_EQ(run_cli("run --config " + conf, log), 0) << read_file(log);
  EXPECT_NE(read_file(log).find("stage ingest: ran"), std::string::npos);
  EXPECT_EQ(run_cli("run --config " + conf, log), 0);
  EXPECT_NE(read_file(log).find("stage evaluate: cached"), std::string::npos);
  // Flags win over the config file.
  EXPECT_EQ(run_cli("cluster --config " + conf + " --k 5", log), 0);
  const auto cm = nlohmann::json::parse(read_file(dir / "fx" / "artifacts" / "cluster" / "model.json"));
  EXPECT_EQ(cm["k"], 5);

  // Data error: broken test file.
  write_file(dir / "fx" / "bad.json", "not json");
  EXPECT_EQ(run_cli("run --config " + conf + " --test " + (dir / "fx" / "bad.json").string(), log), 3);
  EXPECT_NE(read_file(log).find("data error"), std::string::npos);

  // Stage failure: a stage directory that is a plain file.
  fs::create_directories(dir / "blocked");
  write_file(dir / "blocked" / "ingest", "");
  EXPECT_EQ(run_cli("run --config " + conf + " --artifacts " + (dir / "blocked").string(), log), 4) << read_file(log);
}

TEST(Cli, StandaloneEvaluateAndConvert) {
  ScratchDir dir;
  const auto log = dir / "log.txt";
  ASSERT_EQ(run_cli("generate-fixture --out " + (dir / "fx").string() + " --types 9 --depth 2", log), 0);
  const auto fx = dir / "fx";
  ASSERT_EQ(run_cli("evaluate --kg " + (fx / "kg").string() + " --predictions " + (fx / "manifest.json").string() +
                        " --gold " + (fx / "test.json").string() + " --mode end_to_end --out " +
                        (dir / "r.json").string(),
                    log),
            0)
      << read_file(log);
  const auto r = nlohmann::json::parse(read_file(dir / "r.json"));
  EXPECT_EQ(r["means"]["ndcg@3"], 1.0);

  write_file(dir / "a.nt",
             "<http://dbpedia.org/ontology/A> <http://www.w3.org/2000/01/rdf-schema#subClassOf> "
             "<http://dbpedia.org/ontology/B> .\n");
  ASSERT_EQ(run_cli("convert-nt --in " + (dir / "a.nt").string() + " --out " + (dir / "kg").string(), log), 0);
  EXPECT_EQ(read_file(dir / "kg" / kHierarchyFile), "dbo:A\tdbo:B\n");
}

}  // namespace
}  // namespace xtypes
