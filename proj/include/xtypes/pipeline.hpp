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

// Resumable batch pipeline over an artifact directory.
//
//   <artifacts>/ingest/    train.json validation.json summary.json
//   <artifacts>/repr/      type_matrix.tsv type_training.json summary.json
//                          [descriptions.tsv]
//   <artifacts>/cluster/   model.json question_clusters.tsv
//   <artifacts>/model/     pipeline.json
//   <artifacts>/predict/   end_to_end.json type_only.json
//   <artifacts>/evaluate/  report.json report.txt
//   <artifacts>/sweep/     k<k>/... report.json report.txt
//
// Every stage directory holds a `stamp` with the SHA-256 of the stage
// name, its parameters and the bytes of its inputs. A stage whose stamp
// matches and whose outputs exist is skipped. Artifacts never embed paths
// or clocks, so identical inputs give byte-identical directories.

#pragma once

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xtypes/category.hpp"
#include "xtypes/clustering.hpp"
#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/evaluate.hpp"
#include "xtypes/kg_store.hpp"
#include "xtypes/linear.hpp"
#include "xtypes/matcher.hpp"
#include "xtypes/ranker.hpp"
#include "xtypes/text.hpp"
#include "xtypes/type_repr.hpp"

namespace xtypes {

namespace fs = std::filesystem;

// Any failure inside a stage that is neither a config nor a data problem.
class StageError : public Error {
 public:
  using Error::Error;
};

inline std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

// ---------------------------------------------------------------- config

struct PipelineConfig {
  fs::path kg_dir;
  fs::path train_path;
  fs::path test_path;
  fs::path embeddings_path;
  fs::path external_scores_path;
  fs::path artifacts_dir = "artifacts";

  ReprKind repr = ReprKind::kJaccard;
  std::size_t k = 64;
  std::size_t b = 3;
  std::size_t k_out = 10;
  std::uint64_t seed = 42;  // split and K-Means
  double train_ratio = 0.8;
  EvalMetric metric = EvalMetric::kNdcg;
  EvalMode mode = EvalMode::kEndToEnd;
  std::vector<std::size_t> sweep_ks = {32, 64, 128, 256, 512};

  KMeansOptions kmeans;
  LinearHyperParams matcher_hp;
  LinearHyperParams ranker_hp;
  LinearHyperParams category_hp;
  FusionOptions fusion;
  std::size_t max_entities = kDefaultMaxEntities;
  std::size_t max_chars = kDefaultMaxChars;

  // Applies one `[section] key = value` setting. Relative paths resolve
  // against `base`.
  void set(std::string_view section, std::string_view key, std::string_view value,
           const fs::path& base = {}) {
    const std::string where = std::string(section) + "." + std::string(key);
    auto bad = [&](std::string_view why) {
      return ConfigError(where + ": " + std::string(why) + " '" + std::string(value) + "'");
    };
    auto as_size = [&]() {
      long long v = 0;
      if (!parse_int(value, v) || v < 0) throw bad("expected a non-negative integer, got");
      return static_cast<std::size_t>(v);
    };
    auto as_double = [&]() {
      double v = 0.0;
      if (!parse_double(value, v) || !std::isfinite(v)) throw bad("expected a number, got");
      return v;
    };
    auto as_path = [&]() {
      fs::path p{std::string(value)};
      return p.is_relative() && !base.empty() ? base / p : p;
    };
    auto hp_key = [&](LinearHyperParams& hp) {
      if (key == "epochs") hp.epochs = as_size();
      else if (key == "lr") hp.lr = as_double();
      else if (key == "l2") hp.l2 = as_double();
      else if (key == "batch_size") hp.batch_size = as_size();
      else if (key == "seed") hp.seed = as_size();
      else return false;
      return true;
    };

    if (section == "paths") {
      if (key == "kg") kg_dir = as_path();
      else if (key == "train") train_path = as_path();
      else if (key == "test") test_path = as_path();
      else if (key == "embeddings") embeddings_path = as_path();
      else if (key == "external_scores") external_scores_path = as_path();
      else if (key == "artifacts") artifacts_dir = as_path();
      else throw ConfigError("unknown key " + where);
    } else if (section == "pipeline") {
      if (key == "repr") {
        auto r = parse_repr_kind(value);
        if (!r) throw bad("unknown representation");
        repr = *r;
      } else if (key == "k") {
        k = as_size();
      } else if (key == "b") {
        b = as_size();
      } else if (key == "k_out") {
        k_out = as_size();
      } else if (key == "seed") {
        seed = as_size();
      } else if (key == "train_ratio") {
        train_ratio = as_double();
      } else if (key == "metric") {
        auto m = parse_eval_metric(value);
        if (!m) throw bad("unknown metric");
        metric = *m;
      } else if (key == "mode") {
        auto m = parse_eval_mode(value);
        if (!m) throw bad("unknown mode");
        mode = *m;
      } else if (key == "sweep_ks") {
        sweep_ks.clear();
        for (auto part : split(value, ',')) {
          long long v = 0;
          if (!parse_int(trim(part), v) || v <= 0) throw bad("expected a comma-separated list of positive integers, got");
          sweep_ks.push_back(static_cast<std::size_t>(v));
        }
      } else {
        throw ConfigError("unknown key " + where);
      }
    } else if (section == "kmeans") {
      if (key == "max_iters") kmeans.max_iters = as_size();
      else if (key == "tol") kmeans.tol = as_double();
      else throw ConfigError("unknown key " + where);
    } else if (section == "matcher") {
      if (!hp_key(matcher_hp)) throw ConfigError("unknown key " + where);
    } else if (section == "ranker") {
      if (!hp_key(ranker_hp)) throw ConfigError("unknown key " + where);
    } else if (section == "category") {
      if (!hp_key(category_hp)) throw ConfigError("unknown key " + where);
    } else if (section == "fusion") {
      if (key == "max_negatives") fusion.max_negatives_per_question = as_size();
      else if (key == "sample_seed") fusion.seed = as_size();
      else if (!hp_key(fusion.hp)) throw ConfigError("unknown key " + where);
    } else if (section == "descriptions") {
      if (key == "max_entities") max_entities = as_size();
      else if (key == "max_chars") max_chars = as_size();
      else throw ConfigError("unknown key " + where);
    } else {
      throw ConfigError("unknown section [" + std::string(section) + "]");
    }
  }

  void parse(std::string_view text, const fs::path& base = {}, const std::string& where = "config") {
    std::string section;
    std::size_t line_no = 0;
    for (auto raw : split(text, '\n')) {
      ++line_no;
      auto line = trim(raw);
      if (line.empty() || line.front() == '#' || line.front() == ';') continue;
      const std::string lno = where + ":" + std::to_string(line_no);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(lno + ": malformed section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(lno + ": expected key = value");
      if (section.empty()) throw ConfigError(lno + ": key outside of a section");
      auto value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        value = value.substr(1, value.size() - 2);
      }
      try {
        set(section, trim(line.substr(0, eq)), value, base);
      } catch (const ConfigError& e) {
        throw ConfigError(lno + ": " + e.what());
      }
    }
  }

  static PipelineConfig load(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    PipelineConfig c;
    c.parse(read_file(path), path.parent_path(), path.filename().string());
    return c;
  }

  // Checks value ranges and that every configured path exists.
  void validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    if (b == 0) throw ConfigError("b must be positive");
    if (k_out == 0) throw ConfigError("k_out must be positive");
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must lie in (0, 1)");
    for (const auto* hp : {&matcher_hp, &ranker_hp, &category_hp, &fusion.hp}) {
      if (hp->epochs == 0 || hp->batch_size == 0 || !(hp->lr > 0.0) || hp->l2 < 0.0) {
        throw ConfigError("invalid training hyperparameters");
      }
    }
    for (const auto& [name, p] : {std::pair<const char*, const fs::path*>{"kg", &kg_dir},
                                  {"train", &train_path},
                                  {"test", &test_path},
                                  {"embeddings", &embeddings_path},
                                  {"external_scores", &external_scores_path}}) {
      if (!p->empty() && !fs::exists(*p)) {
        throw ConfigError(std::string("paths.") + name + " does not exist: " + p->string());
      }
    }
  }

  // Parameter echo; deliberately free of paths.
  nlohmann::json echo() const {
    return {{"repr", std::string(to_string(repr))},
            {"k", k},
            {"b", b},
            {"k_out", k_out},
            {"seed", seed},
            {"train_ratio", train_ratio},
            {"metric", std::string(to_string(metric))},
            {"mode", std::string(to_string(mode))},
            {"kmeans", {{"max_iters", kmeans.max_iters}, {"tol", kmeans.tol}}},
            {"matcher", matcher_hp.to_json()},
            {"ranker", ranker_hp.to_json()},
            {"category", category_hp.to_json()},
            {"fusion",
             {{"hp", fusion.hp.to_json()},
              {"max_negatives", fusion.max_negatives_per_question},
              {"sample_seed", fusion.seed}}},
            {"descriptions", {{"max_entities", max_entities}, {"max_chars", max_chars}}},
            {"external_scores", !external_scores_path.empty()}};
  }
};

// ----------------------------------------------------------------- model

struct PipelineModel {
  static constexpr std::string_view kVersion = "xtypes-model/1";

  nlohmann::json config;
  QuestionFeaturizer featurizer;
  CategoryModel category;
  ClusterModel clusters;
  MatcherModel matcher;
  RankerModel ranker;
  FusionModel fusion;

  nlohmann::json to_json() const {
    return {{"version", std::string(kVersion)},
            {"config", config},
            {"featurizer", featurizer.to_json()},
            {"category", category.to_json()},
            {"clusters", clusters.to_json()},
            {"matcher", matcher.to_json()},
            {"ranker", ranker.to_json()},
            {"fusion", fusion.to_json()}};
  }

  static PipelineModel from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version") != kVersion) {
      throw DataError("pipeline model: unsupported or missing version");
    }
    PipelineModel m;
    m.config = j.at("config");
    m.featurizer = QuestionFeaturizer::from_json(j.at("featurizer"));
    m.category = CategoryModel::from_json(j.at("category"));
    m.clusters = ClusterModel::from_json(j.at("clusters"));
    m.matcher = MatcherModel::from_json(j.at("matcher"));
    m.ranker = RankerModel::from_json(j.at("ranker"));
    m.fusion = FusionModel::from_json(j.at("fusion"));
    if (m.matcher.k != m.clusters.k) throw DataError("pipeline model: matcher and cluster model disagree on k");
    return m;
  }

  PredictorParts parts(const ScoreTable* external = nullptr) const {
    return {&featurizer, &category, &clusters, &matcher, external, &ranker, &fusion};
  }
};

// ------------------------------------------------------------ training

struct TrainedParts {
  QuestionFeaturizer featurizer;
  CategoryModel category;
  MatcherModel matcher;
  RankerModel ranker;
  FusionModel fusion;
};

// Fits every learned component against one cluster model. `train` feeds the
// featurizer and category classifier, `type_train` the matcher and rankers,
// `validation` the fusion weights.
inline TrainedParts train_components(const QuestionDataset& train, const QuestionDataset& type_train,
                                     const QuestionDataset& validation, const ClusterModel& cm,
                                     const PipelineConfig& cfg, const ScoreTable* external,
                                     Diagnostics* diag = nullptr) {
  TrainedParts p;
  std::vector<std::string> texts;
  for (const auto& q : train.questions()) texts.push_back(q.text);
  p.featurizer = QuestionFeaturizer::fit(texts);
  p.category = train_category(train, p.featurizer, cfg.category_hp);
  p.matcher = train_matcher(type_train, cm, p.featurizer, cfg.matcher_hp, diag);
  p.ranker = train_ranker(type_train, cm, p.featurizer, cfg.ranker_hp, diag);
  FusionOptions fo = cfg.fusion;
  fo.b = cfg.b;
  p.fusion = fit_fusion(validation, ClusterScorer(&p.matcher, external), p.ranker, cm, p.featurizer, fo, diag);
  return p;
}

struct PredictionSet {
  std::vector<RankedPrediction> end_to_end;
  std::vector<RankedPrediction> type_only;
};

inline PredictionSet predict_all(const QuestionDataset& questions, const PredictorParts& parts,
                                 std::size_t b, std::size_t k_out) {
  PredictionSet out;
  for (const auto& q : questions.questions()) {
    out.end_to_end.push_back(predict_topk(q, parts, {b, k_out, true}));
    out.type_only.push_back(predict_topk(q, parts, {b, k_out, false}));
  }
  return out;
}

// Fraction of labeled gold questions whose predicted category is right.
inline double category_accuracy(const std::vector<PredictionRecord>& preds, const QuestionDataset& gold) {
  std::size_t n = 0, hit = 0;
  for (const auto& p : preds) {
    const Question* q = gold.find(p.id);
    if (q == nullptr || !q->category) continue;
    ++n;
    hit += p.category == q->category ? 1 : 0;
  }
  return n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
}

// --------------------------------------------------------------- stages

enum class StageStatus { kRan, kCached };

inline std::string_view to_string(StageStatus s) { return s == StageStatus::kRan ? "ran" : "cached"; }

struct StageDef {
  std::string name;
  fs::path dir;
  std::vector<fs::path> inputs;  // files or directories; missing ones hash as such
  nlohmann::json params;
  std::vector<std::string> outputs;  // file names inside `dir`
  std::function<void(const fs::path&)> body;
};

namespace detail {

inline void hash_input(std::string& acc, const fs::path& p) {
  if (p.empty()) {
    acc += "none\n";
  } else if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    acc += "dir\n";
    for (const auto& f : files) acc += f.filename().string() + ":" + sha256_hex(read_file(f)) + "\n";
  } else if (fs::exists(p)) {
    acc += "file:" + sha256_hex(read_file(p)) + "\n";
  } else {
    acc += "missing\n";
  }
}

// Re-throws the active exception with the stage name in front, keeping its
// category (config / data / other).
[[noreturn]] inline void rethrow_in_stage(const std::string& stage) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + stage + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const LookupError& e) {
    throw DataError("stage " + stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw StageError("stage " + stage + ": " + e.what());
  }
}

}  // namespace detail

inline std::string stage_stamp(const StageDef& s) {
  std::string acc = s.name + "\n" + s.params.dump() + "\n";
  for (const auto& in : s.inputs) detail::hash_input(acc, in);
  return sha256_hex(acc);
}

inline StageStatus run_stage(const StageDef& s, bool force = false) {
  const fs::path stamp_path = s.dir / "stamp";
  const std::string stamp = stage_stamp(s);
  if (!force && fs::exists(stamp_path) && read_file(stamp_path) == stamp + "\n" &&
      std::all_of(s.outputs.begin(), s.outputs.end(), [&](const std::string& o) { return fs::exists(s.dir / o); })) {
    return StageStatus::kCached;
  }
  try {
    fs::create_directories(s.dir);
    fs::remove(stamp_path);
    s.body(s.dir);
  } catch (...) {
    detail::rethrow_in_stage(s.name);
  }
  write_file(stamp_path, stamp + "\n");
  return StageStatus::kRan;
}

// Exclusive per-directory lock, released on destruction.
class ArtifactLock {
 public:
  explicit ArtifactLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST) {
        throw ConfigError("artifact directory is locked by another command (remove " + path_.string() +
                          " if stale)");
      }
      throw ConfigError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
    ::close(fd);
  }
  ~ArtifactLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  ArtifactLock(const ArtifactLock&) = delete;
  ArtifactLock& operator=(const ArtifactLock&) = delete;

 private:
  fs::path path_;
};

inline constexpr const char* kStageNames[] = {"ingest", "build-repr", "cluster", "train", "predict", "evaluate"};

namespace detail {

inline nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": malformed JSON: " + e.what());
  }
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(1) + "\n"); }

inline std::optional<KnowledgeGraph> maybe_kg(const PipelineConfig& cfg, Diagnostics* diag) {
  if (cfg.kg_dir.empty()) return std::nullopt;
  return load_kg_tables(cfg.kg_dir, diag);
}

inline std::size_t effective_k(std::size_t k, const TypeMatrix& m, Diagnostics* diag) {
  const std::size_t distinct = detail::count_distinct_rows(m);
  if (k > distinct) {
    warn(diag, "k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                   " distinct type vectors; using k = " + std::to_string(distinct));
    return distinct;
  }
  return k;
}

inline std::string question_cluster_labels(const QuestionDataset& ds, const ClusterModel& cm) {
  std::string out = "#k " + std::to_string(cm.k) + "\n";
  for (const auto& q : ds.questions()) {
    out += q.id + "\t";
    bool first = true;
    for (const auto c : gold_clusters(q, cm)) {
      if (!first) out += ',';
      out += std::to_string(c);
      first = false;
    }
    out += '\n';
  }
  return out;
}

}  // namespace detail

// Builds the definition of one named stage rooted at `root` (the artifact
// dir, or a per-k sweep dir for the downstream stages).
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, Diagnostics* diag = nullptr) : cfg_(std::move(cfg)), diag_(diag) {}

  const PipelineConfig& config() const { return cfg_; }
  fs::path dir(std::string_view stage) const { return cfg_.artifacts_dir / std::string(stage); }

  StageDef ingest() const {
    StageDef s{"ingest", dir("ingest"), {cfg_.train_path, cfg_.kg_dir},
               {{"seed", cfg_.seed}, {"train_ratio", cfg_.train_ratio}},
               {"train.json", "validation.json", "summary.json"}, nullptr};
    s.body = [this](const fs::path& out) {
      if (cfg_.train_path.empty()) throw ConfigError("paths.train is required");
      LoadStats stats;
      const auto all = load_smart_json(cfg_.train_path, &stats, diag_);
      const auto kg = detail::maybe_kg(cfg_, diag_);
      auto [train, val] = split_train_validation(all, cfg_.train_ratio, cfg_.seed);
      save_smart_json(out / "train.json", train);
      save_smart_json(out / "validation.json", val);
      nlohmann::json counts = nlohmann::json::object();
      for (const auto c : kAllCategories) counts[std::string(to_string(c))] = all.count(c);
      nlohmann::json summary = {{"records", stats.records},
                                {"dropped_empty_text", stats.dropped_empty_text},
                                {"questions", all.size()},
                                {"train", train.size()},
                                {"validation", val.size()},
                                {"category_counts", counts},
                                {"types", all.type_vocabulary().size()}};
      if (kg) {
        summary["types_outside_kg"] = types_outside_kg(all, kg->types).size();
        summary["kg_types"] = kg->types.size();
      }
      detail::write_json(out / "summary.json", summary);
    };
    return s;
  }

  StageDef build_repr() const {
    const bool needs_embeddings =
        cfg_.repr == ReprKind::kLoadedEmbedding || cfg_.repr == ReprKind::kDescriptionEmbedding;
    StageDef s{"build-repr",
               dir("repr"),
               {dir("ingest") / "train.json", cfg_.kg_dir, needs_embeddings ? cfg_.embeddings_path : fs::path()},
               {{"repr", std::string(to_string(cfg_.repr))},
                {"max_entities", cfg_.max_entities},
                {"max_chars", cfg_.max_chars}},
               {"type_matrix.tsv", "type_training.json", "summary.json"},
               nullptr};
    s.body = [this](const fs::path& out) {
      const auto train = load_smart_json(dir("ingest") / "train.json", nullptr, diag_);
      const auto kg = detail::maybe_kg(cfg_, diag_);
      std::size_t excluded = 0;
      const auto subset = type_training_subset(train, kg ? &kg->types : nullptr, &excluded);
      if (excluded > 0) {
        warn(diag_, std::to_string(excluded) + " training question(s) have no gold type in the KG; excluded");
      }
      const auto types = subset.type_vocabulary_list();
      if (types.empty()) throw DataError("no resource questions with gold types in the training split");
      save_smart_json(out / "type_training.json", subset);
      if (kg) {
        write_file(out / "descriptions.tsv",
                   serialize_description_documents(assemble_type_descriptions(
                       kg->types, kg->index, types, cfg_.max_entities, cfg_.max_chars)));
      }

      TypeMatrix m;
      std::vector<std::string> imputed;
      switch (cfg_.repr) {
        case ReprKind::kQuestionTfidf:
          m = build_question_tfidf_repr(subset).matrix;
          break;
        case ReprKind::kJaccard:
          if (!kg) throw ConfigError("representation jaccard needs paths.kg");
          m = build_jaccard_repr(types, kg->index);
          break;
        case ReprKind::kLoadedEmbedding:
        case ReprKind::kDescriptionEmbedding:
          if (cfg_.embeddings_path.empty()) {
            throw ConfigError(std::string("representation ") + std::string(to_string(cfg_.repr)) +
                              " needs paths.embeddings" +
                              (kg ? " (description documents were written to repr/descriptions.tsv)" : ""));
          }
          m = load_embedding_repr(cfg_.embeddings_path, types, &imputed, diag_);
          break;
      }
      save_type_matrix(out / "type_matrix.tsv", m);
      detail::write_json(out / "summary.json", {{"kind", std::string(to_string(m.kind()))},
                                                {"types", m.rows()},
                                                {"dim", m.dim()},
                                                {"excluded_questions", excluded},
                                                {"imputed", imputed}});
    };
    return s;
  }

  StageDef cluster(const fs::path& root, std::size_t k) const {
    StageDef s{"cluster",
               root / "cluster",
               {dir("repr") / "type_matrix.tsv", dir("repr") / "type_training.json"},
               {{"k", k}, {"seed", cfg_.seed}, {"max_iters", cfg_.kmeans.max_iters}, {"tol", cfg_.kmeans.tol}},
               {"model.json", "question_clusters.tsv"},
               nullptr};
    s.body = [this, k](const fs::path& out) {
      const auto m = normalize_repr(load_type_matrix(dir("repr") / "type_matrix.tsv"));
      const auto cm = kmeans_fit(m, detail::effective_k(k, m, diag_), cfg_.seed, cfg_.kmeans);
      detail::write_json(out / "model.json", cm.to_json());
      const auto subset = load_smart_json(dir("repr") / "type_training.json", nullptr, diag_);
      write_file(out / "question_clusters.tsv", detail::question_cluster_labels(subset, cm));
    };
    return s;
  }

  StageDef train(const fs::path& root) const {
    StageDef s{"train",
               root / "model",
               {dir("ingest") / "train.json", dir("ingest") / "validation.json",
                dir("repr") / "type_training.json", root / "cluster" / "model.json", cfg_.external_scores_path},
               cfg_.echo(),
               {"pipeline.json"},
               nullptr};
    s.body = [this, root](const fs::path& out) {
      const auto train = load_smart_json(dir("ingest") / "train.json", nullptr, diag_);
      const auto val = load_smart_json(dir("ingest") / "validation.json", nullptr, diag_);
      const auto subset = load_smart_json(dir("repr") / "type_training.json", nullptr, diag_);
      PipelineModel pm;
      pm.clusters = ClusterModel::from_json(detail::read_json(root / "cluster" / "model.json"));
      std::optional<ScoreTable> ext;
      if (!cfg_.external_scores_path.empty()) {
        ext = import_external_scores(cfg_.external_scores_path, val, pm.clusters.k, diag_);
      }
      auto parts = train_components(train, subset, val, pm.clusters, cfg_, ext ? &*ext : nullptr, diag_);
      pm.config = cfg_.echo();
      pm.config["k_effective"] = pm.clusters.k;
      pm.featurizer = std::move(parts.featurizer);
      pm.category = std::move(parts.category);
      pm.matcher = std::move(parts.matcher);
      pm.ranker = std::move(parts.ranker);
      pm.fusion = parts.fusion;
      detail::write_json(out / "pipeline.json", pm.to_json());
    };
    return s;
  }

  // Predicts `questions_path` with the model under `root`, into `out_name`.
  StageDef predict(const fs::path& root, const fs::path& questions_path, const std::string& stage_dir) const {
    StageDef s{"predict",
               root / stage_dir,
               {root / "model" / "pipeline.json", questions_path, cfg_.external_scores_path},
               {{"b", cfg_.b}, {"k_out", cfg_.k_out}},
               {"end_to_end.json", "type_only.json"},
               nullptr};
    s.body = [this, root, questions_path](const fs::path& out) {
      if (questions_path.empty()) throw ConfigError("paths.test is required");
      const auto pm = PipelineModel::from_json(detail::read_json(root / "model" / "pipeline.json"));
      const auto qs = load_smart_json(questions_path, nullptr, diag_);
      std::optional<ScoreTable> ext;
      if (!cfg_.external_scores_path.empty()) {
        ext = import_external_scores(cfg_.external_scores_path, qs, pm.clusters.k, diag_);
      }
      const auto preds = predict_all(qs, pm.parts(ext ? &*ext : nullptr), cfg_.b, cfg_.k_out);
      detail::write_json(out / "end_to_end.json", to_predictions_json(preds.end_to_end));
      detail::write_json(out / "type_only.json", to_predictions_json(preds.type_only));
    };
    return s;
  }

  StageDef evaluate(const fs::path& root, const fs::path& gold_path, const std::string& pred_dir,
                    const std::string& stage_dir) const {
    StageDef s{"evaluate",
               root / stage_dir,
               {root / pred_dir / "end_to_end.json", root / pred_dir / "type_only.json", gold_path, cfg_.kg_dir},
               {{"metric", std::string(to_string(cfg_.metric))}, {"method", std::string(to_string(cfg_.repr))}},
               {"report.json", "report.txt"},
               nullptr};
    s.body = [this, root, gold_path, pred_dir](const fs::path& out) {
      const auto gold = load_smart_json(gold_path, nullptr, diag_);
      const auto kg = detail::maybe_kg(cfg_, diag_);
      const TypeSystem* ts = kg ? &kg->types : nullptr;
      const auto e2e = load_predictions(root / pred_dir / "end_to_end.json");
      const auto type_only = load_predictions(root / pred_dir / "type_only.json");
      TableRow row{std::string(to_string(cfg_.repr)),
                   evaluate_run(ts, type_only, gold, EvalMode::kTypeOnly, cfg_.metric),
                   evaluate_run(ts, e2e, gold, EvalMode::kEndToEnd, cfg_.metric)};
      const double acc = category_accuracy(e2e, gold);
      detail::write_json(out / "report.json", {{"method", row.method},
                                               {"category_accuracy", acc},
                                               {"type_only", row.type_only->to_json()},
                                               {"end_to_end", row.end_to_end->to_json()}});
      std::ostringstream txt;
      txt << render_table({row}) << "category accuracy: " << std::fixed << std::setprecision(3) << acc << '\n';
      write_file(out / "report.txt", txt.str());
    };
    return s;
  }

  // The stage with the given CLI name, on the main artifact dir.
  StageDef stage(std::string_view name) const {
    const auto& root = cfg_.artifacts_dir;
    if (name == "ingest") return ingest();
    if (name == "build-repr") return build_repr();
    if (name == "cluster") return cluster(root, cfg_.k);
    if (name == "train") return train(root);
    if (name == "predict") return predict(root, cfg_.test_path, "predict");
    if (name == "evaluate") return evaluate(root, cfg_.test_path, "predict", "evaluate");
    throw ConfigError("unknown stage " + std::string(name));
  }

 private:
  PipelineConfig cfg_;
  Diagnostics* diag_;
};

// ------------------------------------------------------------- commands

struct RunResult {
  std::vector<std::pair<std::string, StageStatus>> stages;
  nlohmann::json report;    // evaluate/report.json
  std::string report_text;  // evaluate/report.txt
};

inline StageStatus cmd_stage(const PipelineConfig& cfg, std::string_view name, Diagnostics* diag = nullptr) {
  cfg.validate();
  ArtifactLock lock(cfg.artifacts_dir);
  return run_stage(Pipeline(cfg, diag).stage(name));
}

inline RunResult cmd_run(const PipelineConfig& cfg, Diagnostics* diag = nullptr) {
  cfg.validate();
  if (cfg.test_path.empty()) throw ConfigError("paths.test is required for run");
  ArtifactLock lock(cfg.artifacts_dir);
  const Pipeline p(cfg, diag);
  RunResult r;
  for (const auto* name : kStageNames) r.stages.emplace_back(name, run_stage(p.stage(name)));
  r.report = detail::read_json(p.dir("evaluate") / "report.json");
  r.report_text = read_file(p.dir("evaluate") / "report.txt");
  return r;
}

struct SweepRow {
  std::size_t k = 0;
  std::size_t effective_k = 0;
  double inertia = 0.0;
  double metric = 0.0;
};

struct SweepResult {
  std::string metric_name;
  std::vector<SweepRow> rows;
  std::size_t winner = 0;  // index into rows
  std::vector<std::pair<std::string, StageStatus>> stages;

  nlohmann::json to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : rows) {
      rs.push_back({{"k", r.k}, {"effective_k", r.effective_k}, {"inertia", r.inertia}, {"metric", r.metric}});
    }
    return {{"metric", metric_name}, {"rows", rs}, {"winner_k", rows.empty() ? 0 : rows[winner].k}};
  }

  std::string table() const {
    std::ostringstream out;
    out << std::left << std::setw(8) << "k" << std::setw(13) << "effective_k" << std::setw(12) << "inertia"
        << std::setw(12) << metric_name << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out << std::setw(8) << r.k << std::setw(13) << r.effective_k << std::fixed << std::setprecision(4)
          << std::setw(12) << r.inertia << std::setw(12) << r.metric << (i == winner ? "<- best" : "") << "\n";
    }
    return out.str();
  }
};

// Cluster, train and validate once per k; the winner maximizes the
// validation metric, ties to the smaller k.
inline SweepResult cmd_sweep(const PipelineConfig& cfg, std::vector<std::size_t> ks, Diagnostics* diag = nullptr) {
  cfg.validate();
  if (ks.empty()) ks = cfg.sweep_ks;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty() || ks.front() == 0) throw ConfigError("sweep needs positive k values");
  ArtifactLock lock(cfg.artifacts_dir);
  const Pipeline p(cfg, diag);
  SweepResult res;
  res.metric_name = std::string(to_string(cfg.mode)) + ":" + metric_names(cfg.metric).front();
  res.stages.emplace_back("ingest", run_stage(p.ingest()));
  res.stages.emplace_back("build-repr", run_stage(p.build_repr()));
  const fs::path val = p.dir("ingest") / "validation.json";
  for (const auto k : ks) {
    const fs::path root = cfg.artifacts_dir / "sweep" / ("k" + std::to_string(k));
    const std::string tag = "k" + std::to_string(k) + "/";
    res.stages.emplace_back(tag + "cluster", run_stage(p.cluster(root, k)));
    res.stages.emplace_back(tag + "train", run_stage(p.train(root)));
    res.stages.emplace_back(tag + "predict", run_stage(p.predict(root, val, "predict")));
    res.stages.emplace_back(tag + "evaluate", run_stage(p.evaluate(root, val, "predict", "evaluate")));
    const auto cm = detail::read_json(root / "cluster" / "model.json");
    const auto report = detail::read_json(root / "evaluate" / "report.json");
    SweepRow row;
    row.k = k;
    row.effective_k = cm.at("k").get<std::size_t>();
    row.inertia = cm.at("inertia").get<double>();
    row.metric = report.at(std::string(to_string(cfg.mode)))
                     .at("means")
                     .at(metric_names(cfg.metric).front())
                     .get<double>();
    res.rows.push_back(row);
  }
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    if (res.rows[i].metric > res.rows[res.winner].metric) res.winner = i;
  }
  detail::write_json(cfg.artifacts_dir / "sweep" / "report.json", res.to_json());
  write_file(cfg.artifacts_dir / "sweep" / "report.txt", res.table());
  return res;
}

}  // namespace xtypes
