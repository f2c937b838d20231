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

// xtypes command line.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 stage failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xtypes/evaluate.hpp"
#include "xtypes/fixtures.hpp"
#include "xtypes/ntriples.hpp"
#include "xtypes/pipeline.hpp"

namespace {

using namespace xtypes;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitStage = 4;

// Flags shared by every pipeline subcommand. Unset flags leave the config
// file value alone.
struct CommonFlags {
  std::string config;
  std::optional<std::string> repr, metric, mode, artifacts, external_scores, kg, train, test, embeddings;
  std::optional<std::size_t> k, b, k_out;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "config file ([section] key = value)");
    app->add_option("--repr", repr, "question_tfidf | jaccard | loaded_embedding | description_embedding");
    app->add_option("--k", k, "number of type clusters");
    app->add_option("--b", b, "clusters opened per question");
    app->add_option("--k-out", k_out, "types returned per question");
    app->add_option("--seed", seed, "split and clustering seed");
    app->add_option("--artifacts", artifacts, "artifact directory");
    app->add_option("--external-scores", external_scores, "cluster score file overriding the matcher");
    app->add_option("--metric", metric, "ndcg | mrr");
    app->add_option("--mode", mode, "type_only | end_to_end");
    app->add_option("--kg", kg, "directory with the KG tables");
    app->add_option("--train", train, "training questions (SMART JSON)");
    app->add_option("--test", test, "test questions (SMART JSON)");
    app->add_option("--embeddings", embeddings, "embedding file for the embedding representations");
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : PipelineConfig::load(config);
    auto set = [&](const char* section, const char* key, const auto& v) {
      if (v) cfg.set(section, key, *v);
    };
    auto set_num = [&](const char* section, const char* key, const auto& v) {
      if (v) cfg.set(section, key, std::to_string(*v));
    };
    set("pipeline", "repr", repr);
    set("pipeline", "metric", metric);
    set("pipeline", "mode", mode);
    set_num("pipeline", "k", k);
    set_num("pipeline", "b", b);
    set_num("pipeline", "k_out", k_out);
    set_num("pipeline", "seed", seed);
    set("paths", "artifacts", artifacts);
    set("paths", "external_scores", external_scores);
    set("paths", "kg", kg);
    set("paths", "train", train);
    set("paths", "test", test);
    set("paths", "embeddings", embeddings);
    return cfg;
  }
};

void print_stages(const std::vector<std::pair<std::string, StageStatus>>& stages) {
  for (const auto& [name, status] : stages) std::cout << "stage " << name << ": " << to_string(status) << '\n';
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Answer type prediction pipeline"};
  app.require_subcommand(1);

  // convert-nt
  auto* convert = app.add_subcommand("convert-nt", "convert N-Triples dumps to KG tables");
  std::vector<std::string> nt_inputs;
  std::string nt_out;
  NTriplesOptions nt_opt;
  std::vector<std::string> nt_desc, nt_prefixes, nt_langs;
  convert->add_option("--in", nt_inputs, "N-Triples files")->required();
  convert->add_option("--out", nt_out, "output directory")->required();
  convert->add_option("--type-predicate", nt_opt.type_predicate);
  convert->add_option("--subclass-predicate", nt_opt.subclass_predicate);
  convert->add_option("--label-predicate", nt_opt.label_predicate);
  convert->add_option("--description-predicate", nt_desc, "repeatable; replaces the defaults");
  convert->add_option("--prefix", nt_prefixes, "IRI=short, repeatable; added to the defaults");
  convert->add_option("--lang", nt_langs, "accepted literal languages; replaces the default (en)");

  // generate-fixture
  auto* gen = app.add_subcommand("generate-fixture", "write a synthetic KG and question set");
  std::string gen_out;
  FixtureSpec fspec;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--types", fspec.type_count);
  gen->add_option("--depth", fspec.depth);
  gen->add_option("--entities", fspec.entities_per_type);
  gen->add_option("--overlap", fspec.sibling_overlap);
  gen->add_option("--questions", fspec.questions_per_type);
  gen->add_option("--test-questions", fspec.test_questions_per_type);
  gen->add_option("--seed", fspec.seed);

  // pipeline stages
  std::vector<std::pair<CLI::App*, CommonFlags>> stage_cmds;
  stage_cmds.reserve(16);
  auto add_pipeline_cmd = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    stage_cmds.emplace_back(sub, CommonFlags{});
    stage_cmds.back().second.attach(sub);
    return sub;
  };
  for (const auto* name : {"ingest", "build-repr", "cluster", "train", "predict"}) {
    add_pipeline_cmd(name, std::string("run the ") + name + " stage");
  }
  auto* evaluate = add_pipeline_cmd("evaluate", "run the evaluate stage, or score a prediction file");
  std::string ev_predictions, ev_gold, ev_out;
  evaluate->add_option("--predictions", ev_predictions, "prediction file (standalone mode)");
  evaluate->add_option("--gold", ev_gold, "gold SMART JSON (standalone mode)");
  evaluate->add_option("--out", ev_out, "report JSON path (standalone mode)");
  auto* sweep = add_pipeline_cmd("sweep", "validation metric per cluster count");
  std::string ks_text;
  sweep->add_option("--ks", ks_text, "comma-separated cluster counts");
  auto* run = add_pipeline_cmd("run", "all stages, resuming from cached artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (convert->parsed()) {
    if (!nt_desc.empty()) nt_opt.description_predicates = nt_desc;
    for (const auto& p : nt_prefixes) {
      const auto eq = p.find('=');
      if (eq == std::string::npos) throw ConfigError("--prefix expects IRI=short, got " + p);
      nt_opt.prefixes[p.substr(0, eq)] = p.substr(eq + 1);
    }
    if (!nt_langs.empty()) nt_opt.languages = {nt_langs.begin(), nt_langs.end()};
    std::vector<fs::path> inputs(nt_inputs.begin(), nt_inputs.end());
    const auto st = convert_ntriples_files(inputs, nt_out, nt_opt);
    std::cout << "lines " << st.lines << ", triples " << st.triples << ", used " << st.used << ", malformed "
              << st.malformed << '\n';
    return 0;
  }

  if (gen->parsed()) {
    const auto paths = write_fixture(generate_fixture(fspec), gen_out);
    write_file(fs::path(gen_out) / "xtypes.conf",
               "[paths]\nkg = kg\ntrain = train.json\ntest = test.json\nartifacts = artifacts\n\n"
               "[pipeline]\nrepr = jaccard\nk = 64\nb = 3\n");
    std::cout << "fixture written to " << gen_out << " (config: " << (fs::path(gen_out) / "xtypes.conf").string()
              << ")\n";
    (void)paths;
    return 0;
  }

  for (auto& [sub, flags] : stage_cmds) {
    if (!sub->parsed()) continue;
    const std::string name = sub->get_name();

    if (sub == evaluate && !ev_predictions.empty()) {
      if (ev_gold.empty()) throw ConfigError("--gold is required with --predictions");
      PipelineConfig cfg = flags.resolve();
      std::optional<KnowledgeGraph> kg;
      if (!cfg.kg_dir.empty()) kg = load_kg_tables(cfg.kg_dir);
      const auto gold = load_smart_json(ev_gold);
      const auto preds = load_predictions(ev_predictions);
      const auto report = evaluate_run(kg ? &kg->types : nullptr, preds, gold, cfg.mode, cfg.metric);
      TableRow row{fs::path(ev_predictions).stem().string(), std::nullopt, std::nullopt};
      (cfg.mode == EvalMode::kTypeOnly ? row.type_only : row.end_to_end) = report;
      std::cout << render_table({row});
      if (!ev_out.empty()) write_file(ev_out, report.to_json().dump(1) + "\n");
      return 0;
    }

    const PipelineConfig cfg = flags.resolve();
    if (sub == run) {
      const auto r = cmd_run(cfg);
      print_stages(r.stages);
      std::cout << '\n' << r.report_text;
    } else if (sub == sweep) {
      std::vector<std::size_t> ks;
      for (auto part : split(ks_text, ',')) {
        long long v = 0;
        if (trim(part).empty()) continue;
        if (!parse_int(trim(part), v) || v <= 0) throw ConfigError("--ks expects positive integers");
        ks.push_back(static_cast<std::size_t>(v));
      }
      const auto r = cmd_sweep(cfg, ks);
      print_stages(r.stages);
      std::cout << '\n' << r.table();
    } else {
      const auto status = cmd_stage(cfg, name);
      std::cout << "stage " << name << ": " << to_string(status) << '\n';
      if (sub == evaluate) std::cout << read_file(cfg.artifacts_dir / "evaluate" / "report.txt");
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const xtypes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const xtypes::ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const xtypes::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const xtypes::LookupError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
}
