// ontoforge: ontology-guided self-training data pipeline and evaluation.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ontoforge/commands.hpp"
#include "ontoforge/error.hpp"
#include "ontoforge/pipeline.hpp"

namespace {

using namespace ontoforge;

/// Flag values that override the config file.
struct Overrides {
  std::string config;
  std::string out;
  std::string templates;
  std::string backend;
  std::string base_url;
  std::string model;
  std::string embed_model;
  std::string script;
  std::string cache_dir;
  std::optional<std::size_t> k;
  std::optional<std::size_t> parallelism;
  std::optional<int> retries;
  std::optional<double> bin_width;
  std::string concepts;
  std::string relations;
  std::string descriptions;
};

void add_common_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--out", o.out, "Output directory");
  cmd.add_option("--templates", o.templates, "Template directory");
  cmd.add_option("--backend", o.backend, "Backend kind")->check(CLI::IsMember({"mock", "scripted", "http"}));
  cmd.add_option("--base-url", o.base_url, "Chat-completion service base URL");
  cmd.add_option("--model", o.model, "Generation model name");
  cmd.add_option("--embed-model", o.embed_model, "Embedding model name");
  cmd.add_option("--script", o.script, "Scripted backend rules (JSON)");
  cmd.add_option("--cache-dir", o.cache_dir, "Response cache directory");
  cmd.add_option("--k", o.k, "Records selected per corpus kind");
  cmd.add_option("--parallelism", o.parallelism, "Concurrent backend requests");
  cmd.add_option("--retries", o.retries, "Retry budget for transient backend failures");
  cmd.add_option("--bin-width", o.bin_width, "Histogram bin width for the score report");
  cmd.add_option("--concepts", o.concepts, "concepts.tsv");
  cmd.add_option("--relations", o.relations, "relations.tsv");
  cmd.add_option("--descriptions", o.descriptions, "descriptions.tsv");
}

/// Precedence: flags > environment > config file > defaults.
PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig c;
  if (!o.config.empty()) c = PipelineConfig::from_file(o.config);
  if (const char* key = std::getenv("ONTOFORGE_API_KEY")) c.backend.api_key = key;
  auto abs = [](const std::string& p) { return std::filesystem::absolute(p); };
  if (!o.out.empty()) c.output_dir = abs(o.out);
  if (!o.templates.empty()) c.template_dir = abs(o.templates);
  if (!o.backend.empty()) c.backend.kind = o.backend;
  if (!o.base_url.empty()) c.backend.base_url = o.base_url;
  if (!o.model.empty()) c.backend.model = o.model;
  if (!o.embed_model.empty()) c.backend.embed_model = o.embed_model;
  if (!o.script.empty()) c.backend.script = abs(o.script);
  if (!o.cache_dir.empty()) c.cache_dir = abs(o.cache_dir);
  if (o.k) c.k = *o.k;
  if (o.parallelism) c.parallelism = *o.parallelism;
  if (o.retries) c.retry.max_retries = *o.retries;
  if (o.bin_width) c.bin_width = *o.bin_width;
  if (!o.concepts.empty()) c.ontology.concepts = abs(o.concepts);
  if (!o.relations.empty()) c.ontology.relations = abs(o.relations);
  if (!o.descriptions.empty()) c.ontology.descriptions = abs(o.descriptions);
  c.validate();
  return c;
}

void print_manifest(const RunManifest& m) {
  for (auto s : kAllStages) {
    auto it = m.stages.find(s);
    if (it == m.stages.end()) continue;
    std::cout << to_string(s) << ": " << to_string(it->second.status)
              << (it->second.skipped ? " (reused)" : "");
    for (const auto& [k, v] : it->second.counts) std::cout << " " << k << "=" << v;
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ontoforge: ontology-guided self-training data pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "Pipeline configuration (JSON)");

  auto* run = app.add_subcommand("run", "Run every stage, resuming from intact outputs");
  add_common_flags(*run, o);
  std::string stop_after;
  run->add_option("--stop-after", stop_after, "Stop after this stage");

  auto* stage = app.add_subcommand("stage", "Run exactly one stage");
  add_common_flags(*stage, o);
  std::string stage_name;
  stage->add_option("name", stage_name, "ingest, complete-defs, generate, score, select, emit, report")
      ->required();

  auto* report = app.add_subcommand("report", "Write score_report.json from scored records");
  add_common_flags(*report, o);

  auto* validate_cmd = app.add_subcommand("validate-ontology", "Load and check the ontology");
  add_common_flags(*validate_cmd, o);

  auto* eval = app.add_subcommand("eval", "Evaluate a model: hypernym, qa or shift");
  add_common_flags(*eval, o);
  std::string task_name;
  EvalOptions eo;
  std::string data, gold, qa, instructions, reference, save_responses, report_path;
  std::optional<std::size_t> limit;
  eval->add_option("task", task_name, "hypernym | qa | shift")->required();
  eval->add_option("--data", data, "Hypernym data file (term<TAB>category)");
  eval->add_option("--gold", gold, "Hypernym gold file");
  eval->add_flag("--with-definitions", eo.with_definitions, "Generate term definitions first");
  eval->add_option("--qa", qa, "QA dataset (JSONL)");
  eval->add_option("--dataset", eo.dataset, "QA template name (medqa, medmcqa, pubmedqa, usmle)");
  eval->add_option("--instructions", instructions, "Instructions (JSONL)");
  eval->add_option("--reference", reference, "Reference responses (JSONL); omit to only record responses");
  eval->add_option("--save-responses", save_responses, "Write the model's responses (JSONL)");
  eval->add_option("--limit", limit, "Use at most N instructions");
  eval->add_option("--report", report_path, "Report path (default <out>/eval_report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*validate_cmd) {
      PipelineConfig c;
      if (!o.config.empty()) c = PipelineConfig::from_file(o.config);
      if (!o.concepts.empty()) c.ontology.concepts = o.concepts;
      if (!o.relations.empty()) c.ontology.relations = o.relations;
      if (!o.descriptions.empty()) c.ontology.descriptions = o.descriptions;
      if (c.ontology.concepts.empty() || c.ontology.relations.empty()) {
        throw UsageError("validate-ontology needs concepts and relations files");
      }
      validate_ontology_command(c.ontology, std::cout);
      return 0;
    }

    auto config = resolve_config(o);

    if (*eval) {
      eo.task = parse_eval_task(task_name);
      eo.data = data;
      eo.gold = gold;
      eo.qa = qa;
      eo.instructions = instructions;
      eo.reference = reference;
      if (!save_responses.empty()) eo.save_responses = save_responses;
      if (!report_path.empty()) eo.report = report_path;
      eo.limit = limit;
      switch (eo.task) {
        case EvalTask::kHypernym:
          if (data.empty() || gold.empty()) throw UsageError("eval hypernym needs --data and --gold");
          break;
        case EvalTask::kQa:
          if (qa.empty()) throw UsageError("eval qa needs --qa");
          break;
        case EvalTask::kShift:
          if (instructions.empty() || (reference.empty() && save_responses.empty())) {
            throw UsageError("eval shift needs --instructions and --reference or --save-responses");
          }
          break;
      }
      auto path = run_eval(config, eo, std::cout);
      std::cout << "report: " << path.string() << "\n";
      return 0;
    }

    Pipeline pipeline(config);
    RunManifest manifest;
    if (*run) {
      std::optional<Stage> stop;
      if (!stop_after.empty()) stop = parse_stage(stop_after);
      manifest = pipeline.run(stop);
    } else if (*stage) {
      manifest = pipeline.run_stage(parse_stage(stage_name));
    } else if (*report) {
      manifest = pipeline.run_stage(Stage::kReport);
    }
    print_manifest(manifest);
    std::cout << "manifest: " << pipeline.out(kManifestFile).string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
}
