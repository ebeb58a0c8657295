#include "ontoforge/commands.hpp"

#include <charconv>
#include <set>

#include "ontoforge/error.hpp"
#include "ontoforge/evalharness.hpp"
#include "ontoforge/io.hpp"

namespace ontoforge {

namespace {

nlohmann::ordered_json backend_json(Gateway& g) {
  return {{"id", g.backend().id()}, {"embed_id", g.backend().embed_id()}};
}

nlohmann::ordered_json eval_hypernym(const PipelineConfig& config, const EvalOptions& opt,
                                     Gateway& gateway, const TemplateSet& templates,
                                     std::ostream& out) {
  auto items = load_hypernym_dataset(opt.data, opt.gold);
  nlohmann::ordered_json j;
  if (opt.with_definitions) {
    auto defs = generate_eval_definitions(items, gateway, templates, config.gen, config.parallelism);
    for (auto& item : items) {
      if (auto it = defs.definitions.find(item.term); it != defs.definitions.end()) {
        item.definition = it->second;
      }
    }
    j["definition_misses"] = defs.misses;
  }
  predict_hypernyms(items, gateway, templates, config.gen, config.parallelism,
                    opt.with_definitions);
  const double value = mrr(items);

  auto per_item = nlohmann::ordered_json::array();
  for (const auto& item : items) {
    auto rank = first_match_rank(item);
    per_item.push_back({
        {"term", item.term},
        {"definition", item.definition ? nlohmann::ordered_json(*item.definition)
                                       : nlohmann::ordered_json(nullptr)},
        {"gold", item.gold},
        {"predictions", item.predictions},
        {"rank", rank ? nlohmann::ordered_json(*rank) : nlohmann::ordered_json(nullptr)},
        {"reciprocal_rank", rank ? 1.0 / static_cast<double>(*rank) : 0.0},
        {"error", item.error},
    });
  }
  j["metric"] = "mrr";
  j["value"] = value;
  j["n"] = items.size();
  j["items"] = std::move(per_item);
  j["template_versions"] = {
      {templates.hypernym_query().id(), templates.hypernym_query().version()},
      {templates.definition_completion().id(), templates.definition_completion().version()}};
  out << "MRR: " << format_double(value) << " (" << items.size() << " items)\n";
  return j;
}

nlohmann::ordered_json eval_qa(const PipelineConfig& config, const EvalOptions& opt,
                               Gateway& gateway, std::ostream& out) {
  auto items = load_qa_dataset(opt.qa, opt.dataset);
  auto templates = QaTemplates::load(config.template_dir);
  predict_choices(items, gateway, templates, config.gen, config.parallelism);
  auto acc = accuracy(items);

  nlohmann::ordered_json j;
  auto per_item = nlohmann::ordered_json::array();
  std::set<std::string> datasets;
  for (const auto& item : items) {
    datasets.insert(item.dataset);
    per_item.push_back({
        {"dataset", item.dataset},
        {"question", item.question},
        {"gold", item.gold_letter},
        {"predicted", item.predicted_letter ? nlohmann::ordered_json(*item.predicted_letter)
                                            : nlohmann::ordered_json(nullptr)},
        {"correct", item.predicted_letter && *item.predicted_letter == item.gold_letter},
        {"raw_output", item.raw_output},
        {"error", item.error},
    });
  }
  auto per_dataset = nlohmann::ordered_json::object();
  for (const auto& [name, cn] : acc.per_dataset) {
    per_dataset[name] = {{"correct", cn.first},
                         {"n", cn.second},
                         {"accuracy", static_cast<double>(cn.first) / static_cast<double>(cn.second)}};
  }
  auto versions = nlohmann::ordered_json::object();
  for (const auto& d : datasets) {
    const auto& t = templates.for_dataset(d);
    versions[t.id()] = t.version();
  }
  j["metric"] = "accuracy";
  j["value"] = acc.fraction;
  j["percent"] = acc.percent();
  j["correct"] = acc.correct;
  j["n"] = acc.n;
  j["per_dataset"] = std::move(per_dataset);
  j["items"] = std::move(per_item);
  j["template_versions"] = std::move(versions);
  out << "accuracy: " << acc.percent() << " (" << acc.correct << "/" << acc.n << ")\n";
  return j;
}

nlohmann::ordered_json eval_shift(const PipelineConfig& config, const EvalOptions& opt,
                                  Gateway& gateway, std::ostream& out) {
  std::vector<ShiftInstruction> instructions;
  for (const auto& j : read_jsonl(opt.instructions)) {
    ShiftInstruction ins;
    ins.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                              : std::to_string(instructions.size());
    try {
      ins.text = j.at("instruction").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(opt.instructions.filename().string() + ": " + e.what());
    }
    instructions.push_back(std::move(ins));
  }
  if (opt.limit && instructions.size() > *opt.limit) instructions.resize(*opt.limit);
  auto save = [&](const std::vector<std::pair<std::string, std::string>>& responses) {
    std::string text;
    for (const auto& [id, response] : responses) {
      text += dump_line(nlohmann::ordered_json{{"id", id}, {"response", response}});
      text += '\n';
    }
    write_file_atomic(*opt.save_responses, text);
  };

  nlohmann::ordered_json j;
  if (opt.reference.empty()) {
    // Recording mode: save the model's responses as a future reference.
    if (!opt.save_responses) throw UsageError("eval shift needs --reference or --save-responses");
    std::vector<PromptText> prompts;
    for (const auto& ins : instructions) prompts.push_back({ins.text, "instruction", ""});
    auto results = gateway.generate_batch(prompts, config.gen, config.parallelism);
    std::vector<std::pair<std::string, std::string>> responses;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].ok()) {
        responses.emplace_back(instructions[i].id, results[i].value->text);
      } else {
        ++failed;
      }
    }
    save(responses);
    j["metric"] = "responses";
    j["n"] = instructions.size();
    j["excluded"] = failed;
    out << "saved " << responses.size() << " responses (" << failed << " failed)\n";
    return j;
  }

  std::vector<std::string> reference;
  for (const auto& r : read_jsonl(opt.reference)) {
    try {
      reference.push_back(r.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(opt.reference.filename().string() + ": " + e.what());
    }
  }
  if (opt.limit && reference.size() > *opt.limit) reference.resize(*opt.limit);
  auto report = distribution_shift(instructions, gateway, reference, gateway, config.gen,
                                   config.parallelism);
  if (opt.save_responses) {
    std::vector<std::pair<std::string, std::string>> responses;
    for (const auto& item : report.per_item) {
      if (item.error.empty()) responses.emplace_back(item.instruction_id, item.response);
    }
    save(responses);
  }

  auto per_item = nlohmann::ordered_json::array();
  for (const auto& item : report.per_item) {
    per_item.push_back({{"instruction_id", item.instruction_id},
                        {"cosine", item.cosine ? nlohmann::ordered_json(*item.cosine)
                                               : nlohmann::ordered_json(nullptr)},
                        {"error", item.error}});
  }
  j["metric"] = "mean_cosine";
  j["value"] = report.mean_cosine ? nlohmann::ordered_json(*report.mean_cosine)
                                  : nlohmann::ordered_json(nullptr);
  j["n"] = report.n;
  j["excluded"] = report.excluded;
  j["items"] = std::move(per_item);
  out << "mean cosine: " << (report.mean_cosine ? format_double(*report.mean_cosine) : "n/a")
      << " (" << report.n - report.excluded << " items, " << report.excluded << " excluded)\n";
  return j;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

EvalTask parse_eval_task(std::string_view name) {
  if (name == "hypernym") return EvalTask::kHypernym;
  if (name == "qa") return EvalTask::kQa;
  if (name == "shift") return EvalTask::kShift;
  throw UsageError("unknown eval task '" + std::string(name) + "' (expected hypernym, qa or shift)");
}

std::filesystem::path run_eval(const PipelineConfig& config, const EvalOptions& options,
                               std::ostream& out) {
  return run_eval(config, options, make_backend(config.backend), out);
}

std::filesystem::path run_eval(const PipelineConfig& config, const EvalOptions& options,
                               std::shared_ptr<Backend> backend, std::ostream& out) {
  config.validate();
  Gateway gateway(std::move(backend), config.resolved_cache_dir(), config.retry,
                  config.max_tokens_ceiling);
  auto templates = config.template_dir ? TemplateSet::load(*config.template_dir)
                                       : TemplateSet::defaults();
  nlohmann::ordered_json report;
  const char* task = "";
  switch (options.task) {
    case EvalTask::kHypernym:
      task = "hypernym";
      report = eval_hypernym(config, options, gateway, templates, out);
      break;
    case EvalTask::kQa:
      task = "qa";
      report = eval_qa(config, options, gateway, out);
      break;
    case EvalTask::kShift:
      task = "shift";
      report = eval_shift(config, options, gateway, out);
      break;
  }
  nlohmann::ordered_json j;
  j["task"] = task;
  j["backend"] = backend_json(gateway);
  for (auto& [k, v] : report.items()) j[k] = v;
  auto path = options.report ? *options.report : config.output_dir / "eval_report.json";
  write_file_atomic(path, dump_pretty(j));
  return path;
}

ValidationReport validate_ontology_command(const OntologyFiles& files, std::ostream& out) {
  auto store = load_ontology(files);
  auto stats = store.stats();
  auto report = validate(store);
  out << "concepts: " << stats.concepts << "\n"
      << "definitions: " << stats.definitions << "\n"
      << "is-a edges: " << stats.is_a_edges << "\n"
      << "roots: " << report.roots.size() << "\n"
      << report.summary() << "\n";
  for (const auto& cycle : report.cycles) {
    out << "warning: cycle among";
    for (const auto& id : cycle) out << " " << id.str();
    out << "\n";
  }
  for (const auto& id : report.orphans) {
    out << "warning: orphan " << id.str() << " has no path to a root\n";
  }
  return report;
}

}  // namespace ontoforge
