#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "ontoforge/pipeline.hpp"

namespace ontoforge {

enum class EvalTask { kHypernym, kQa, kShift };

/// Throws UsageError for anything but "hypernym", "qa", "shift".
EvalTask parse_eval_task(std::string_view name);

struct EvalOptions {
  EvalTask task = EvalTask::kHypernym;
  // hypernym
  std::filesystem::path data;
  std::filesystem::path gold;
  bool with_definitions = false;
  // qa
  std::filesystem::path qa;
  std::string dataset = "medqa";
  // shift
  std::filesystem::path instructions;
  std::filesystem::path reference;
  std::optional<std::filesystem::path> save_responses;
  std::optional<std::size_t> limit;
  /// <output_dir>/eval_report.json when unset.
  std::optional<std::filesystem::path> report;
};

/// Runs one evaluation, writes eval_report.json, prints the headline
/// metric to `out` and returns the report path.
std::filesystem::path run_eval(const PipelineConfig& config, const EvalOptions& options,
                               std::ostream& out);

/// Same, with an explicit backend (tests).
std::filesystem::path run_eval(const PipelineConfig& config, const EvalOptions& options,
                               std::shared_ptr<Backend> backend, std::ostream& out);

/// Loads and validates the configured ontology, printing statistics and
/// warnings. Returns the validation report.
ValidationReport validate_ontology_command(const OntologyFiles& files, std::ostream& out);

/// Shortest decimal text that round-trips to `v`.
std::string format_double(double v);

}  // namespace ontoforge
