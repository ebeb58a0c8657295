#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontoforge/gateway.hpp"
#include "ontoforge/prompts.hpp"

namespace ontoforge {

// ---------------------------------------------------------------------------
// Hypernym discovery

inline constexpr std::size_t kMaxHypernymCandidates = 15;

struct HypernymItem {
  std::string term;
  std::string category;
  std::optional<std::string> definition;
  /// Case-folded, unique, in file order.
  std::vector<std::string> gold;
  /// Parsed model output, case-folded, at most kMaxHypernymCandidates.
  std::vector<std::string> predictions;
  std::string raw_output;
  std::string error;
};

/// Reads a SemEval-style pair: data lines `term<TAB>category`, gold lines
/// of tab-separated hypernyms, aligned by line.
std::vector<HypernymItem> load_hypernym_dataset(const std::filesystem::path& data_path,
                                                const std::filesystem::path& gold_path);

std::vector<std::string> parse_hypernym_output(std::string_view text);

/// 1-based position of the first prediction found in gold.
std::optional<std::size_t> first_match_rank(const HypernymItem& item);

/// Mean reciprocal rank; unmatched items contribute 0. Throws DataError on
/// an empty list.
double mrr(std::span<const HypernymItem> items);

struct EvalDefinitions {
  std::map<std::string, std::string> definitions;
  /// term -> reason the definition is missing.
  std::map<std::string, std::string> misses;
};

/// One zero-shot definition per unique term.
EvalDefinitions generate_eval_definitions(std::span<const HypernymItem> items, Gateway& gateway,
                                          const TemplateSet& templates, const GenParams& params,
                                          std::size_t parallelism = 1);

/// Queries the model for each item and fills raw_output/predictions (or
/// error). Uses item.definition when `use_definitions` is set.
void predict_hypernyms(std::span<HypernymItem> items, Gateway& gateway,
                       const TemplateSet& templates, const GenParams& params,
                       std::size_t parallelism, bool use_definitions);

// ---------------------------------------------------------------------------
// Multiple-choice QA

struct QaOption {
  std::string letter;
  std::string text;
};

struct QaItem {
  std::string dataset;
  std::string question;
  std::optional<std::string> context;
  std::vector<QaOption> options;
  std::string gold_letter;
  std::optional<std::string> predicted_letter;
  std::string raw_output;
  std::string error;
};

/// JSONL with question, options (letter -> text), optional context, answer,
/// optional dataset. `default_dataset` tags lines without a dataset field.
std::vector<QaItem> load_qa_dataset(const std::filesystem::path& path,
                                    const std::string& default_dataset);

/// Rule-ordered: a standalone option letter (optionally in parentheses or
/// followed by a period), then "answer is X", then an option's full text.
std::optional<std::string> extract_choice(std::string_view text,
                                          std::span<const QaOption> options);

struct AccuracyReport {
  std::size_t n = 0;
  std::size_t correct = 0;
  double fraction = 0.0;
  /// dataset -> (correct, n)
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_dataset;

  /// e.g. "75.0%"
  std::string percent() const;
};

AccuracyReport accuracy(std::span<const QaItem> items);

/// qa_<dataset>.txt templates with {question}, {options}, {context}.
class QaTemplates {
 public:
  /// Reads qa_*.txt from `dir`, falling back to the built-in defaults for
  /// any dataset without a file there.
  static QaTemplates load(const std::optional<std::filesystem::path>& dir);

  const Template& for_dataset(const std::string& dataset) const;
  PromptText render(const QaItem& item) const;

 private:
  std::map<std::string, Template> templates_;
};

/// Renders each item's prompt, queries the model and extracts a choice.
void predict_choices(std::span<QaItem> items, Gateway& gateway, const QaTemplates& templates,
                     const GenParams& params, std::size_t parallelism);

// ---------------------------------------------------------------------------
// Response distribution shift

struct ShiftInstruction {
  std::string id;
  std::string text;
};

struct ShiftItem {
  std::string instruction_id;
  std::optional<double> cosine;
  std::string response;
  std::string error;
};

struct ShiftReport {
  std::size_t n = 0;
  std::size_t excluded = 0;
  /// Mean over non-excluded items; absent when every item failed.
  std::optional<double> mean_cosine;
  std::vector<ShiftItem> per_item;
};

/// For each i: cosine(embed(model(instructions[i])), embed(reference[i])).
ShiftReport distribution_shift(std::span<const ShiftInstruction> instructions, Gateway& model,
                               std::span<const std::string> reference_responses,
                               Gateway& embedder, const GenParams& params,
                               std::size_t parallelism = 1);

}  // namespace ontoforge
