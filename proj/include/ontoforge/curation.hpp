#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontoforge/ontology.hpp"
#include "ontoforge/prompts.hpp"
#include "ontoforge/textmetrics.hpp"

namespace ontoforge {

inline constexpr const char* kFlagEmptyY = "empty_y";
inline constexpr const char* kFlagEmptyYOnto = "empty_y_onto";
inline constexpr const char* kFlagRefusal = "refusal";

/// One concept x one corpus kind: the plain and ontology-guided responses
/// and, once scored, their inconsistency score.
struct GenerationRecord {
  ConceptId concept_id;
  CorpusKind kind = CorpusKind::kDiverse;
  PromptText instruction;
  PromptText onto_instruction;
  std::string y;
  std::string y_onto;
  std::optional<ScoreBreakdown> scores;
  std::set<std::string> flags;
  /// Generation or embedding failure, if any.
  std::string error;

  bool flagged() const noexcept { return !flags.empty(); }
  /// Unflagged and scored: the only records that take part in selection.
  bool eligible() const noexcept { return !flagged() && scores.has_value(); }

  /// Sets flags from the response texts (empty or refusal).
  void derive_flags();

  nlohmann::ordered_json to_json() const;
  static GenerationRecord from_json(const nlohmann::json& j);
};

struct SftExample {
  std::string instruction;
  std::string input;
  std::string output;
};

struct DpoExample {
  std::string prompt;
  std::string chosen;
  std::string rejected;
};

/// Per-kind selections, indexed by CorpusKind order.
struct Selection {
  std::array<std::vector<GenerationRecord>, 3> by_kind;

  const std::vector<GenerationRecord>& operator[](CorpusKind k) const {
    return by_kind[static_cast<std::size_t>(k)];
  }
  std::size_t total() const;
};

/// For each kind: eligible records ascending by hybrid score, ties by
/// ConceptId, first min(k, available) kept.
Selection rank_and_select(const std::vector<GenerationRecord>& records, std::size_t k);

SftExample to_sft(const GenerationRecord& r);
DpoExample to_dpo(const GenerationRecord& r);

/// Writes sft.jsonl (kinds in diverse, conceptual, professional order).
std::size_t emit_sft(const Selection& selected, const std::filesystem::path& path);

struct DpoEmitResult {
  std::size_t emitted = 0;
  /// Records whose two responses were byte-identical.
  std::size_t skipped_identical = 0;
};

DpoEmitResult emit_dpo(const Selection& selected, const std::filesystem::path& path);

enum class Metric { kCosine, kRougeL, kBleu4, kHybrid };

inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::kCosine, Metric::kRougeL,
                                                      Metric::kBleu4, Metric::kHybrid};

const char* to_string(Metric m);
/// Closed value range of a metric, e.g. [-1, 3] for hybrid.
std::pair<double, double> metric_range(Metric m);
double metric_value(const ScoreBreakdown& s, Metric m);

struct ScoreHistogram {
  Metric metric = Metric::kHybrid;
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts;
};

/// Uniform bins of `bin_width` over `[lo, hi]`; bins are right-open except
/// the last, which is closed. Out-of-range values clamp to the end bins.
ScoreHistogram make_histogram(Metric metric, const std::vector<double>& values,
                              double bin_width);

struct SummaryStats {
  std::size_t n = 0;
  std::optional<double> mean;
  std::optional<double> median;
  /// Population standard deviation.
  std::optional<double> stdev;
};

SummaryStats summarize(std::vector<double> values);

struct ScoreReport {
  /// Scope is "all" or a corpus kind name.
  std::map<std::string, std::vector<ScoreHistogram>> histograms;
  std::map<std::string, std::map<std::string, SummaryStats>> stats;
  std::size_t scored_records = 0;
  std::size_t total_records = 0;

  nlohmann::ordered_json to_json() const;
};

ScoreReport score_report(const std::vector<GenerationRecord>& records, double bin_width);

/// One audit entry per record: rank among eligible records of its kind and
/// whether it was selected.
nlohmann::ordered_json selection_manifest(const std::vector<GenerationRecord>& records,
                                          const Selection& selected, std::size_t k);

}  // namespace ontoforge
