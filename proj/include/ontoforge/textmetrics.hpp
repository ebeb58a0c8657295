#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ontoforge {

/// Word tokens; never contains an empty string.
using TokenSeq = std::vector<std::string>;

struct ScoreBreakdown {
  double cosine = 0.0;
  double rouge_l = 0.0;
  double bleu_4 = 0.0;
  double hybrid = 0.0;

  friend bool operator==(const ScoreBreakdown&, const ScoreBreakdown&) = default;
};

/// Smoothing value substituted for a zero n-gram precision in BLEU-4.
inline constexpr double kBleuEpsilon = 1e-9;

/// Lowercases (ASCII, Latin-1, Latin Extended-A, Greek, Cyrillic), splits on
/// whitespace, strips leading/trailing ASCII punctuation per token.
TokenSeq tokenize(std::string_view text);

/// Lowercases UTF-8 text with the same table `tokenize` uses.
std::string fold_case(std::string_view text);

/// LCS-based F-measure (beta = 1). 0 if either side is empty.
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

/// Sentence BLEU with four n-gram orders, uniform weights, epsilon
/// smoothing and brevity penalty. 0 for an empty candidate.
double bleu_4(const TokenSeq& candidate, const TokenSeq& reference);

/// Cosine similarity clamped to [-1, 1]. Throws std::invalid_argument on a
/// dimension mismatch or a zero-norm operand.
double cosine(std::span<const double> u, std::span<const double> v);

/// Inconsistency score between the plain response `y` (candidate) and the
/// ontology-guided response `y_onto` (reference).
ScoreBreakdown hybrid_score(std::string_view y, std::string_view y_onto,
                            std::span<const double> e_y, std::span<const double> e_yo);

}  // namespace ontoforge
