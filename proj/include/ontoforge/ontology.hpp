#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ontoforge {

/// Opaque concept identifier (an SCTID or any other stable token).
class ConceptId {
 public:
  ConceptId() = default;
  /// Throws DataError if `value` is empty or has surrounding whitespace.
  explicit ConceptId(std::string value);

  const std::string& str() const noexcept { return value_; }

  friend auto operator<=>(const ConceptId&, const ConceptId&) = default;
  friend bool operator==(const ConceptId&, const ConceptId&) = default;

 private:
  std::string value_;
};

struct Concept {
  ConceptId id;
  std::string label;
  std::vector<std::string> synonyms;
  std::optional<std::string> definition;
  std::vector<ConceptId> hypernyms;
};

enum class DefinitionProvenance { kSource, kModelCompleted };

const char* to_string(DefinitionProvenance p);

struct ContextCaps {
  std::size_t max_hypernyms = 8;
  std::size_t max_synonyms = 8;

  static ContextCaps unlimited() {
    return {std::numeric_limits<std::size_t>::max(),
            std::numeric_limits<std::size_t>::max()};
  }
};

/// Ontology material injected into a prompt for one concept.
struct OntologyContext {
  std::string concept_label;
  std::string definition;
  DefinitionProvenance definition_provenance = DefinitionProvenance::kSource;
  std::vector<std::string> hypernym_labels;
  std::vector<std::string> synonym_labels;
};

struct OntologyStats {
  std::size_t concepts = 0;
  std::size_t definitions = 0;
  std::size_t is_a_edges = 0;

  friend bool operator==(const OntologyStats&, const OntologyStats&) = default;
};

struct ValidationReport {
  std::vector<ConceptId> roots;
  std::vector<ConceptId> self_loops;
  /// Each entry is one strongly connected component of size > 1, sorted.
  std::vector<std::vector<ConceptId>> cycles;
  /// Concepts with no path up to a root.
  std::vector<ConceptId> orphans;

  std::string summary() const;
};

struct OntologyFiles {
  std::filesystem::path concepts;
  std::filesystem::path relations;
  std::optional<std::filesystem::path> descriptions;
};

using DefinitionMap = std::map<ConceptId, std::string>;

/// Immutable after load. Iteration order is sorted by ConceptId.
class OntologyStore {
 public:
  using ConceptMap = std::map<ConceptId, Concept>;

  OntologyStore() = default;

  /// Builds a store from already-parsed concepts and checks referential
  /// integrity. Used by the loader and by tests that build graphs in memory.
  static OntologyStore from_concepts(std::vector<Concept> concepts);

  const ConceptMap& concepts() const noexcept { return concepts_; }
  const Concept* find(const ConceptId& id) const;
  /// Throws DataError for an unknown id.
  const Concept& at(const ConceptId& id) const;
  OntologyStats stats() const;
  std::vector<ConceptId> roots() const;
  /// Direct children of `id`, sorted.
  const std::vector<ConceptId>& children(const ConceptId& id) const;

  nlohmann::ordered_json to_json() const;

 private:
  ConceptMap concepts_;
  std::map<ConceptId, std::vector<ConceptId>> children_;
};

/// Parses the TSV interchange files. Errors carry "file:line: reason".
OntologyStore load_ontology(const OntologyFiles& files);

OntologyContext ontology_context(const OntologyStore& store, const ConceptId& id,
                                 const DefinitionMap& completed_defs,
                                 const ContextCaps& caps = {});

std::vector<ConceptId> missing_definition_concepts(const OntologyStore& store);

/// Up to `n` (label, definition) pairs from concepts with a source
/// definition: siblings first, then ancestors by distance, then the rest by
/// ConceptId. Never includes `id`.
std::vector<std::pair<std::string, std::string>> few_shot_examples(
    const OntologyStore& store, const ConceptId& id, std::size_t n);

ValidationReport validate(const OntologyStore& store);

}  // namespace ontoforge
