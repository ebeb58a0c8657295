#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ontoforge/ontology.hpp"

namespace ontoforge {

enum class CorpusKind { kDiverse, kConceptual, kProfessional };

inline constexpr std::array<CorpusKind, 3> kAllCorpusKinds = {
    CorpusKind::kDiverse, CorpusKind::kConceptual, CorpusKind::kProfessional};

const char* to_string(CorpusKind kind);
/// Throws UsageError for anything but "diverse", "conceptual", "professional".
CorpusKind parse_corpus_kind(std::string_view name);

/// A rendered prompt plus the identity of the template that produced it.
struct PromptText {
  std::string text;
  std::string template_id;
  std::string template_version;
};

/// Text with `{name}` placeholders. Anything in braces that is not a
/// lowercase identifier is literal text. Values are substituted in a single
/// left-to-right pass, so braces inside values are never re-expanded.
class Template {
 public:
  Template() = default;
  /// Throws DataError if the body references a placeholder outside `allowed`.
  Template(std::string id, std::string body, const std::set<std::string>& allowed);

  const std::string& id() const noexcept { return id_; }
  const std::string& body() const noexcept { return body_; }
  /// Content digest (16 hex chars of SHA-256 of the body).
  const std::string& version() const noexcept { return version_; }
  const std::set<std::string>& placeholders() const noexcept { return placeholders_; }

  /// Throws DataError when a referenced placeholder has no value.
  PromptText render(const std::map<std::string, std::string>& values) const;

 private:
  std::string id_;
  std::string body_;
  std::string version_;
  std::set<std::string> placeholders_;
};

/// Every ontology-augmented corpus template must contain this text and no
/// plain template may; emitted training prompts are checked against it.
inline constexpr std::string_view kHypernymSlotSentinel = "Hypernyms:";

class TemplateSet {
 public:
  /// Reads the eight template files from `dir`.
  static TemplateSet load(const std::filesystem::path& dir);
  /// The built-in defaults (identical to the shipped templates/ directory).
  static TemplateSet defaults();
  /// Writes the built-in defaults to `dir` as editable files.
  static void write_defaults(const std::filesystem::path& dir);

  static TemplateSet from_bodies(const std::map<std::string, std::string>& files);

  const Template& plain(CorpusKind kind) const;
  const Template& ontology(CorpusKind kind) const;
  const Template& definition_completion() const { return definition_; }
  const Template& hypernym_query() const { return hypernym_; }

  /// template id -> version, for manifests.
  std::map<std::string, std::string> versions() const;

 private:
  std::map<CorpusKind, Template> plain_;
  std::map<CorpusKind, Template> onto_;
  Template definition_;
  Template hypernym_;
};

/// ", "-joined list, or "none" when empty.
std::string join_or_none(const std::vector<std::string>& items);

PromptText render_corpus_instruction(const TemplateSet& templates, CorpusKind kind,
                                     std::string_view concept_label);

PromptText render_corpus_instruction_with_ontology(const TemplateSet& templates,
                                                   CorpusKind kind,
                                                   const OntologyContext& ctx);

/// Few-shot when `examples` is non-empty, zero-shot otherwise.
PromptText render_definition_completion(
    const TemplateSet& templates, std::string_view concept_label,
    const std::vector<std::pair<std::string, std::string>>& examples);

PromptText render_hypernym_query(const TemplateSet& templates, std::string_view term,
                                 const std::optional<std::string>& definition);

}  // namespace ontoforge
