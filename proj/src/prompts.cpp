#include "ontoforge/prompts.hpp"

#include "default_templates.hpp"
#include "ontoforge/digest.hpp"
#include "ontoforge/error.hpp"
#include "ontoforge/io.hpp"

namespace ontoforge {

namespace {

bool is_ident_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

/// Calls on_text for literal runs and on_slot for each `{name}` placeholder.
template <typename OnText, typename OnSlot>
void scan(std::string_view body, OnText&& on_text, OnSlot&& on_slot) {
  std::size_t i = 0, lit = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_ident_char(body[j])) ++j;
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        on_text(body.substr(lit, i - lit));
        on_slot(body.substr(i + 1, j - i - 1));
        i = lit = j + 1;
        continue;
      }
    }
    ++i;
  }
  on_text(body.substr(lit));
}

const std::set<std::string> kPlainSlots = {"concept"};
const std::set<std::string> kOntoSlots = {"concept", "definition", "hypernyms", "synonyms"};
const std::set<std::string> kDefinitionSlots = {"concept", "term", "examples"};
const std::set<std::string> kHypernymSlots = {"term", "concept", "definition"};

std::string file_name(CorpusKind kind, bool onto) {
  return std::string(to_string(kind)) + (onto ? "_onto.txt" : ".txt");
}

std::string single_line(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\r') continue;
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out;
}

}  // namespace

const char* to_string(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::kDiverse: return "diverse";
    case CorpusKind::kConceptual: return "conceptual";
    case CorpusKind::kProfessional: return "professional";
  }
  return "?";
}

CorpusKind parse_corpus_kind(std::string_view name) {
  for (auto k : kAllCorpusKinds) {
    if (name == to_string(k)) return k;
  }
  throw UsageError("unknown corpus kind '" + std::string(name) + "'");
}

Template::Template(std::string id, std::string body, const std::set<std::string>& allowed)
    : id_(std::move(id)), body_(std::move(body)) {
  // A file's final newline is not part of the prompt.
  while (!body_.empty() && (body_.back() == '\n' || body_.back() == '\r')) body_.pop_back();
  scan(body_, [](std::string_view) {},
       [&](std::string_view name) { placeholders_.emplace(name); });
  for (const auto& p : placeholders_) {
    if (!allowed.contains(p)) {
      throw DataError("template " + id_ + " uses placeholder {" + p + "} which is not allowed");
    }
  }
  version_ = sha256_hex(body_).substr(0, 16);
}

PromptText Template::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(body_.size() + 64);
  scan(body_, [&](std::string_view text) { out.append(text); },
       [&](std::string_view name) {
         auto it = values.find(std::string(name));
         if (it == values.end()) {
           throw DataError("template " + id_ + ": no value for {" + std::string(name) + "}");
         }
         out.append(it->second);
       });
  return PromptText{std::move(out), id_, version_};
}

TemplateSet TemplateSet::from_bodies(const std::map<std::string, std::string>& files) {
  auto get = [&](const std::string& name) -> const std::string& {
    auto it = files.find(name);
    if (it == files.end()) throw DataError("template missing: " + name);
    return it->second;
  };
  TemplateSet set;
  for (auto kind : kAllCorpusKinds) {
    auto pname = file_name(kind, false);
    auto oname = file_name(kind, true);
    Template plain(pname, get(pname), kPlainSlots);
    Template onto(oname, get(oname), kOntoSlots);
    if (plain.body().find(kHypernymSlotSentinel) != std::string::npos) {
      throw DataError("template " + pname + " must not contain the ontology block marker '" +
                      std::string(kHypernymSlotSentinel) + "'");
    }
    if (onto.body().find(kHypernymSlotSentinel) == std::string::npos ||
        !onto.placeholders().contains("hypernyms")) {
      throw DataError("template " + oname + " must contain '" +
                      std::string(kHypernymSlotSentinel) + " {hypernyms}'");
    }
    set.plain_.emplace(kind, std::move(plain));
    set.onto_.emplace(kind, std::move(onto));
  }
  set.definition_ = Template("definition_fewshot.txt", get("definition_fewshot.txt"),
                             kDefinitionSlots);
  set.hypernym_ = Template("hypernym_query.txt", get("hypernym_query.txt"), kHypernymSlots);
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (auto kind : kAllCorpusKinds) {
    for (bool onto : {false, true}) {
      auto name = file_name(kind, onto);
      files[name] = read_file(dir / name);
    }
  }
  for (const char* name : {"definition_fewshot.txt", "hypernym_query.txt"}) {
    files[name] = read_file(dir / name);
  }
  return from_bodies(files);
}

TemplateSet TemplateSet::defaults() {
  std::map<std::string, std::string> files;
  for (const auto& [name, body] : detail::default_template_files()) {
    if (!name.starts_with("qa_")) files.emplace(name, body);
  }
  return from_bodies(files);
}

void TemplateSet::write_defaults(const std::filesystem::path& dir) {
  for (const auto& [name, body] : detail::default_template_files()) {
    write_file_atomic(dir / name, body);
  }
}

const Template& TemplateSet::plain(CorpusKind kind) const {
  auto it = plain_.find(kind);
  if (it == plain_.end()) throw DataError(std::string("no plain template for ") + to_string(kind));
  return it->second;
}

const Template& TemplateSet::ontology(CorpusKind kind) const {
  auto it = onto_.find(kind);
  if (it == onto_.end()) {
    throw DataError(std::string("no ontology template for ") + to_string(kind));
  }
  return it->second;
}

std::map<std::string, std::string> TemplateSet::versions() const {
  std::map<std::string, std::string> out;
  for (const auto& [k, t] : plain_) out[t.id()] = t.version();
  for (const auto& [k, t] : onto_) out[t.id()] = t.version();
  out[definition_.id()] = definition_.version();
  out[hypernym_.id()] = hypernym_.version();
  return out;
}

std::string join_or_none(const std::vector<std::string>& items) {
  if (items.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

PromptText render_corpus_instruction(const TemplateSet& templates, CorpusKind kind,
                                     std::string_view concept_label) {
  if (concept_label.empty()) throw DataError("empty concept label");
  return templates.plain(kind).render({{"concept", std::string(concept_label)}});
}

PromptText render_corpus_instruction_with_ontology(const TemplateSet& templates,
                                                   CorpusKind kind,
                                                   const OntologyContext& ctx) {
  if (ctx.concept_label.empty()) throw DataError("empty concept label");
  return templates.ontology(kind).render({
      {"concept", ctx.concept_label},
      {"definition", ctx.definition.empty() ? "none" : single_line(ctx.definition)},
      {"hypernyms", join_or_none(ctx.hypernym_labels)},
      {"synonyms", join_or_none(ctx.synonym_labels)},
  });
}

PromptText render_definition_completion(
    const TemplateSet& templates, std::string_view concept_label,
    const std::vector<std::pair<std::string, std::string>>& examples) {
  if (concept_label.empty()) throw DataError("empty concept label");
  std::string block;
  for (const auto& [term, def] : examples) {
    block += single_line(term) + ": " + single_line(def) + "\n";
  }
  if (!block.empty()) block += "\n";
  return templates.definition_completion().render({
      {"concept", std::string(concept_label)},
      {"term", std::string(concept_label)},
      {"examples", block},
  });
}

PromptText render_hypernym_query(const TemplateSet& templates, std::string_view term,
                                 const std::optional<std::string>& definition) {
  if (term.empty()) throw DataError("empty hypernym query term");
  std::string block;
  if (definition) block = "Definition: " + single_line(*definition) + "\n";
  return templates.hypernym_query().render({
      {"term", std::string(term)},
      {"concept", std::string(term)},
      {"definition", block},
  });
}

}  // namespace ontoforge
