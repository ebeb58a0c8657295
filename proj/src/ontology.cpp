#include "ontoforge/ontology.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>
#include <sstream>

#include "ontoforge/error.hpp"
#include "ontoforge/io.hpp"

namespace ontoforge {

ConceptId::ConceptId(std::string value) : value_(std::move(value)) {
  if (value_.empty()) throw DataError("empty concept id");
  if (trim(value_).size() != value_.size()) {
    throw DataError("concept id '" + value_ + "' has surrounding whitespace");
  }
}

const char* to_string(DefinitionProvenance p) {
  return p == DefinitionProvenance::kSource ? "source" : "model-completed";
}

std::string ValidationReport::summary() const {
  std::ostringstream ss;
  ss << cycles.size() << " cycles, " << orphans.size() << " orphans";
  return ss.str();
}

namespace {

const std::vector<ConceptId> kNoChildren;

std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line) + ": ";
}

/// Yields (line number, fields) for each non-blank, non-comment line.
template <typename Fn>
void for_each_record(const std::filesystem::path& file, Fn&& fn) {
  const auto text = read_file(file);
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (trim(line).empty() || line.front() == '#') continue;
    fn(i + 1, split(line, '\t'));
  }
}

ConceptId parse_id(const std::string& raw, const std::filesystem::path& file,
                   std::size_t line) {
  try {
    return ConceptId(raw);
  } catch (const DataError& e) {
    throw DataError(where(file, line) + e.what());
  }
}

}  // namespace

OntologyStore OntologyStore::from_concepts(std::vector<Concept> concepts) {
  OntologyStore store;
  for (auto& c : concepts) {
    if (c.label.empty()) throw DataError("concept " + c.id.str() + " has empty label");
    auto id = c.id;
    if (!store.concepts_.emplace(id, std::move(c)).second) {
      throw DataError("duplicate concept id " + id.str());
    }
  }
  for (const auto& [id, c] : store.concepts_) {
    std::set<ConceptId> seen;
    for (const auto& h : c.hypernyms) {
      if (h == id) throw DataError("self-loop at " + id.str());
      if (!store.concepts_.contains(h)) {
        throw DataError("dangling hypernym " + h.str() + " of " + id.str());
      }
      if (!seen.insert(h).second) {
        throw DataError("duplicate hypernym " + h.str() + " of " + id.str());
      }
      store.children_[h].push_back(id);
    }
  }
  return store;
}

const Concept* OntologyStore::find(const ConceptId& id) const {
  auto it = concepts_.find(id);
  return it == concepts_.end() ? nullptr : &it->second;
}

const Concept& OntologyStore::at(const ConceptId& id) const {
  if (const auto* c = find(id)) return *c;
  throw DataError("unknown concept id " + id.str());
}

OntologyStats OntologyStore::stats() const {
  OntologyStats s;
  s.concepts = concepts_.size();
  for (const auto& [id, c] : concepts_) {
    if (c.definition) ++s.definitions;
    s.is_a_edges += c.hypernyms.size();
  }
  return s;
}

std::vector<ConceptId> OntologyStore::roots() const {
  std::vector<ConceptId> out;
  for (const auto& [id, c] : concepts_) {
    if (c.hypernyms.empty()) out.push_back(id);
  }
  return out;
}

const std::vector<ConceptId>& OntologyStore::children(const ConceptId& id) const {
  auto it = children_.find(id);
  return it == children_.end() ? kNoChildren : it->second;
}

nlohmann::ordered_json OntologyStore::to_json() const {
  auto s = stats();
  nlohmann::ordered_json j;
  j["statistics"] = {{"concepts", s.concepts},
                     {"definitions", s.definitions},
                     {"is_a_edges", s.is_a_edges}};
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [id, c] : concepts_) {
    nlohmann::ordered_json cj;
    cj["id"] = id.str();
    cj["label"] = c.label;
    cj["synonyms"] = c.synonyms;
    cj["definition"] = c.definition ? nlohmann::ordered_json(*c.definition)
                                    : nlohmann::ordered_json(nullptr);
    auto hyp = nlohmann::ordered_json::array();
    for (const auto& h : c.hypernyms) hyp.push_back(h.str());
    cj["hypernyms"] = std::move(hyp);
    arr.push_back(std::move(cj));
  }
  j["concepts"] = std::move(arr);
  return j;
}

OntologyStore load_ontology(const OntologyFiles& files) {
  std::map<ConceptId, Concept> by_id;
  for_each_record(files.concepts, [&](std::size_t line, const std::vector<std::string>& f) {
    if (f.size() != 2) {
      throw DataError(where(files.concepts, line) + "expected 2 tab-separated fields, got " +
                      std::to_string(f.size()));
    }
    auto id = parse_id(f[0], files.concepts, line);
    auto label = std::string(trim(f[1]));
    if (label.empty()) throw DataError(where(files.concepts, line) + "empty label");
    if (by_id.contains(id)) {
      throw DataError(where(files.concepts, line) + "duplicate concept id " + id.str());
    }
    by_id.emplace(id, Concept{id, std::move(label), {}, std::nullopt, {}});
  });

  for_each_record(files.relations, [&](std::size_t line, const std::vector<std::string>& f) {
    if (f.size() != 2) {
      throw DataError(where(files.relations, line) + "expected 2 tab-separated fields, got " +
                      std::to_string(f.size()));
    }
    auto child = parse_id(f[0], files.relations, line);
    auto parent = parse_id(f[1], files.relations, line);
    if (child == parent) {
      throw DataError(where(files.relations, line) + "self-loop at " + child.str());
    }
    auto it = by_id.find(child);
    if (it == by_id.end()) {
      throw DataError(where(files.relations, line) + "dangling reference: unknown child " +
                      child.str());
    }
    if (!by_id.contains(parent)) {
      throw DataError(where(files.relations, line) +
                      "dangling hypernym reference: unknown parent " + parent.str());
    }
    auto& hyps = it->second.hypernyms;
    if (std::find(hyps.begin(), hyps.end(), parent) != hyps.end()) {
      throw DataError(where(files.relations, line) + "duplicate edge " + child.str() + " -> " +
                      parent.str());
    }
    hyps.push_back(parent);
  });

  if (files.descriptions) {
    const auto& path = *files.descriptions;
    for_each_record(path, [&](std::size_t line, const std::vector<std::string>& f) {
      if (f.size() != 3) {
        throw DataError(where(path, line) + "expected 3 tab-separated fields, got " +
                        std::to_string(f.size()));
      }
      auto id = parse_id(f[0], path, line);
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw DataError(where(path, line) + "dangling reference: unknown concept " + id.str());
      }
      auto text = std::string(trim(f[2]));
      if (text.empty()) throw DataError(where(path, line) + "empty description text");
      auto& c = it->second;
      if (f[1] == "synonym") {
        if (text != c.label) c.synonyms.push_back(std::move(text));
      } else if (f[1] == "definition") {
        if (c.definition) {
          throw DataError(where(path, line) + "second definition for " + id.str());
        }
        c.definition = std::move(text);
      } else {
        throw DataError(where(path, line) + "unknown description kind '" + f[1] + "'");
      }
    });
  }

  std::vector<Concept> concepts;
  concepts.reserve(by_id.size());
  for (auto& [id, c] : by_id) concepts.push_back(std::move(c));
  return OntologyStore::from_concepts(std::move(concepts));
}

OntologyContext ontology_context(const OntologyStore& store, const ConceptId& id,
                                 const DefinitionMap& completed_defs, const ContextCaps& caps) {
  const auto& c = store.at(id);
  OntologyContext ctx;
  ctx.concept_label = c.label;
  if (c.definition) {
    ctx.definition = *c.definition;
  } else if (auto it = completed_defs.find(id); it != completed_defs.end() && !it->second.empty()) {
    ctx.definition = it->second;
    ctx.definition_provenance = DefinitionProvenance::kModelCompleted;
  }
  for (const auto& h : c.hypernyms) {
    if (ctx.hypernym_labels.size() >= caps.max_hypernyms) break;
    ctx.hypernym_labels.push_back(store.at(h).label);
  }
  for (const auto& s : c.synonyms) {
    if (ctx.synonym_labels.size() >= caps.max_synonyms) break;
    ctx.synonym_labels.push_back(s);
  }
  return ctx;
}

std::vector<ConceptId> missing_definition_concepts(const OntologyStore& store) {
  std::vector<ConceptId> out;
  for (const auto& [id, c] : store.concepts()) {
    if (!c.definition) out.push_back(id);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> few_shot_examples(const OntologyStore& store,
                                                                   const ConceptId& id,
                                                                   std::size_t n) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto* self = store.find(id);
  std::set<ConceptId> taken{id};

  auto take = [&](const ConceptId& cand) {
    if (out.size() >= n || taken.contains(cand)) return;
    const auto& c = store.at(cand);
    if (!c.definition || c.definition->empty()) return;
    taken.insert(cand);
    out.emplace_back(c.label, *c.definition);
  };

  if (self) {
    std::set<ConceptId> siblings;
    for (const auto& parent : self->hypernyms) {
      for (const auto& child : store.children(parent)) siblings.insert(child);
    }
    for (const auto& s : siblings) take(s);

    // Ancestors level by level; within a level, by ConceptId.
    std::set<ConceptId> visited{id};
    std::set<ConceptId> level(self->hypernyms.begin(), self->hypernyms.end());
    while (!level.empty() && out.size() < n) {
      std::set<ConceptId> next;
      for (const auto& a : level) {
        if (!visited.insert(a).second) continue;
        take(a);
        for (const auto& h : store.at(a).hypernyms) {
          if (!visited.contains(h)) next.insert(h);
        }
      }
      level = std::move(next);
    }
  }
  for (const auto& [cid, c] : store.concepts()) {
    if (out.size() >= n) break;
    take(cid);
  }
  return out;
}

ValidationReport validate(const OntologyStore& store) {
  ValidationReport report;
  report.roots = store.roots();
  for (const auto& [id, c] : store.concepts()) {
    if (std::find(c.hypernyms.begin(), c.hypernyms.end(), id) != c.hypernyms.end()) {
      report.self_loops.push_back(id);
    }
  }

  // Tarjan's SCC over child -> parent edges, iterative.
  const auto& concepts = store.concepts();
  std::map<ConceptId, std::size_t> index, low;
  std::set<ConceptId> on_stack;
  std::vector<ConceptId> stack;
  std::size_t counter = 0;
  struct Frame {
    ConceptId node;
    std::size_t next_edge;
  };
  for (const auto& [root, unused] : concepts) {
    if (index.contains(root)) continue;
    std::vector<Frame> frames{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack.insert(root);
    while (!frames.empty()) {
      auto& fr = frames.back();
      const auto& hyps = concepts.at(fr.node).hypernyms;
      if (fr.next_edge < hyps.size()) {
        const auto& w = hyps[fr.next_edge++];
        if (!index.contains(w)) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack.insert(w);
          frames.push_back({w, 0});
        } else if (on_stack.contains(w)) {
          low[fr.node] = std::min(low[fr.node], index[w]);
        }
        continue;
      }
      auto v = fr.node;
      frames.pop_back();
      if (!frames.empty()) {
        auto& parent = frames.back().node;
        low[parent] = std::min(low[parent], low[v]);
      }
      if (low[v] == index[v]) {
        std::vector<ConceptId> component;
        while (true) {
          auto w = stack.back();
          stack.pop_back();
          on_stack.erase(w);
          component.push_back(w);
          if (w == v) break;
        }
        if (component.size() > 1) {
          std::sort(component.begin(), component.end());
          report.cycles.push_back(std::move(component));
        }
      }
    }
  }
  std::sort(report.cycles.begin(), report.cycles.end());

  // Reachability downward from roots.
  std::set<ConceptId> reached;
  std::deque<ConceptId> queue(report.roots.begin(), report.roots.end());
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    if (!reached.insert(v).second) continue;
    for (const auto& ch : store.children(v)) queue.push_back(ch);
  }
  for (const auto& [id, c] : concepts) {
    if (!reached.contains(id)) report.orphans.push_back(id);
  }
  return report;
}

}  // namespace ontoforge
