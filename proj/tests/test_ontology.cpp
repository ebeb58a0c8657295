#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <set>

#include "ontoforge/error.hpp"
#include "ontoforge/ontology.hpp"
#include "test_support.hpp"

namespace ontoforge {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;
using testing::TempDir;
using testing::write;

ConceptId id(const char* s) { return ConceptId(s); }

Concept make(const char* cid, const char* label, std::vector<const char*> parents = {},
             std::optional<std::string> def = std::nullopt) {
  Concept c;
  c.id = ConceptId(cid);
  c.label = label;
  for (auto p : parents) c.hypernyms.emplace_back(p);
  c.definition = std::move(def);
  return c;
}

std::string load_error(const OntologyFiles& files) {
  try {
    load_ontology(files);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

TEST(ConceptId, RejectsEmptyAndPaddedValues) {
  EXPECT_THROW(ConceptId(""), DataError);
  EXPECT_THROW(ConceptId(" 1"), DataError);
  EXPECT_THROW(ConceptId("1\t"), DataError);
  EXPECT_EQ(ConceptId("100005").str(), "100005");
}

TEST(LoadOntology, FixtureStatistics) {
  auto store = load_ontology(testing::tiny_snomed());
  EXPECT_EQ(store.stats(), (OntologyStats{12, 4, 11}));
  EXPECT_THAT(store.roots(), ElementsAre(id("100001"), id("100011")));
  const auto& asthma = store.at(id("100005"));
  EXPECT_EQ(asthma.label, "Asthma");
  EXPECT_THAT(asthma.hypernyms, ElementsAre(id("100003"), id("100004")));
  EXPECT_THAT(asthma.synonyms, ElementsAre("Bronchial asthma"));
  EXPECT_THAT(store.at(id("100010")).synonyms,
              ElementsAre("High blood pressure", "Arterial hypertension"));
}

TEST(LoadOntology, EdgeCountEqualsSumOfHypernymLists) {
  auto store = load_ontology(testing::tiny_snomed());
  std::size_t sum = 0;
  for (const auto& [cid, c] : store.concepts()) sum += c.hypernyms.size();
  EXPECT_EQ(sum, store.stats().is_a_edges);
}

TEST(LoadOntology, ThreeConceptStore) {
  TempDir dir;
  write(dir / "c.tsv", "A\tAlpha\nB\tBeta\nC\tGamma\n");
  write(dir / "r.tsv", "B\tA\nC\tA\n");
  auto store = load_ontology({dir / "c.tsv", dir / "r.tsv", std::nullopt});
  EXPECT_EQ(store.stats(), (OntologyStats{3, 0, 2}));
  EXPECT_THAT(store.roots(), ElementsAre(id("A")));
  EXPECT_THAT(store.children(id("A")), ElementsAre(id("B"), id("C")));
}

TEST(LoadOntology, SelfLoopReportsFileAndLine) {
  TempDir dir;
  write(dir / "concepts.tsv", "A\tAlpha\nB\tBeta\n");
  write(dir / "relations.tsv", "# child\tparent\nB\tA\nA\tA\n");
  auto msg = load_error({dir / "concepts.tsv", dir / "relations.tsv", std::nullopt});
  EXPECT_THAT(msg, HasSubstr("relations.tsv:3"));
  EXPECT_THAT(msg, HasSubstr("self-loop at A"));
}

TEST(LoadOntology, DanglingReferenceFails) {
  TempDir dir;
  write(dir / "concepts.tsv", "A\tAlpha\n");
  write(dir / "relations.tsv", "A\tZ\n");
  auto msg = load_error({dir / "concepts.tsv", dir / "relations.tsv", std::nullopt});
  EXPECT_THAT(msg, HasSubstr("relations.tsv:1"));
  EXPECT_THAT(msg, HasSubstr("dangling"));
}

TEST(LoadOntology, MalformedInputsFail) {
  TempDir dir;
  write(dir / "ok.tsv", "A\tAlpha\nB\tBeta\n");
  write(dir / "none.tsv", "");
  write(dir / "dup.tsv", "A\tAlpha\nA\tAgain\n");
  EXPECT_THAT(load_error({dir / "dup.tsv", dir / "none.tsv", std::nullopt}),
              HasSubstr("dup.tsv:2"));
  write(dir / "short.tsv", "A\n");
  EXPECT_THAT(load_error({dir / "short.tsv", dir / "none.tsv", std::nullopt}),
              HasSubstr("short.tsv:1"));
  write(dir / "dupedge.tsv", "B\tA\nB\tA\n");
  EXPECT_THAT(load_error({dir / "ok.tsv", dir / "dupedge.tsv", std::nullopt}),
              HasSubstr("dupedge.tsv:2"));
  write(dir / "kind.tsv", "A\tcomment\tx\n");
  EXPECT_THAT(load_error({dir / "ok.tsv", dir / "none.tsv", dir / "kind.tsv"}),
              HasSubstr("kind.tsv:1"));
  write(dir / "twodefs.tsv", "A\tdefinition\tx\nA\tdefinition\ty\n");
  EXPECT_THAT(load_error({dir / "ok.tsv", dir / "none.tsv", dir / "twodefs.tsv"}),
              HasSubstr("twodefs.tsv:2"));
  EXPECT_THROW(load_ontology({dir / "missing.tsv", dir / "none.tsv", std::nullopt}), DataError);
}

TEST(LoadOntology, SynonymEqualToLabelIsDropped) {
  TempDir dir;
  write(dir / "c.tsv", "A\tAlpha\n");
  write(dir / "r.tsv", "");
  write(dir / "d.tsv", "A\tsynonym\tAlpha\nA\tsynonym\tFirst letter\n");
  auto store = load_ontology({dir / "c.tsv", dir / "r.tsv", dir / "d.tsv"});
  EXPECT_THAT(store.at(id("A")).synonyms, ElementsAre("First letter"));
}

TEST(LoadOntology, Deterministic) {
  auto a = load_ontology(testing::tiny_snomed()).to_json().dump();
  auto b = load_ontology(testing::tiny_snomed()).to_json().dump();
  EXPECT_EQ(a, b);
}

TEST(FromConcepts, RejectsInvariantViolations) {
  EXPECT_THROW(OntologyStore::from_concepts({make("A", "a", {"A"})}), DataError);
  EXPECT_THROW(OntologyStore::from_concepts({make("A", "a", {"B"})}), DataError);
  EXPECT_THROW(OntologyStore::from_concepts({make("A", "a"), make("B", "b", {"A", "A"})}),
               DataError);
  EXPECT_THROW(OntologyStore::from_concepts({make("A", "a"), make("A", "b")}), DataError);
}

TEST(OntologyContext, PassesThroughSourceDefinition) {
  auto store = load_ontology(testing::tiny_snomed());
  auto ctx = ontology_context(store, id("100005"), {});
  EXPECT_EQ(ctx.concept_label, "Asthma");
  EXPECT_THAT(ctx.definition, HasSubstr("chronic inflammatory disease"));
  EXPECT_EQ(ctx.definition_provenance, DefinitionProvenance::kSource);
  EXPECT_THAT(ctx.hypernym_labels, ElementsAre("Respiratory disorder", "Inflammatory disorder"));
  EXPECT_THAT(ctx.synonym_labels, ElementsAre("Bronchial asthma"));
}

TEST(OntologyContext, FallsBackToCompletedDefinition) {
  auto store = load_ontology(testing::tiny_snomed());
  DefinitionMap completed{{id("100006"), "Inflammation of the bronchi."}};
  auto ctx = ontology_context(store, id("100006"), completed);
  EXPECT_EQ(ctx.definition, "Inflammation of the bronchi.");
  EXPECT_EQ(ctx.definition_provenance, DefinitionProvenance::kModelCompleted);
  EXPECT_STREQ(to_string(ctx.definition_provenance), "model-completed");
  // A source definition wins over a completed one.
  DefinitionMap other{{id("100005"), "ignored"}};
  EXPECT_EQ(ontology_context(store, id("100005"), other).definition_provenance,
            DefinitionProvenance::kSource);
}

TEST(OntologyContext, CapsKeepStoredOrder) {
  std::vector<Concept> concepts;
  std::vector<const char*> parents;
  static const char* names[] = {"P0", "P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9"};
  for (auto n : names) {
    concepts.push_back(make(n, n));
    parents.push_back(n);
  }
  concepts.push_back(make("X", "x", parents));
  auto store = OntologyStore::from_concepts(concepts);
  auto ctx = ontology_context(store, id("X"), {}, ContextCaps{8, 8});
  EXPECT_THAT(ctx.hypernym_labels, ElementsAre("P0", "P1", "P2", "P3", "P4", "P5", "P6", "P7"));
  EXPECT_EQ(ontology_context(store, id("X"), {}, ContextCaps::unlimited()).hypernym_labels.size(),
            10u);
}

TEST(OntologyContext, UnknownIdFails) {
  auto store = load_ontology(testing::tiny_snomed());
  EXPECT_THROW(ontology_context(store, id("999"), {}), DataError);
}

TEST(MissingDefinitions, SetDifferenceOverFixture) {
  auto store = load_ontology(testing::tiny_snomed());
  // Oracle: all ids minus those with a definition line in descriptions.tsv.
  std::set<std::string> defined;
  for (const auto& line : split_lines(read_file(testing::tiny_snomed().descriptions.value()))) {
    auto f = split(line, '\t');
    if (f.size() == 3 && f[1] == "definition") defined.insert(f[0]);
  }
  std::vector<ConceptId> expected;
  for (const auto& [cid, c] : store.concepts()) {
    if (!defined.contains(cid.str())) expected.push_back(cid);
  }
  EXPECT_EQ(missing_definition_concepts(store), expected);
  EXPECT_EQ(expected.size(), 8u);
  EXPECT_TRUE(missing_definition_concepts(OntologyStore{}).empty());
  EXPECT_TRUE(missing_definition_concepts(OntologyStore::from_concepts({make("A", "a", {}, "d")}))
                  .empty());
}

TEST(FewShot, SiblingsThenAncestors) {
  auto store = load_ontology(testing::tiny_snomed());
  auto ex = few_shot_examples(store, id("100006"), 3);
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].first, "Asthma");
  EXPECT_EQ(ex[1].first, "Pneumonia");
  EXPECT_EQ(ex[2].first, "Respiratory disorder");
}

TEST(FewShot, SingleExampleIsSmallestSibling) {
  auto store = load_ontology(testing::tiny_snomed());
  auto ex = few_shot_examples(store, id("100006"), 1);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].first, "Asthma");
}

TEST(FewShot, NeverQueryConceptNeverEmpty) {
  auto store = load_ontology(testing::tiny_snomed());
  for (const auto& [cid, c] : store.concepts()) {
    for (auto [label, def] : few_shot_examples(store, cid, 20)) {
      EXPECT_NE(label, c.label);
      EXPECT_FALSE(def.empty());
    }
  }
  auto bare = OntologyStore::from_concepts({make("A", "a"), make("B", "b", {"A"})});
  EXPECT_TRUE(few_shot_examples(bare, id("B"), 3).empty());
}

TEST(Validate, AcyclicFixture) {
  auto report = validate(load_ontology(testing::tiny_snomed()));
  EXPECT_EQ(report.summary(), "0 cycles, 0 orphans");
}

TEST(Validate, CycleAndOrphan) {
  auto store = OntologyStore::from_concepts(
      {make("R", "root"), make("A", "a", {"B"}), make("B", "b", {"A"}), make("C", "c", {"A"})});
  auto report = validate(store);
  ASSERT_EQ(report.cycles.size(), 1u);
  EXPECT_THAT(report.cycles[0], ElementsAre(id("A"), id("B")));
  EXPECT_THAT(report.orphans, ElementsAre(id("A"), id("B"), id("C")));
  EXPECT_EQ(report.summary(), "1 cycles, 3 orphans");
}

}  // namespace
}  // namespace ontoforge
