#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <random>

#include "ontoforge/curation.hpp"
#include "ontoforge/io.hpp"
#include "test_support.hpp"

namespace ontoforge {
namespace {

using ::testing::ElementsAre;
using testing::TempDir;

GenerationRecord record(const std::string& cid, double hybrid,
                        CorpusKind kind = CorpusKind::kDiverse) {
  GenerationRecord r;
  r.concept_id = ConceptId(cid);
  r.kind = kind;
  r.instruction = PromptText{"Describe " + cid + ".", "diverse.txt", "v"};
  r.onto_instruction = PromptText{"Hypernyms: x\nDescribe " + cid + ".", "diverse_onto.txt", "v"};
  r.y = "plain answer about " + cid;
  r.y_onto = "ontology answer about " + cid;
  ScoreBreakdown s;
  s.hybrid = hybrid;
  r.scores = s;
  return r;
}

std::vector<std::string> ids(const std::vector<GenerationRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.concept_id.str());
  return out;
}

std::size_t count_lines(const std::filesystem::path& p) { return split_lines(read_file(p)).size(); }

TEST(Select, BottomKByHybrid) {
  std::vector<GenerationRecord> rs = {record("c1", 2.9), record("c2", 0.5), record("c3", 1.2),
                                      record("c4", 3.0)};
  auto sel = rank_and_select(rs, 2);
  EXPECT_THAT(ids(sel[CorpusKind::kDiverse]), ElementsAre("c2", "c3"));
  EXPECT_TRUE(sel[CorpusKind::kConceptual].empty());
  EXPECT_EQ(sel.total(), 2u);
}

TEST(Select, TiesBreakByConceptId) {
  std::vector<GenerationRecord> rs = {record("b", 1.2), record("a", 1.2), record("c", 0.1)};
  EXPECT_THAT(ids(rank_and_select(rs, 3)[CorpusKind::kDiverse]), ElementsAre("c", "a", "b"));
  EXPECT_THAT(ids(rank_and_select(rs, 2)[CorpusKind::kDiverse]), ElementsAre("c", "a"));
}

TEST(Select, KindsAreIndependent) {
  std::vector<GenerationRecord> rs = {record("a", 2.0, CorpusKind::kDiverse),
                                      record("a", 0.1, CorpusKind::kProfessional),
                                      record("b", 0.2, CorpusKind::kDiverse)};
  auto sel = rank_and_select(rs, 1);
  EXPECT_THAT(ids(sel[CorpusKind::kDiverse]), ElementsAre("b"));
  EXPECT_THAT(ids(sel[CorpusKind::kProfessional]), ElementsAre("a"));
}

TEST(Select, PaperScaleKKeepsEverything) {
  std::vector<GenerationRecord> rs;
  for (int i = 0; i < 300; ++i) rs.push_back(record("c" + std::to_string(1000 + i), (i * 37 % 300) / 100.0));
  auto sel = rank_and_select(rs, 100000);
  EXPECT_EQ(sel[CorpusKind::kDiverse].size(), 300u);
  EXPECT_TRUE(std::is_sorted(sel[CorpusKind::kDiverse].begin(), sel[CorpusKind::kDiverse].end(),
                             [](const auto& a, const auto& b) { return a.scores->hybrid < b.scores->hybrid; }));
}

TEST(Select, FlaggedAndUnscoredExcluded) {
  auto flagged = record("a", 0.0);
  flagged.flags.insert(kFlagRefusal);
  auto unscored = record("b", 0.0);
  unscored.scores.reset();
  auto sel = rank_and_select({flagged, unscored, record("c", 2.0)}, 5);
  EXPECT_THAT(ids(sel[CorpusKind::kDiverse]), ElementsAre("c"));
}

TEST(Select, SizeIsMinOfKAndEligibleOnRandomSets) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> score(-1.0, 3.0);
  std::bernoulli_distribution flag(0.2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GenerationRecord> rs;
    std::array<std::size_t, 3> eligible{};
    std::size_t n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      auto kind = kAllCorpusKinds[rng() % 3];
      auto r = record("c" + std::to_string(rng() % 1000000) + "_" + std::to_string(i), score(rng), kind);
      if (flag(rng)) r.flags.insert(kFlagEmptyY);
      if (!r.flagged()) ++eligible[static_cast<std::size_t>(kind)];
      rs.push_back(std::move(r));
    }
    std::size_t k = 1 + rng() % 15;
    auto sel = rank_and_select(rs, k);
    for (auto kind : kAllCorpusKinds) {
      const auto& v = sel[kind];
      ASSERT_EQ(v.size(), std::min(k, eligible[static_cast<std::size_t>(kind)]));
      for (const auto& r : v) ASSERT_FALSE(r.flagged());
      // Every selected score is <= every unselected eligible score of that kind.
      if (!v.empty()) {
        double worst = v.back().scores->hybrid;
        std::size_t below = 0;
        for (const auto& r : rs) below += r.kind == kind && r.eligible() && r.scores->hybrid < worst;
        ASSERT_LE(below, v.size());
      }
    }
  }
}

TEST(Flags, DeriveFromTexts) {
  auto r = record("a", 0.0);
  r.y = "  ";
  r.y_onto = "I'm sorry, but I cannot answer.";
  r.derive_flags();
  EXPECT_THAT(r.flags, ElementsAre(kFlagEmptyY, kFlagRefusal));
  EXPECT_FALSE(r.eligible());
}

TEST(Record, JsonRoundTrip) {
  auto r = record("100005", 1.25, CorpusKind::kConceptual);
  r.scores->cosine = 0.5;
  r.scores->rouge_l = 0.25;
  r.scores->bleu_4 = 0.5;
  r.flags.insert(kFlagRefusal);
  r.error = "x";
  auto back = GenerationRecord::from_json(nlohmann::json::parse(dump_line(r.to_json())));
  EXPECT_EQ(dump_line(back.to_json()), dump_line(r.to_json()));
}

TEST(Emit, SftAndDpoFiles) {
  TempDir dir;
  std::vector<GenerationRecord> rs;
  for (auto kind : kAllCorpusKinds) {
    rs.push_back(record("a", 0.1, kind));
    rs.push_back(record("b", 0.2, kind));
  }
  rs[0].y_onto = "line one\nline \"two\"";
  rs[1].y = rs[1].y_onto;
  auto sel = rank_and_select(rs, 2);
  EXPECT_EQ(emit_sft(sel, dir / "sft.jsonl"), 6u);
  EXPECT_EQ(count_lines(dir / "sft.jsonl"), 6u);
  auto lines = split_lines(read_file(dir / "sft.jsonl"));
  auto first = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(first["instruction"], "Describe a.");
  EXPECT_EQ(first["input"], "");
  EXPECT_EQ(first["output"], "line one\nline \"two\"");
  EXPECT_EQ(nlohmann::json::parse(lines[2])["instruction"], "Describe a.");

  auto dpo = emit_dpo(sel, dir / "dpo.jsonl");
  EXPECT_EQ(dpo.emitted, 5u);
  EXPECT_EQ(dpo.skipped_identical, 1u);
  for (const auto& line : split_lines(read_file(dir / "dpo.jsonl"))) {
    auto j = nlohmann::json::parse(line);
    EXPECT_NE(j["chosen"], j["rejected"]);
  }
  auto d0 = nlohmann::json::parse(split_lines(read_file(dir / "dpo.jsonl"))[0]);
  EXPECT_EQ(d0["prompt"], "Describe a.");
  EXPECT_EQ(d0["chosen"], rs[0].y_onto);
  EXPECT_EQ(d0["rejected"], rs[0].y);

  auto before = read_file(dir / "sft.jsonl");
  emit_sft(sel, dir / "sft.jsonl");
  EXPECT_EQ(read_file(dir / "sft.jsonl"), before);
}

TEST(Histogram, HandBinnedExample) {
  auto h = make_histogram(Metric::kHybrid, {0.5, 1.2, 2.9, 3.0}, 1.0);
  EXPECT_THAT(h.counts, ElementsAre(0u, 1u, 1u, 2u));
  EXPECT_THAT(h.bin_edges, ElementsAre(-1.0, 0.0, 1.0, 2.0, 3.0));
}

TEST(Histogram, BoundariesAndRanges) {
  auto h = make_histogram(Metric::kRougeL, {0.0, 0.25, 0.5, 1.0}, 0.25);
  EXPECT_THAT(h.counts, ElementsAre(1u, 1u, 1u, 1u));
  auto c = make_histogram(Metric::kCosine, {-1.0, 1.0}, 0.5);
  EXPECT_THAT(c.counts, ElementsAre(1u, 0u, 0u, 1u));
  auto uneven = make_histogram(Metric::kHybrid, {3.0}, 0.3);
  EXPECT_EQ(uneven.bin_edges.back(), 3.0);
  EXPECT_EQ(uneven.counts.back(), 1u);
  EXPECT_EQ(uneven.counts.size() + 1, uneven.bin_edges.size());
}

TEST(Histogram, CountsSumToInput) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 3.0);
  std::vector<double> v(1000);
  for (auto& x : v) x = u(rng);
  for (double w : {0.1, 0.25, 0.3, 1.0, 7.0}) {
    auto h = make_histogram(Metric::kHybrid, v, w);
    std::size_t sum = 0;
    for (auto c : h.counts) sum += c;
    EXPECT_EQ(sum, v.size()) << w;
  }
}

TEST(Summary, PopulationStatistics) {
  auto s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(*s.mean, 2.5);
  EXPECT_DOUBLE_EQ(*s.median, 2.5);
  EXPECT_DOUBLE_EQ(*s.stdev, std::sqrt(1.25));
  auto e = summarize({});
  EXPECT_FALSE(e.mean || e.median || e.stdev);
}

TEST(Report, CountsSumToScoredRecords) {
  std::vector<GenerationRecord> rs = {record("a", 0.5), record("b", 1.2),
                                      record("c", 2.9, CorpusKind::kConceptual), record("d", 3.0)};
  auto unscored = record("e", 0.0);
  unscored.scores.reset();
  rs.push_back(unscored);
  auto report = score_report(rs, 1.0);
  EXPECT_EQ(report.scored_records, 4u);
  EXPECT_EQ(report.total_records, 5u);
  for (const auto& h : report.histograms.at("all")) {
    std::size_t sum = 0;
    for (auto c : h.counts) sum += c;
    EXPECT_EQ(sum, 4u) << to_string(h.metric);
  }
  auto j = report.to_json();
  EXPECT_EQ(j["scopes"]["all"]["hybrid"]["counts"], nlohmann::json({0, 1, 1, 2}));
  EXPECT_EQ(j["scopes"]["diverse"]["hybrid"]["counts"], nlohmann::json({0, 1, 1, 1}));
}

TEST(Report, EmptyInput) {
  auto report = score_report({}, 0.5);
  auto j = report.to_json();
  EXPECT_EQ(j["scored_records"], 0);
  for (auto c : j["scopes"]["all"]["hybrid"]["counts"]) EXPECT_EQ(c, 0);
  EXPECT_TRUE(j["scopes"]["all"]["hybrid"]["summary"]["mean"].is_null());
}

TEST(SelectionManifest, RanksAndFlags) {
  std::vector<GenerationRecord> rs = {record("c1", 2.9), record("c2", 0.5), record("c3", 1.2)};
  rs.push_back(record("c4", 0.1));
  rs.back().flags.insert(kFlagRefusal);
  auto sel = rank_and_select(rs, 1);
  auto j = selection_manifest(rs, sel, 1);
  ASSERT_EQ(j["entries"].size(), 4u);
  EXPECT_EQ(j["entries"][1]["concept_id"], "c2");
  EXPECT_EQ(j["entries"][1]["rank"], 1);
  EXPECT_EQ(j["entries"][1]["selected"], true);
  EXPECT_EQ(j["entries"][0]["rank"], 3);
  EXPECT_TRUE(j["entries"][3]["rank"].is_null());
  EXPECT_EQ(j["entries"][3]["flags"][0], "refusal");
}

}  // namespace
}  // namespace ontoforge
