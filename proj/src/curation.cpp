#include "ontoforge/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ontoforge/error.hpp"
#include "ontoforge/gateway.hpp"
#include "ontoforge/io.hpp"

namespace ontoforge {

namespace {

std::size_t kind_index(CorpusKind k) { return static_cast<std::size_t>(k); }

bool rank_less(const GenerationRecord& a, const GenerationRecord& b) {
  if (a.scores->hybrid != b.scores->hybrid) return a.scores->hybrid < b.scores->hybrid;
  return a.concept_id < b.concept_id;
}

/// Eligible records of each kind in rank order.
std::array<std::vector<const GenerationRecord*>, 3> ranked(
    const std::vector<GenerationRecord>& records) {
  std::array<std::vector<const GenerationRecord*>, 3> out;
  for (const auto& r : records) {
    if (r.eligible()) out[kind_index(r.kind)].push_back(&r);
  }
  for (auto& v : out) {
    std::sort(v.begin(), v.end(),
              [](const auto* a, const auto* b) { return rank_less(*a, *b); });
  }
  return out;
}

nlohmann::ordered_json prompt_json(const PromptText& p) {
  return {{"text", p.text}, {"template_id", p.template_id}, {"template_version", p.template_version}};
}

PromptText prompt_from_json(const nlohmann::json& j) {
  return PromptText{j.at("text").get<std::string>(), j.value("template_id", std::string{}),
                    j.value("template_version", std::string{})};
}

nlohmann::ordered_json stats_json(const SummaryStats& s) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return {{"n", s.n}, {"mean", opt(s.mean)}, {"median", opt(s.median)}, {"stdev", opt(s.stdev)}};
}

}  // namespace

void GenerationRecord::derive_flags() {
  if (trim(y).empty()) flags.insert(kFlagEmptyY);
  if (trim(y_onto).empty()) flags.insert(kFlagEmptyYOnto);
  if (looks_like_refusal(y) || looks_like_refusal(y_onto)) flags.insert(kFlagRefusal);
}

nlohmann::ordered_json GenerationRecord::to_json() const {
  nlohmann::ordered_json j;
  j["concept_id"] = concept_id.str();
  j["kind"] = to_string(kind);
  j["instruction"] = prompt_json(instruction);
  j["onto_instruction"] = prompt_json(onto_instruction);
  j["y"] = y;
  j["y_onto"] = y_onto;
  if (scores) {
    j["scores"] = {{"cosine", scores->cosine},
                   {"rouge_l", scores->rouge_l},
                   {"bleu_4", scores->bleu_4},
                   {"hybrid", scores->hybrid}};
  } else {
    j["scores"] = nullptr;
  }
  j["flags"] = std::vector<std::string>(flags.begin(), flags.end());
  j["error"] = error;
  return j;
}

GenerationRecord GenerationRecord::from_json(const nlohmann::json& j) {
  try {
    GenerationRecord r;
    r.concept_id = ConceptId(j.at("concept_id").get<std::string>());
    r.kind = parse_corpus_kind(j.at("kind").get<std::string>());
    r.instruction = prompt_from_json(j.at("instruction"));
    r.onto_instruction = prompt_from_json(j.at("onto_instruction"));
    r.y = j.at("y").get<std::string>();
    r.y_onto = j.at("y_onto").get<std::string>();
    if (j.contains("scores") && !j.at("scores").is_null()) {
      const auto& s = j.at("scores");
      r.scores = ScoreBreakdown{s.at("cosine").get<double>(), s.at("rouge_l").get<double>(),
                                s.at("bleu_4").get<double>(), s.at("hybrid").get<double>()};
    }
    for (const auto& f : j.value("flags", std::vector<std::string>{})) r.flags.insert(f);
    r.error = j.value("error", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed generation record: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed generation record: ") + e.what());
  }
}

std::size_t Selection::total() const {
  std::size_t n = 0;
  for (const auto& v : by_kind) n += v.size();
  return n;
}

Selection rank_and_select(const std::vector<GenerationRecord>& records, std::size_t k) {
  if (k < 1) throw UsageError("k must be >= 1");
  Selection sel;
  auto order = ranked(records);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto n = std::min(k, order[i].size());
    sel.by_kind[i].reserve(n);
    for (std::size_t j = 0; j < n; ++j) sel.by_kind[i].push_back(*order[i][j]);
  }
  return sel;
}

SftExample to_sft(const GenerationRecord& r) { return {r.instruction.text, "", r.y_onto}; }

DpoExample to_dpo(const GenerationRecord& r) { return {r.instruction.text, r.y_onto, r.y}; }

std::size_t emit_sft(const Selection& selected, const std::filesystem::path& path) {
  std::string out;
  std::size_t n = 0;
  for (auto kind : kAllCorpusKinds) {
    for (const auto& r : selected[kind]) {
      auto ex = to_sft(r);
      nlohmann::ordered_json j;
      j["instruction"] = ex.instruction;
      j["input"] = ex.input;
      j["output"] = ex.output;
      out += dump_line(j);
      out += '\n';
      ++n;
    }
  }
  write_file_atomic(path, out);
  return n;
}

DpoEmitResult emit_dpo(const Selection& selected, const std::filesystem::path& path) {
  std::string out;
  DpoEmitResult res;
  for (auto kind : kAllCorpusKinds) {
    for (const auto& r : selected[kind]) {
      auto ex = to_dpo(r);
      if (ex.chosen == ex.rejected) {
        ++res.skipped_identical;
        continue;
      }
      nlohmann::ordered_json j;
      j["prompt"] = ex.prompt;
      j["chosen"] = ex.chosen;
      j["rejected"] = ex.rejected;
      out += dump_line(j);
      out += '\n';
      ++res.emitted;
    }
  }
  write_file_atomic(path, out);
  return res;
}

const char* to_string(Metric m) {
  switch (m) {
    case Metric::kCosine: return "cosine";
    case Metric::kRougeL: return "rouge_l";
    case Metric::kBleu4: return "bleu_4";
    case Metric::kHybrid: return "hybrid";
  }
  return "?";
}

std::pair<double, double> metric_range(Metric m) {
  switch (m) {
    case Metric::kCosine: return {-1.0, 1.0};
    case Metric::kRougeL:
    case Metric::kBleu4: return {0.0, 1.0};
    case Metric::kHybrid: return {-1.0, 3.0};
  }
  return {0.0, 1.0};
}

double metric_value(const ScoreBreakdown& s, Metric m) {
  switch (m) {
    case Metric::kCosine: return s.cosine;
    case Metric::kRougeL: return s.rouge_l;
    case Metric::kBleu4: return s.bleu_4;
    case Metric::kHybrid: return s.hybrid;
  }
  return 0.0;
}

ScoreHistogram make_histogram(Metric metric, const std::vector<double>& values,
                              double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw UsageError("bin_width must be a positive number");
  }
  auto [lo, hi] = metric_range(metric);
  auto n_bins = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width - 1e-9));
  n_bins = std::max<std::size_t>(n_bins, 1);

  ScoreHistogram h;
  h.metric = metric;
  h.bin_edges.reserve(n_bins + 1);
  for (std::size_t i = 0; i < n_bins; ++i) h.bin_edges.push_back(lo + static_cast<double>(i) * bin_width);
  h.bin_edges.push_back(hi);
  h.counts.assign(n_bins, 0);

  for (double v : values) {
    auto raw = std::floor((v - lo) / bin_width);
    std::size_t idx = raw <= 0.0 ? 0 : std::min(n_bins - 1, static_cast<std::size_t>(raw));
    // Settle edge cases the division rounded the wrong way.
    while (idx + 1 < n_bins && v >= h.bin_edges[idx + 1]) ++idx;
    while (idx > 0 && v < h.bin_edges[idx]) --idx;
    ++h.counts[idx];
  }
  return h;
}

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.n = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  std::sort(values.begin(), values.end());
  const auto mid = values.size() / 2;
  s.mean = mean;
  s.median = values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
  s.stdev = std::sqrt(ss / n);
  return s;
}

ScoreReport score_report(const std::vector<GenerationRecord>& records, double bin_width) {
  ScoreReport report;
  report.total_records = records.size();
  std::map<std::string, std::map<Metric, std::vector<double>>> values;
  values["all"];
  for (auto kind : kAllCorpusKinds) values[to_string(kind)];
  for (const auto& r : records) {
    if (!r.scores) continue;
    ++report.scored_records;
    for (auto m : kAllMetrics) {
      values["all"][m].push_back(metric_value(*r.scores, m));
      values[to_string(r.kind)][m].push_back(metric_value(*r.scores, m));
    }
  }
  for (auto& [scope, by_metric] : values) {
    for (auto m : kAllMetrics) {
      auto& v = by_metric[m];
      report.histograms[scope].push_back(make_histogram(m, v, bin_width));
      report.stats[scope][to_string(m)] = summarize(v);
    }
  }
  return report;
}

nlohmann::ordered_json ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  j["total_records"] = total_records;
  j["scored_records"] = scored_records;
  auto scopes = nlohmann::ordered_json::object();
  // "all" first, then kinds in canonical order.
  std::vector<std::string> order{"all"};
  for (auto k : kAllCorpusKinds) order.emplace_back(to_string(k));
  for (const auto& scope : order) {
    auto hist_it = histograms.find(scope);
    auto stat_it = stats.find(scope);
    if (hist_it == histograms.end()) continue;
    nlohmann::ordered_json sj;
    for (const auto& h : hist_it->second) {
      nlohmann::ordered_json mj;
      mj["bin_edges"] = h.bin_edges;
      mj["counts"] = h.counts;
      if (stat_it != stats.end()) {
        if (auto s = stat_it->second.find(to_string(h.metric)); s != stat_it->second.end()) {
          mj["summary"] = stats_json(s->second);
        }
      }
      sj[to_string(h.metric)] = std::move(mj);
    }
    scopes[scope] = std::move(sj);
  }
  j["scopes"] = std::move(scopes);
  return j;
}

nlohmann::ordered_json selection_manifest(const std::vector<GenerationRecord>& records,
                                          const Selection& selected, std::size_t k) {
  auto order = ranked(records);
  std::map<std::pair<std::size_t, ConceptId>, std::size_t> rank_of;
  for (std::size_t kind = 0; kind < order.size(); ++kind) {
    for (std::size_t i = 0; i < order[kind].size(); ++i) {
      rank_of[{kind, order[kind][i]->concept_id}] = i + 1;
    }
  }
  std::set<std::pair<std::size_t, ConceptId>> chosen;
  for (std::size_t kind = 0; kind < selected.by_kind.size(); ++kind) {
    for (const auto& r : selected.by_kind[kind]) chosen.insert({kind, r.concept_id});
  }

  std::vector<const GenerationRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    if (a->kind != b->kind) return a->kind < b->kind;
    return a->concept_id < b->concept_id;
  });

  nlohmann::ordered_json j;
  j["k"] = k;
  auto entries = nlohmann::ordered_json::array();
  for (const auto* r : sorted) {
    auto key = std::make_pair(kind_index(r->kind), r->concept_id);
    nlohmann::ordered_json e;
    e["concept_id"] = r->concept_id.str();
    e["kind"] = to_string(r->kind);
    e["hybrid"] = r->scores ? nlohmann::ordered_json(r->scores->hybrid) : nlohmann::ordered_json(nullptr);
    auto it = rank_of.find(key);
    e["rank"] = it != rank_of.end() ? nlohmann::ordered_json(it->second) : nlohmann::ordered_json(nullptr);
    e["selected"] = chosen.contains(key);
    e["flags"] = std::vector<std::string>(r->flags.begin(), r->flags.end());
    entries.push_back(std::move(e));
  }
  j["entries"] = std::move(entries);
  return j;
}

}  // namespace ontoforge
