#include "ontoforge/evalharness.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include "default_templates.hpp"
#include "ontoforge/error.hpp"
#include "ontoforge/io.hpp"
#include "ontoforge/parallel.hpp"
#include "ontoforge/textmetrics.hpp"

namespace ontoforge {

namespace {

bool is_enum_marker(std::string_view s) {
  // "1." / "12)" / "-" / "*" / "•"
  if (s == "-" || s == "*" || s == "\xe2\x80\xa2") return true;
  if (s.size() < 2) return false;
  if (s.back() != '.' && s.back() != ')') return false;
  return std::all_of(s.begin(), s.end() - 1, [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string strip_marker(std::string_view s) {
  s = trim(s);
  auto space = s.find_first_of(" \t");
  auto head = s.substr(0, space);
  if (is_enum_marker(head)) {
    s = space == std::string_view::npos ? std::string_view{} : trim(s.substr(space));
  } else if (!s.empty() && (s.front() == '-' || s.front() == '*')) {
    s = trim(s.substr(1));
  }
  return std::string(s);
}

bool is_single_letter(std::string_view s) {
  return s.size() == 1 && s[0] >= 'A' && s[0] <= 'Z';
}

std::string strip_choice_token(std::string_view t) {
  while (!t.empty() && (t.front() == '(' || t.front() == '[' || t.front() == '"' || t.front() == '\'')) {
    t.remove_prefix(1);
  }
  while (!t.empty() && std::string_view(")]\"'.,:;!?").find(t.back()) != std::string_view::npos) {
    t.remove_suffix(1);
  }
  return std::string(t);
}

std::optional<std::string> match_letter(std::string_view token, std::span<const QaOption> options,
                                        bool letters_case_insensitive) {
  for (const auto& o : options) {
    if (is_single_letter(o.letter)) {
      if (token == o.letter) return o.letter;
      if (letters_case_insensitive && token.size() == 1 &&
          std::toupper(static_cast<unsigned char>(token[0])) == o.letter[0]) {
        return o.letter;
      }
    } else if (fold_case(token) == fold_case(o.letter)) {
      return o.letter;
    }
  }
  return std::nullopt;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    auto start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

const std::vector<std::string> kFixedWordLetters = {"yes", "no", "maybe"};

}  // namespace

// ---------------------------------------------------------------------------
// Hypernym discovery

std::vector<HypernymItem> load_hypernym_dataset(const std::filesystem::path& data_path,
                                                const std::filesystem::path& gold_path) {
  auto strip_trailing_blank = [](std::vector<std::string> lines) {
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
  };
  const auto data = strip_trailing_blank(split_lines(read_file(data_path)));
  const auto gold = strip_trailing_blank(split_lines(read_file(gold_path)));
  if (data.size() != gold.size()) {
    throw DataError("hypernym dataset misaligned: " + data_path.filename().string() + " has " +
                    std::to_string(data.size()) + " lines, " + gold_path.filename().string() +
                    " has " + std::to_string(gold.size()));
  }
  std::vector<HypernymItem> items;
  items.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto fields = split(data[i], '\t');
    HypernymItem item;
    item.term = std::string(trim(fields[0]));
    if (item.term.empty()) {
      throw DataError(data_path.filename().string() + ":" + std::to_string(i + 1) + ": empty term");
    }
    if (fields.size() > 1) item.category = std::string(trim(fields[1]));
    std::set<std::string> seen;
    for (const auto& g : split(gold[i], '\t')) {
      auto folded = fold_case(trim(g));
      if (folded.empty() || !seen.insert(folded).second) continue;
      item.gold.push_back(std::move(folded));
    }
    if (item.gold.empty()) {
      throw DataError(gold_path.filename().string() + ":" + std::to_string(i + 1) +
                      ": empty gold line");
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<std::string> parse_hypernym_output(std::string_view text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string piece;
  auto flush = [&] {
    auto cand = fold_case(strip_marker(piece));
    piece.clear();
    while (!cand.empty() && (cand.back() == '.' || cand.back() == ';')) cand.pop_back();
    cand = std::string(trim(cand));
    if (cand.empty() || out.size() >= kMaxHypernymCandidates) return;
    if (seen.insert(cand).second) out.push_back(std::move(cand));
  };
  for (char c : text) {
    if (c == ',' || c == '\n') {
      flush();
    } else {
      piece.push_back(c);
    }
  }
  flush();
  return out;
}

std::optional<std::size_t> first_match_rank(const HypernymItem& item) {
  for (std::size_t i = 0; i < item.predictions.size(); ++i) {
    auto p = fold_case(item.predictions[i]);
    if (std::find(item.gold.begin(), item.gold.end(), p) != item.gold.end()) return i + 1;
  }
  return std::nullopt;
}

double mrr(std::span<const HypernymItem> items) {
  if (items.empty()) throw DataError("MRR over an empty item list");
  double sum = 0.0;
  for (const auto& item : items) {
    if (auto r = first_match_rank(item)) sum += 1.0 / static_cast<double>(*r);
  }
  return sum / static_cast<double>(items.size());
}

EvalDefinitions generate_eval_definitions(std::span<const HypernymItem> items, Gateway& gateway,
                                          const TemplateSet& templates, const GenParams& params,
                                          std::size_t parallelism) {
  std::vector<std::string> terms;
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (seen.insert(item.term).second) terms.push_back(item.term);
  }
  std::vector<PromptText> prompts;
  prompts.reserve(terms.size());
  for (const auto& t : terms) prompts.push_back(render_definition_completion(templates, t, {}));

  auto results = gateway.generate_batch(prompts, params, parallelism);
  EvalDefinitions out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!results[i].ok()) {
      out.misses[terms[i]] = results[i].error;
      continue;
    }
    auto def = std::string(trim(results[i].value->text));
    if (def.empty() || looks_like_refusal(def)) {
      out.misses[terms[i]] = def.empty() ? "empty completion" : "refusal";
      continue;
    }
    out.definitions[terms[i]] = std::move(def);
  }
  return out;
}

void predict_hypernyms(std::span<HypernymItem> items, Gateway& gateway,
                       const TemplateSet& templates, const GenParams& params,
                       std::size_t parallelism, bool use_definitions) {
  std::vector<PromptText> prompts;
  prompts.reserve(items.size());
  for (const auto& item : items) {
    prompts.push_back(render_hypernym_query(
        templates, item.term, use_definitions ? item.definition : std::nullopt));
  }
  auto results = gateway.generate_batch(prompts, params, parallelism);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (results[i].ok()) {
      items[i].raw_output = results[i].value->text;
      items[i].predictions = parse_hypernym_output(items[i].raw_output);
    } else {
      items[i].error = results[i].error;
      items[i].predictions.clear();
    }
  }
}

// ---------------------------------------------------------------------------
// Multiple-choice QA

std::vector<QaItem> load_qa_dataset(const std::filesystem::path& path,
                                    const std::string& default_dataset) {
  std::vector<QaItem> items;
  auto lines = split_lines(read_file(path));
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto where = path.filename().string() + ":" + std::to_string(ln + 1) + ": ";
    try {
      auto j = nlohmann::json::parse(lines[ln]);
      QaItem item;
      item.dataset = j.value("dataset", default_dataset);
      item.question = j.at("question").get<std::string>();
      if (j.contains("context") && !j.at("context").is_null()) {
        item.context = j.at("context").get<std::string>();
      }
      // nlohmann::json objects iterate in key order, which is the letter order.
      for (const auto& [letter, text] : j.at("options").items()) {
        item.options.push_back({letter, text.get<std::string>()});
      }
      item.gold_letter = j.at("answer").get<std::string>();

      if (item.options.empty()) throw DataError(where + "no options");
      bool letters = true;
      for (std::size_t i = 0; i < item.options.size(); ++i) {
        if (item.options[i].letter != std::string(1, static_cast<char>('A' + i))) letters = false;
      }
      if (!letters) {
        std::set<std::string> got;
        for (const auto& o : item.options) got.insert(fold_case(o.letter));
        if (got != std::set<std::string>(kFixedWordLetters.begin(), kFixedWordLetters.end())) {
          throw DataError(where + "option letters must run A, B, C... or be {yes, no, maybe}");
        }
        // Fixed order yes, no, maybe.
        std::vector<QaOption> ordered;
        for (const auto& w : kFixedWordLetters) {
          for (const auto& o : item.options) {
            if (fold_case(o.letter) == w) ordered.push_back({w, o.text});
          }
        }
        item.options = std::move(ordered);
        item.gold_letter = fold_case(item.gold_letter);
      }
      bool gold_ok = std::any_of(item.options.begin(), item.options.end(),
                                 [&](const QaOption& o) { return o.letter == item.gold_letter; });
      if (!gold_ok) throw DataError(where + "answer '" + item.gold_letter + "' is not an option");
      items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return items;
}

std::optional<std::string> extract_choice(std::string_view text,
                                          std::span<const QaOption> options) {
  if (options.empty()) return std::nullopt;
  const auto tokens = whitespace_tokens(text);

  for (const auto& tok : tokens) {
    if (auto m = match_letter(strip_choice_token(tok), options, false)) return m;
  }

  const auto folded = fold_case(text);
  for (std::size_t pos = folded.find("answer is"); pos != std::string::npos;
       pos = folded.find("answer is", pos + 1)) {
    auto rest = whitespace_tokens(std::string_view(text).substr(pos + 9));
    if (rest.empty()) break;
    if (auto m = match_letter(strip_choice_token(rest.front()), options, true)) return m;
  }

  std::optional<std::string> best;
  std::size_t best_pos = std::string::npos;
  for (const auto& o : options) {
    auto needle = fold_case(trim(o.text));
    if (needle.empty()) continue;
    auto pos = folded.find(needle);
    if (pos != std::string::npos && (best_pos == std::string::npos || pos < best_pos)) {
      best = o.letter;
      best_pos = pos;
    }
  }
  return best;
}

std::string AccuracyReport::percent() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

AccuracyReport accuracy(std::span<const QaItem> items) {
  if (items.empty()) throw DataError("accuracy over an empty item list");
  AccuracyReport r;
  r.n = items.size();
  for (const auto& item : items) {
    bool ok = item.predicted_letter && *item.predicted_letter == item.gold_letter;
    auto& [c, n] = r.per_dataset[item.dataset];
    ++n;
    if (ok) {
      ++c;
      ++r.correct;
    }
  }
  r.fraction = static_cast<double>(r.correct) / static_cast<double>(r.n);
  return r;
}

QaTemplates QaTemplates::load(const std::optional<std::filesystem::path>& dir) {
  static const std::set<std::string> kAllowed = {"question", "options", "context"};
  QaTemplates out;
  for (const auto& [name, body] : detail::default_template_files()) {
    if (!name.starts_with("qa_")) continue;
    std::string text = body;
    if (dir && std::filesystem::exists(*dir / name)) text = read_file(*dir / name);
    auto dataset = name.substr(3, name.size() - 3 - 4);
    out.templates_.emplace(dataset, Template(name, text, kAllowed));
  }
  if (dir && std::filesystem::is_directory(*dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(*dir)) {
      auto name = entry.path().filename().string();
      if (!name.starts_with("qa_") || !name.ends_with(".txt")) continue;
      auto dataset = name.substr(3, name.size() - 3 - 4);
      if (out.templates_.contains(dataset)) continue;
      out.templates_.emplace(dataset, Template(name, read_file(entry.path()), kAllowed));
    }
  }
  return out;
}

const Template& QaTemplates::for_dataset(const std::string& dataset) const {
  auto it = templates_.find(dataset);
  if (it == templates_.end()) {
    throw UsageError("no QA template for dataset '" + dataset + "' (expected qa_" + dataset +
                     ".txt)");
  }
  return it->second;
}

PromptText QaTemplates::render(const QaItem& item) const {
  std::string opts;
  for (const auto& o : item.options) {
    if (!opts.empty()) opts += "\n";
    if (is_single_letter(o.letter)) {
      opts += o.letter + ". " + o.text;
    } else {
      opts += "- " + o.text;
    }
  }
  return for_dataset(item.dataset).render({
      {"question", item.question},
      {"options", opts},
      {"context", item.context.value_or("")},
  });
}

void predict_choices(std::span<QaItem> items, Gateway& gateway, const QaTemplates& templates,
                     const GenParams& params, std::size_t parallelism) {
  std::vector<PromptText> prompts;
  prompts.reserve(items.size());
  for (const auto& item : items) prompts.push_back(templates.render(item));
  auto results = gateway.generate_batch(prompts, params, parallelism);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (results[i].ok()) {
      items[i].raw_output = results[i].value->text;
      items[i].predicted_letter = extract_choice(items[i].raw_output, items[i].options);
    } else {
      items[i].error = results[i].error;
      items[i].predicted_letter.reset();
    }
  }
}

// ---------------------------------------------------------------------------
// Distribution shift

ShiftReport distribution_shift(std::span<const ShiftInstruction> instructions, Gateway& model,
                               std::span<const std::string> reference_responses,
                               Gateway& embedder, const GenParams& params,
                               std::size_t parallelism) {
  if (instructions.empty()) throw DataError("distribution shift needs at least one instruction");
  if (instructions.size() != reference_responses.size()) {
    throw DataError("distribution shift: " + std::to_string(instructions.size()) +
                    " instructions but " + std::to_string(reference_responses.size()) +
                    " reference responses");
  }
  std::vector<PromptText> prompts;
  prompts.reserve(instructions.size());
  for (const auto& ins : instructions) prompts.push_back(PromptText{ins.text, "instruction", ""});
  auto gens = model.generate_batch(prompts, params, parallelism);

  ShiftReport report;
  report.n = instructions.size();
  report.per_item.resize(instructions.size());
  parallel_for(instructions.size(), parallelism, [&](std::size_t i) {
    auto& item = report.per_item[i];
    item.instruction_id = instructions[i].id;
    if (!gens[i].ok()) {
      item.error = gens[i].error;
      return;
    }
    item.response = gens[i].value->text;
    try {
      auto a = embedder.embed(item.response);
      auto b = embedder.embed(reference_responses[i]);
      item.cosine = cosine(a.vector, b.vector);
    } catch (const std::exception& e) {
      item.error = e.what();
    }
  });

  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& item : report.per_item) {
    if (item.cosine) {
      sum += *item.cosine;
      ++used;
    } else {
      ++report.excluded;
    }
  }
  if (used > 0) report.mean_cosine = sum / static_cast<double>(used);
  return report;
}

}  // namespace ontoforge
