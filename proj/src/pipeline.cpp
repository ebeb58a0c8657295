#include "ontoforge/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <ctime>
#include <set>

#include "ontoforge/curation.hpp"
#include "ontoforge/digest.hpp"
#include "ontoforge/error.hpp"
#include "ontoforge/io.hpp"
#include "ontoforge/parallel.hpp"
#include "ontoforge/prompts.hpp"
#include "ontoforge/textmetrics.hpp"

namespace ontoforge {

namespace fs = std::filesystem;

namespace {

constexpr const char* kOntologySnapshot = "ontology.json";
constexpr const char* kCompletedDefs = "completed_definitions.jsonl";
constexpr const char* kGenerations = "generations.jsonl";
constexpr const char* kScored = "scored.jsonl";
constexpr const char* kSelected = "selected.jsonl";
constexpr const char* kSelectionManifest = "selection_manifest.json";
constexpr const char* kSft = "sft.jsonl";
constexpr const char* kDpo = "dpo.jsonl";
constexpr const char* kScoreReport = "score_report.json";

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, v] : j.items()) {
    if (!known.contains(key)) throw UsageError("config: unknown key '" + where + key + "'");
  }
}

std::string run_id_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return std::string(buf) + "-" + std::to_string(::getpid());
}

std::string jsonl(const std::vector<GenerationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += dump_line(r.to_json());
    out += '\n';
  }
  return out;
}

std::vector<GenerationRecord> read_records(const fs::path& path) {
  std::vector<GenerationRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(GenerationRecord::from_json(j));
  return out;
}

/// A stage whose every backend request failed cannot produce anything useful;
/// the backend is down or misconfigured, so stop instead of recording errors.
template <typename T>
void require_some_success(const std::vector<BatchItem<T>>& results, const char* what) {
  if (results.empty()) return;
  for (const auto& r : results) {
    if (r.ok()) return;
  }
  throw BackendError(std::string("every ") + what + " request failed; first error: " +
                     results.front().error);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  reject_unknown(j,
                 {"ontology", "templates", "backend", "retry", "generation", "max_tokens_ceiling",
                  "parallelism", "k", "caps", "few_shot", "bin_width", "output_dir", "cache_dir"},
                 "");
  PipelineConfig c;
  if (j.contains("ontology")) {
    const auto& o = j.at("ontology");
    reject_unknown(o, {"concepts", "relations", "descriptions"}, "ontology.");
    c.ontology.concepts = resolve(base_dir, get_or<std::string>(o, "concepts", ""));
    c.ontology.relations = resolve(base_dir, get_or<std::string>(o, "relations", ""));
    if (auto d = get_or<std::string>(o, "descriptions", ""); !d.empty()) {
      c.ontology.descriptions = resolve(base_dir, d);
    }
  }
  if (auto t = get_or<std::string>(j, "templates", ""); !t.empty()) {
    c.template_dir = resolve(base_dir, t);
  }
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    reject_unknown(b, {"kind", "base_url", "model", "embed_model", "script", "timeout_s"},
                   "backend.");
    c.backend.kind = get_or<std::string>(b, "kind", c.backend.kind);
    c.backend.base_url = get_or<std::string>(b, "base_url", "");
    c.backend.model = get_or<std::string>(b, "model", "");
    c.backend.embed_model = get_or<std::string>(b, "embed_model", "");
    if (auto s = get_or<std::string>(b, "script", ""); !s.empty()) {
      c.backend.script = resolve(base_dir, s);
    }
    c.backend.timeout_s = get_or<int>(b, "timeout_s", c.backend.timeout_s);
  }
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    reject_unknown(r, {"max_retries", "base_delay_ms", "multiplier", "max_delay_ms"}, "retry.");
    c.retry.max_retries = get_or<int>(r, "max_retries", c.retry.max_retries);
    c.retry.base_delay =
        std::chrono::milliseconds(get_or<std::int64_t>(r, "base_delay_ms", c.retry.base_delay.count()));
    c.retry.multiplier = get_or<double>(r, "multiplier", c.retry.multiplier);
    c.retry.max_delay =
        std::chrono::milliseconds(get_or<std::int64_t>(r, "max_delay_ms", c.retry.max_delay.count()));
  }
  if (j.contains("generation")) {
    const auto& g = j.at("generation");
    reject_unknown(g, {"temperature", "max_tokens", "stop", "seed"}, "generation.");
    try {
      c.gen = GenParams::from_json(g);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("config: bad generation params: ") + e.what());
    }
  }
  c.max_tokens_ceiling = get_or<int>(j, "max_tokens_ceiling", c.max_tokens_ceiling);
  auto non_negative = [&](const char* key, std::int64_t fallback) -> std::size_t {
    auto v = get_or<std::int64_t>(j, key, fallback);
    if (v < 0) throw UsageError(std::string("config: '") + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
  };
  c.parallelism = non_negative("parallelism", static_cast<std::int64_t>(c.parallelism));
  c.k = non_negative("k", static_cast<std::int64_t>(c.k));
  c.few_shot = non_negative("few_shot", static_cast<std::int64_t>(c.few_shot));
  if (j.contains("caps")) {
    const auto& cp = j.at("caps");
    reject_unknown(cp, {"hypernyms", "synonyms"}, "caps.");
    c.caps.max_hypernyms = get_or<std::size_t>(cp, "hypernyms", c.caps.max_hypernyms);
    c.caps.max_synonyms = get_or<std::size_t>(cp, "synonyms", c.caps.max_synonyms);
  }
  c.bin_width = get_or<double>(j, "bin_width", c.bin_width);
  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "out"));
  if (auto cd = get_or<std::string>(j, "cache_dir", ""); !cd.empty()) {
    c.cache_dir = resolve(base_dir, cd);
  }
  return c;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

void PipelineConfig::validate() const {
  if (k < 1) throw UsageError("k must be >= 1");
  if (parallelism < 1) throw UsageError("parallelism must be >= 1");
  if (few_shot < 1) throw UsageError("few_shot must be >= 1");
  if (!(bin_width > 0.0)) throw UsageError("bin_width must be > 0");
  if (retry.max_retries < 0) throw UsageError("retry.max_retries must be >= 0");
  gen.validate(max_tokens_ceiling);
  if (backend.kind != "mock" && backend.kind != "scripted" && backend.kind != "http") {
    throw UsageError("backend.kind must be mock, scripted or http");
  }
  if (backend.kind == "scripted" && !backend.script) {
    throw UsageError("backend.kind=scripted needs backend.script");
  }
  if (backend.kind == "http" && (backend.base_url.empty() || backend.model.empty())) {
    throw UsageError("backend.kind=http needs base_url and model");
  }
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["ontology"] = {{"concepts", ontology.concepts.string()},
                   {"relations", ontology.relations.string()},
                   {"descriptions", ontology.descriptions ? ontology.descriptions->string() : ""}};
  j["templates"] = template_dir ? template_dir->string() : "";
  j["backend"] = {{"kind", backend.kind},
                  {"base_url", backend.base_url},
                  {"model", backend.model},
                  {"embed_model", backend.embed_model},
                  {"script", backend.script ? backend.script->string() : ""}};
  j["generation"] = gen.to_json();
  j["k"] = k;
  j["caps"] = {{"hypernyms", caps.max_hypernyms}, {"synonyms", caps.max_synonyms}};
  j["few_shot"] = few_shot;
  j["bin_width"] = bin_width;
  return j;
}

std::string PipelineConfig::digest() const { return sha256_hex(dump_line(to_json())); }

fs::path PipelineConfig::resolved_cache_dir() const {
  return cache_dir ? *cache_dir : output_dir / "cache";
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == "mock") return std::make_shared<MockBackend>();
  if (config.kind == "scripted") {
    if (!config.script) throw UsageError("scripted backend needs a script file");
    return ScriptedBackend::from_file(*config.script);
  }
  if (config.kind == "http") {
    HttpBackendConfig h;
    h.base_url = config.base_url;
    h.model = config.model;
    h.embed_model = config.embed_model;
    h.api_key = config.api_key;
    h.timeout = std::chrono::seconds(config.timeout_s);
    return std::make_shared<HttpBackend>(std::move(h));
  }
  throw UsageError("unknown backend kind '" + config.kind + "'");
}

// ---------------------------------------------------------------------------
// Stages and manifest

const char* to_string(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kCompleteDefs: return "complete-defs";
    case Stage::kGenerate: return "generate";
    case Stage::kScore: return "score";
    case Stage::kSelect: return "select";
    case Stage::kEmit: return "emit";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (name == to_string(s)) return s;
  }
  throw UsageError("unknown stage '" + std::string(name) + "'");
}

std::vector<std::string> stage_outputs(Stage s) {
  switch (s) {
    case Stage::kIngest: return {kOntologySnapshot};
    case Stage::kCompleteDefs: return {kCompletedDefs};
    case Stage::kGenerate: return {kGenerations};
    case Stage::kScore: return {kScored};
    case Stage::kSelect: return {kSelected, kSelectionManifest};
    case Stage::kEmit: return {kSft, kDpo};
    case Stage::kReport: return {kScoreReport};
  }
  return {};
}

std::vector<std::string> stage_inputs(Stage s) {
  switch (s) {
    case Stage::kIngest: return {};
    case Stage::kCompleteDefs: return {kOntologySnapshot};
    case Stage::kGenerate: return {kOntologySnapshot, kCompletedDefs};
    case Stage::kScore: return {kGenerations};
    case Stage::kSelect: return {kScored};
    case Stage::kEmit: return {kSelected};
    case Stage::kReport: return {kScored};
  }
  return {};
}

const char* to_string(StageStatus s) {
  switch (s) {
    case StageStatus::kPending: return "pending";
    case StageStatus::kDone: return "done";
    case StageStatus::kFailed: return "failed";
  }
  return "?";
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["config_digest"] = config_digest;
  j["backend"] = {{"id", backend_id}, {"embed_id", embed_backend_id}};
  j["template_versions"] = template_versions;
  auto stages_j = nlohmann::ordered_json::array();
  for (auto s : kAllStages) {
    StageRecord rec;
    if (auto it = stages.find(s); it != stages.end()) rec = it->second;
    nlohmann::ordered_json sj;
    sj["name"] = to_string(s);
    sj["status"] = to_string(rec.status);
    sj["skipped"] = rec.skipped;
    sj["outputs"] = rec.outputs;
    sj["inputs"] = rec.inputs;
    sj["counts"] = rec.counts;
    sj["duration_ms"] = rec.duration_ms;
    sj["error"] = rec.error;
    stages_j.push_back(std::move(sj));
  }
  j["stages"] = std::move(stages_j);
  j["gateway"] = {{"generation_requests", gateway.generation_requests},
                  {"embedding_requests", gateway.embedding_requests},
                  {"cache_hits", gateway.cache_hits},
                  {"backend_attempts", gateway.backend_attempts},
                  {"retries", gateway.retries},
                  {"empty_completions", gateway.empty_completions}};
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.value("run_id", std::string{});
  m.config_digest = j.value("config_digest", std::string{});
  if (j.contains("backend")) {
    m.backend_id = j["backend"].value("id", std::string{});
    m.embed_backend_id = j["backend"].value("embed_id", std::string{});
  }
  m.template_versions =
      j.value("template_versions", std::map<std::string, std::string>{});
  for (const auto& sj : j.value("stages", nlohmann::json::array())) {
    auto stage = parse_stage(sj.at("name").get<std::string>());
    StageRecord rec;
    auto status = sj.value("status", std::string("pending"));
    rec.status = status == "done"     ? StageStatus::kDone
                 : status == "failed" ? StageStatus::kFailed
                                      : StageStatus::kPending;
    rec.outputs = sj.value("outputs", std::map<std::string, std::string>{});
    rec.inputs = sj.value("inputs", std::map<std::string, std::string>{});
    rec.counts = sj.value("counts", std::map<std::string, std::int64_t>{});
    rec.duration_ms = sj.value("duration_ms", std::int64_t{0});
    rec.error = sj.value("error", std::string{});
    m.stages[stage] = std::move(rec);
  }
  return m;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".ontoforge.lock") {
  fs::create_directories(dir);
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw UsageError("output directory " + dir.string() +
                       " is locked by another run (remove " + path_.string() +
                       " if that run is gone)");
    }
    throw DataError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig config) : Pipeline(config, make_backend(config.backend)) {}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)),
      templates_(config_.template_dir ? TemplateSet::load(*config_.template_dir)
                                      : TemplateSet::defaults()) {
  config_.validate();
  gateway_ = std::make_unique<Gateway>(std::move(backend), config_.resolved_cache_dir(),
                                       config_.retry, config_.max_tokens_ceiling);
}

RunManifest Pipeline::load_or_init_manifest() {
  RunManifest m;
  auto path = out(kManifestFile);
  if (fs::exists(path)) {
    try {
      m = RunManifest::from_json(nlohmann::json::parse(read_file(path)));
    } catch (const std::exception&) {
      m = RunManifest{};
    }
  }
  if (m.config_digest != config_.digest() || m.backend_id != gateway_->backend().id() ||
      m.template_versions != templates_.versions()) {
    // Different configuration: nothing from the previous run can be reused.
    m.stages.clear();
  }
  m.run_id = run_id_now();
  m.config_digest = config_.digest();
  m.backend_id = gateway_->backend().id();
  m.embed_backend_id = gateway_->backend().embed_id();
  m.template_versions = templates_.versions();
  for (auto& [s, rec] : m.stages) rec.skipped = false;
  return m;
}

void Pipeline::save_manifest(RunManifest& manifest) {
  manifest.gateway = gateway_->stats();
  write_file_atomic(out(kManifestFile), dump_pretty(manifest.to_json()));
}

bool Pipeline::stage_intact(const RunManifest& manifest, Stage stage) const {
  auto it = manifest.stages.find(stage);
  if (it == manifest.stages.end() || it->second.status != StageStatus::kDone) return false;
  const auto& rec = it->second;
  for (const auto& name : stage_outputs(stage)) {
    auto o = rec.outputs.find(name);
    if (o == rec.outputs.end() || !fs::exists(out(name))) return false;
    if (file_sha256_hex(out(name)) != o->second) return false;
  }
  for (const auto& [name, digest] : rec.inputs) {
    if (name.starts_with("source:")) continue;
    if (!fs::exists(out(name)) || file_sha256_hex(out(name)) != digest) return false;
  }
  if (stage == Stage::kIngest) {
    // Ingest's inputs are the source TSVs.
    std::vector<fs::path> sources{config_.ontology.concepts, config_.ontology.relations};
    if (config_.ontology.descriptions) sources.push_back(*config_.ontology.descriptions);
    for (const auto& src : sources) {
      auto key = "source:" + src.string();
      auto in = rec.inputs.find(key);
      if (in == rec.inputs.end()) return false;
      if (!fs::exists(src) || file_sha256_hex(src) != in->second) return false;
    }
  }
  return true;
}

void Pipeline::execute(Stage stage, RunManifest& manifest) {
  StageRecord rec;
  for (const auto& name : stage_inputs(stage)) {
    if (!fs::exists(out(name))) {
      throw DataError(std::string("stage ") + to_string(stage) + ": missing input " + name +
                      " (run the upstream stage first)");
    }
    rec.inputs[name] = file_sha256_hex(out(name));
  }
  auto start = std::chrono::steady_clock::now();
  try {
    switch (stage) {
      case Stage::kIngest: rec.counts = do_ingest(); break;
      case Stage::kCompleteDefs: rec.counts = do_complete_defs(); break;
      case Stage::kGenerate: rec.counts = do_generate(); break;
      case Stage::kScore: rec.counts = do_score(); break;
      case Stage::kSelect: rec.counts = do_select(); break;
      case Stage::kEmit: rec.counts = do_emit(); break;
      case Stage::kReport: rec.counts = do_report(); break;
    }
  } catch (const std::exception& e) {
    rec.status = StageStatus::kFailed;
    rec.error = e.what();
    rec.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    manifest.stages[stage] = std::move(rec);
    save_manifest(manifest);
    throw;
  }
  if (stage == Stage::kIngest) {
    std::vector<fs::path> sources{config_.ontology.concepts, config_.ontology.relations};
    if (config_.ontology.descriptions) sources.push_back(*config_.ontology.descriptions);
    for (const auto& src : sources) rec.inputs["source:" + src.string()] = file_sha256_hex(src);
  }
  rec.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  for (const auto& name : stage_outputs(stage)) rec.outputs[name] = file_sha256_hex(out(name));
  rec.status = StageStatus::kDone;
  manifest.stages[stage] = std::move(rec);
  save_manifest(manifest);
}

RunManifest Pipeline::run(std::optional<Stage> stop_after) {
  DirectoryLock lock(config_.output_dir);
  auto manifest = load_or_init_manifest();
  bool rerun_rest = false;
  for (auto stage : kAllStages) {
    if (!rerun_rest && stage_intact(manifest, stage)) {
      manifest.stages[stage].skipped = true;
    } else {
      rerun_rest = true;
      execute(stage, manifest);
    }
    if (stop_after && *stop_after == stage) break;
  }
  save_manifest(manifest);
  return manifest;
}

RunManifest Pipeline::run_stage(Stage stage) {
  DirectoryLock lock(config_.output_dir);
  auto manifest = load_or_init_manifest();
  bool downstream = false;
  for (auto s : kAllStages) {
    if (downstream) {
      if (auto it = manifest.stages.find(s); it != manifest.stages.end()) {
        it->second.status = StageStatus::kPending;
      }
    }
    if (s == stage) downstream = true;
  }
  execute(stage, manifest);
  return manifest;
}

OntologyStore ontology_from_json(const nlohmann::json& j) {
  std::vector<Concept> concepts;
  try {
    for (const auto& cj : j.at("concepts")) {
      Concept c;
      c.id = ConceptId(cj.at("id").get<std::string>());
      c.label = cj.at("label").get<std::string>();
      c.synonyms = cj.at("synonyms").get<std::vector<std::string>>();
      if (!cj.at("definition").is_null()) c.definition = cj.at("definition").get<std::string>();
      for (const auto& h : cj.at("hypernyms")) c.hypernyms.emplace_back(h.get<std::string>());
      concepts.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ontology snapshot: ") + e.what());
  }
  return OntologyStore::from_concepts(std::move(concepts));
}

OntologyStore Pipeline::load_snapshot() const {
  try {
    return ontology_from_json(nlohmann::json::parse(read_file(out(kOntologySnapshot))));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string(kOntologySnapshot) + ": " + e.what());
  }
}

std::map<std::string, std::int64_t> Pipeline::do_ingest() {
  auto store = load_ontology(config_.ontology);
  auto report = validate(store);
  auto j = store.to_json();
  nlohmann::ordered_json v;
  auto ids = [](const std::vector<ConceptId>& xs) {
    std::vector<std::string> out;
    for (const auto& x : xs) out.push_back(x.str());
    return out;
  };
  v["roots"] = ids(report.roots);
  v["orphans"] = ids(report.orphans);
  auto cycles = nlohmann::ordered_json::array();
  for (const auto& c : report.cycles) cycles.push_back(ids(c));
  v["cycles"] = std::move(cycles);
  j["validation"] = std::move(v);
  write_file_atomic(out(kOntologySnapshot), dump_pretty(j));
  auto s = store.stats();
  return {{"concepts", static_cast<std::int64_t>(s.concepts)},
          {"definitions", static_cast<std::int64_t>(s.definitions)},
          {"is_a_edges", static_cast<std::int64_t>(s.is_a_edges)},
          {"cycles", static_cast<std::int64_t>(report.cycles.size())},
          {"orphans", static_cast<std::int64_t>(report.orphans.size())}};
}

std::map<std::string, std::int64_t> Pipeline::do_complete_defs() {
  auto store = load_snapshot();
  auto missing = missing_definition_concepts(store);
  std::vector<PromptText> prompts;
  prompts.reserve(missing.size());
  for (const auto& id : missing) {
    prompts.push_back(render_definition_completion(templates_, store.at(id).label,
                                                   few_shot_examples(store, id, config_.few_shot)));
  }
  auto before = gateway_->stats();
  auto results = gateway_->generate_batch(prompts, config_.gen, config_.parallelism);
  require_some_success(results, "definition completion");
  std::string text;
  std::int64_t completed = 0, failed = 0;
  for (std::size_t i = 0; i < missing.size(); ++i) {
    nlohmann::ordered_json j;
    j["id"] = missing[i].str();
    j["label"] = store.at(missing[i]).label;
    std::string def, status = "completed", error;
    if (!results[i].ok()) {
      status = "error";
      error = results[i].error;
    } else {
      def = std::string(trim(results[i].value->text));
      if (def.empty()) {
        status = "empty";
      } else if (looks_like_refusal(def)) {
        status = "refusal";
        def.clear();
      }
    }
    (status == "completed" ? completed : failed)++;
    j["definition"] = def;
    j["status"] = status;
    j["error"] = error;
    text += dump_line(j);
    text += '\n';
  }
  write_file_atomic(out(kCompletedDefs), text);
  auto after = gateway_->stats();
  return {{"missing", static_cast<std::int64_t>(missing.size())},
          {"completed", completed},
          {"failed", failed},
          {"generation_calls",
           static_cast<std::int64_t>(after.generation_requests - before.generation_requests)},
          {"cache_hits", static_cast<std::int64_t>(after.cache_hits - before.cache_hits)}};
}

std::map<std::string, std::int64_t> Pipeline::do_generate() {
  auto store = load_snapshot();
  DefinitionMap completed;
  for (const auto& j : read_jsonl(out(kCompletedDefs))) {
    auto def = j.value("definition", std::string{});
    if (j.value("status", std::string{}) == "completed" && !def.empty()) {
      completed.emplace(ConceptId(j.at("id").get<std::string>()), std::move(def));
    }
  }

  std::vector<GenerationRecord> records;
  std::vector<PromptText> prompts;
  for (const auto& [id, c] : store.concepts()) {
    auto ctx = ontology_context(store, id, completed, config_.caps);
    for (auto kind : kAllCorpusKinds) {
      GenerationRecord r;
      r.concept_id = id;
      r.kind = kind;
      r.instruction = render_corpus_instruction(templates_, kind, c.label);
      r.onto_instruction = render_corpus_instruction_with_ontology(templates_, kind, ctx);
      prompts.push_back(r.instruction);
      prompts.push_back(r.onto_instruction);
      records.push_back(std::move(r));
    }
  }
  auto before = gateway_->stats();
  auto results = gateway_->generate_batch(prompts, config_.gen, config_.parallelism);
  require_some_success(results, "generation");
  std::int64_t flagged = 0, errors = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    const auto& plain = results[2 * i];
    const auto& onto = results[2 * i + 1];
    if (plain.ok()) r.y = plain.value->text;
    if (onto.ok()) r.y_onto = onto.value->text;
    if (!plain.ok() || !onto.ok()) {
      ++errors;
      r.error = !plain.ok() ? "y: " + plain.error : "y_onto: " + onto.error;
    }
    r.derive_flags();
    if (r.flagged()) ++flagged;
  }
  write_file_atomic(out(kGenerations), jsonl(records));
  auto after = gateway_->stats();
  return {{"concepts", static_cast<std::int64_t>(store.concepts().size())},
          {"records", static_cast<std::int64_t>(records.size())},
          {"flagged", flagged},
          {"errors", errors},
          {"generation_calls",
           static_cast<std::int64_t>(after.generation_requests - before.generation_requests)},
          {"cache_hits", static_cast<std::int64_t>(after.cache_hits - before.cache_hits)}};
}

std::map<std::string, std::int64_t> Pipeline::do_score() {
  auto records = read_records(out(kGenerations));
  std::vector<std::size_t> todo;
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].scores.reset();
    if (records[i].flagged() || !records[i].error.empty()) continue;
    todo.push_back(i);
    texts.push_back(records[i].y);
    texts.push_back(records[i].y_onto);
  }
  auto before = gateway_->stats();
  auto embeddings = gateway_->embed_batch(texts, config_.parallelism);
  require_some_success(embeddings, "embedding");
  std::int64_t scored = 0, failed = 0;
  for (std::size_t t = 0; t < todo.size(); ++t) {
    auto& r = records[todo[t]];
    const auto& ey = embeddings[2 * t];
    const auto& eo = embeddings[2 * t + 1];
    if (!ey.ok() || !eo.ok()) {
      r.error = "embedding: " + (!ey.ok() ? ey.error : eo.error);
      ++failed;
      continue;
    }
    try {
      r.scores = hybrid_score(r.y, r.y_onto, ey.value->vector, eo.value->vector);
      ++scored;
    } catch (const std::exception& e) {
      r.error = std::string("scoring: ") + e.what();
      ++failed;
    }
  }
  write_file_atomic(out(kScored), jsonl(records));
  auto after = gateway_->stats();
  return {{"records", static_cast<std::int64_t>(records.size())},
          {"scored", scored},
          {"failed", failed},
          {"embedding_calls",
           static_cast<std::int64_t>(after.embedding_requests - before.embedding_requests)},
          {"cache_hits", static_cast<std::int64_t>(after.cache_hits - before.cache_hits)}};
}

std::map<std::string, std::int64_t> Pipeline::do_select() {
  auto records = read_records(out(kScored));
  auto sel = rank_and_select(records, config_.k);
  std::string lines;
  std::map<std::string, std::int64_t> counts;
  for (auto kind : kAllCorpusKinds) {
    lines += jsonl(sel[kind]);
    counts[std::string("selected_") + to_string(kind)] = static_cast<std::int64_t>(sel[kind].size());
  }
  write_file_atomic(out(kSelected), lines);
  write_file_atomic(out(kSelectionManifest), dump_pretty(selection_manifest(records, sel, config_.k)));
  counts["selected"] = static_cast<std::int64_t>(sel.total());
  return counts;
}

std::map<std::string, std::int64_t> Pipeline::do_emit() {
  // selected.jsonl is already in kind order, rank order within kind.
  Selection sel;
  for (auto& r : read_records(out(kSelected))) {
    sel.by_kind[static_cast<std::size_t>(r.kind)].push_back(std::move(r));
  }
  auto sft = emit_sft(sel, out(kSft));
  auto dpo = emit_dpo(sel, out(kDpo));
  return {{"sft", static_cast<std::int64_t>(sft)},
          {"dpo", static_cast<std::int64_t>(dpo.emitted)},
          {"dpo_skipped_identical", static_cast<std::int64_t>(dpo.skipped_identical)}};
}

std::map<std::string, std::int64_t> Pipeline::do_report() {
  auto records = read_records(out(kScored));
  auto report = score_report(records, config_.bin_width);
  auto j = report.to_json();
  j["bin_width"] = config_.bin_width;
  write_file_atomic(out(kScoreReport), dump_pretty(j));
  return {{"scored_records", static_cast<std::int64_t>(report.scored_records)}};
}

}  // namespace ontoforge
