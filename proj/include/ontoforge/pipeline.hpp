#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontoforge/gateway.hpp"
#include "ontoforge/ontology.hpp"

namespace ontoforge {

struct BackendConfig {
  /// "mock", "scripted" or "http".
  std::string kind = "mock";
  std::string base_url;
  std::string model;
  std::string embed_model;
  std::optional<std::filesystem::path> script;
  /// From ONTOFORGE_API_KEY only; never written to disk.
  std::string api_key;
  int timeout_s = 120;
};

struct PipelineConfig {
  OntologyFiles ontology;
  /// Built-in templates when unset.
  std::optional<std::filesystem::path> template_dir;
  BackendConfig backend;
  RetryPolicy retry;
  GenParams gen;
  int max_tokens_ceiling = 4096;
  std::size_t parallelism = 4;
  std::size_t k = 100000;
  ContextCaps caps;
  std::size_t few_shot = 3;
  double bin_width = 0.25;
  std::filesystem::path output_dir = "out";
  /// <output_dir>/cache when unset.
  std::optional<std::filesystem::path> cache_dir;

  /// Relative paths in `j` resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig from_file(const std::filesystem::path& path);

  /// Throws UsageError on out-of-range values.
  void validate() const;
  /// Everything that affects stage outputs (no API key, no output dir).
  nlohmann::ordered_json to_json() const;
  std::string digest() const;
  std::filesystem::path resolved_cache_dir() const;
};

std::shared_ptr<Backend> make_backend(const BackendConfig& config);

enum class Stage { kIngest, kCompleteDefs, kGenerate, kScore, kSelect, kEmit, kReport };

inline constexpr std::array<Stage, 7> kAllStages = {
    Stage::kIngest, Stage::kCompleteDefs, Stage::kGenerate, Stage::kScore,
    Stage::kSelect, Stage::kEmit,         Stage::kReport};

const char* to_string(Stage s);
/// Throws UsageError for an unknown name.
Stage parse_stage(std::string_view name);
/// Files (relative to the output directory) a stage writes.
std::vector<std::string> stage_outputs(Stage s);
/// Files a stage reads.
std::vector<std::string> stage_inputs(Stage s);

enum class StageStatus { kPending, kDone, kFailed };

const char* to_string(StageStatus s);

struct StageRecord {
  StageStatus status = StageStatus::kPending;
  /// file name -> SHA-256
  std::map<std::string, std::string> outputs;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::int64_t> counts;
  std::int64_t duration_ms = 0;
  std::string error;
  /// Set when the last `run` reused this stage instead of executing it.
  bool skipped = false;
};

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::string backend_id;
  std::string embed_backend_id;
  std::map<std::string, std::string> template_versions;
  std::map<Stage, StageRecord> stages;
  GatewayStats gateway;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kManifestFile = "run_manifest.json";

/// Exclusive ownership of an output directory for the lifetime of the
/// object. Throws UsageError when another run holds the lock.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Runs pipeline stages against one output directory.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  /// For tests: use a caller-supplied backend instead of the configured one.
  Pipeline(PipelineConfig config, std::shared_ptr<Backend> backend);

  /// Runs every stage in order, reusing stages whose outputs are intact.
  /// Stops after `stop_after` when given.
  RunManifest run(std::optional<Stage> stop_after = std::nullopt);
  /// Runs exactly one stage; downstream stages become pending.
  RunManifest run_stage(Stage stage);

  const PipelineConfig& config() const noexcept { return config_; }
  Gateway& gateway() noexcept { return *gateway_; }
  std::filesystem::path out(const std::string& name) const { return config_.output_dir / name; }

 private:
  RunManifest load_or_init_manifest();
  void save_manifest(RunManifest& manifest);
  bool stage_intact(const RunManifest& manifest, Stage stage) const;
  void execute(Stage stage, RunManifest& manifest);

  std::map<std::string, std::int64_t> do_ingest();
  std::map<std::string, std::int64_t> do_complete_defs();
  std::map<std::string, std::int64_t> do_generate();
  std::map<std::string, std::int64_t> do_score();
  std::map<std::string, std::int64_t> do_select();
  std::map<std::string, std::int64_t> do_emit();
  std::map<std::string, std::int64_t> do_report();

  OntologyStore load_snapshot() const;

  PipelineConfig config_;
  TemplateSet templates_;
  std::unique_ptr<Gateway> gateway_;
};

/// Reads a snapshot written by the ingest stage.
OntologyStore ontology_from_json(const nlohmann::json& j);

}  // namespace ontoforge
