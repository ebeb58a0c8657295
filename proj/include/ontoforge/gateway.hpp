#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontoforge/prompts.hpp"

namespace ontoforge {

struct GenParams {
  double temperature = 0.7;
  int max_tokens = 1024;
  std::vector<std::string> stop_sequences;
  std::optional<std::int64_t> seed;

  /// Throws UsageError when temperature is outside [0, 2] or max_tokens is
  /// outside [1, max_tokens_ceiling].
  void validate(int max_tokens_ceiling) const;
  nlohmann::ordered_json to_json() const;
  static GenParams from_json(const nlohmann::json& j);
};

struct GenerationResult {
  std::string text;
  std::string backend_id;
  std::string prompt_digest;
  bool cached = false;
};

struct EmbeddingResult {
  std::vector<double> vector;
  std::size_t dim = 0;
  std::string backend_id;
  bool cached = false;
};

/// Outcome of one element of a batch call; exactly one of value/error is set.
template <typename T>
struct BatchItem {
  std::optional<T> value;
  std::string error;

  bool ok() const noexcept { return value.has_value(); }
};

/// A text-generation and embedding service. Implementations must be safe
/// to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Identity of the generation model; part of every prompt digest.
  virtual std::string id() const = 0;
  /// Identity of the embedding model.
  virtual std::string embed_id() const = 0;
  virtual std::string complete(const std::string& prompt, const GenParams& params) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

/// Deterministic offline backend. Completions are drawn from the prompt's
/// own tokens and a fixed vocabulary by a PRNG seeded with
/// SHA-256(prompt, params); embeddings are 16-dimensional bag-of-token
/// hashes, so identical texts embed identically and overlapping texts
/// correlate.
class MockBackend : public Backend {
 public:
  static constexpr std::size_t kEmbeddingDim = 16;

  std::string id() const override { return "mock:v1"; }
  std::string embed_id() const override { return "mock-embed:v1"; }
  std::string complete(const std::string& prompt, const GenParams& params) override;
  std::vector<double> embed(const std::string& text) override;

  std::size_t completion_calls() const noexcept { return completion_calls_; }
  std::size_t embedding_calls() const noexcept { return embedding_calls_; }

  /// The embedding rule on its own, without counting a call.
  static std::vector<double> embed_text(std::string_view text);

 private:
  std::atomic<std::size_t> completion_calls_{0};
  std::atomic<std::size_t> embedding_calls_{0};
};

/// Mock backend with canned replies: the first rule whose `match` string
/// occurs in the prompt decides the reply (text, or an injected error);
/// unmatched prompts fall through to the mock rule.
class ScriptedBackend : public MockBackend {
 public:
  struct Rule {
    std::string match;
    std::string text;
    /// 0 for a normal reply; an HTTP status to fail with otherwise.
    int error_status = 0;
  };

  explicit ScriptedBackend(std::vector<Rule> rules);
  /// Reads {"rules": [{"match": ..., "text": ...} | {"match": ..., "error": 500}]}.
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  std::string id() const override { return id_; }
  std::string complete(const std::string& prompt, const GenParams& params) override;

 private:
  std::vector<Rule> rules_;
  std::string id_;
};

struct HttpBackendConfig {
  /// e.g. "http://127.0.0.1:8000/v1"
  std::string base_url;
  std::string model;
  std::string embed_model;
  std::string api_key;
  std::string chat_path = "/chat/completions";
  std::string embed_path = "/embeddings";
  std::chrono::seconds timeout{120};
};

/// Chat-completion / embeddings client speaking the OpenAI-compatible JSON
/// schema.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string id() const override;
  std::string embed_id() const override;
  std::string complete(const std::string& prompt, const GenParams& params) override;
  std::vector<double> embed(const std::string& text) override;

  static nlohmann::json chat_request(const std::string& model, const std::string& prompt,
                                     const GenParams& params);
  /// Extracts choices[0].message.content; throws SchemaError.
  static std::string parse_chat_response(const std::string& body);
  /// Extracts data[0].embedding; throws SchemaError on shape or non-finite values.
  static std::vector<double> parse_embedding_response(const std::string& body);

 private:
  std::string post(const std::string& path, const nlohmann::json& body) const;

  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30000};
};

/// Content-addressed on-disk store: <dir>/<digest[0:2]>/<digest>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path path_for(std::string_view digest) const;

  /// The stored record, or nullopt on a miss or an unreadable entry.
  std::optional<nlohmann::json> get(std::string_view digest) const;
  void put(std::string_view digest, const nlohmann::ordered_json& record);

 private:
  std::mutex& lock_for(std::string_view digest);

  std::filesystem::path dir_;
  std::array<std::mutex, 64> locks_;
};

struct GatewayStats {
  std::size_t generation_requests = 0;
  std::size_t embedding_requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_attempts = 0;
  std::size_t retries = 0;
  std::size_t empty_completions = 0;
};

/// The single entry point for generation and embedding: caching, retry
/// with exponential backoff and bounded fan-out around a Backend.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, std::optional<std::filesystem::path> cache_dir,
          RetryPolicy retry = {}, int max_tokens_ceiling = 4096);

  Backend& backend() noexcept { return *backend_; }

  /// digest(template_version | prompt | params | backend_id)
  std::string prompt_digest(const PromptText& prompt, const GenParams& params) const;

  /// An empty completion is returned, not thrown; callers flag it.
  GenerationResult generate(const PromptText& prompt, const GenParams& params);
  /// Throws DataError when `text` is blank.
  EmbeddingResult embed(std::string_view text);

  std::vector<BatchItem<GenerationResult>> generate_batch(std::span<const PromptText> prompts,
                                                          const GenParams& params,
                                                          std::size_t parallelism);
  std::vector<BatchItem<EmbeddingResult>> embed_batch(std::span<const std::string> texts,
                                                      std::size_t parallelism);

  GatewayStats stats() const;

 private:
  template <typename Fn>
  auto with_retry(Fn&& fn) -> decltype(fn());

  std::shared_ptr<Backend> backend_;
  std::optional<ResponseCache> cache_;
  RetryPolicy retry_;
  int max_tokens_ceiling_;

  std::atomic<std::size_t> generation_requests_{0};
  std::atomic<std::size_t> embedding_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> backend_attempts_{0};
  std::atomic<std::size_t> retries_{0};
  std::atomic<std::size_t> empty_completions_{0};
};

/// True when a completion opens with a stock refusal phrase.
bool looks_like_refusal(std::string_view text);

}  // namespace ontoforge
