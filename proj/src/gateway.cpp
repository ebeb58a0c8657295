#include "ontoforge/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <set>
#include <thread>

#include "ontoforge/digest.hpp"
#include "ontoforge/error.hpp"
#include "ontoforge/io.hpp"
#include "ontoforge/parallel.hpp"
#include "ontoforge/textmetrics.hpp"

namespace ontoforge {

namespace {

constexpr char kSep = '\x1f';

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const std::vector<std::string>& mock_vocabulary() {
  static const std::vector<std::string> words = {
      "clinical",  "patients",   "diagnosis", "treatment", "chronic",    "acute",
      "symptoms",  "therapy",    "evidence",  "studies",   "condition",  "management",
      "risk",      "outcomes",   "pathology", "associated", "commonly",  "related",
      "disease",   "disorder",   "finding",   "structure", "process",    "severity",
      "research",  "guidelines", "medical",   "typically", "mechanism",  "response",
      "includes",  "classified", "observed",  "reported",  "population", "trials",
  };
  return words;
}

std::string iso_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// GenParams

void GenParams::validate(int max_tokens_ceiling) const {
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw UsageError("temperature must be in [0, 2], got " + std::to_string(temperature));
  }
  if (max_tokens < 1 || max_tokens > max_tokens_ceiling) {
    throw UsageError("max_tokens must be in [1, " + std::to_string(max_tokens_ceiling) +
                     "], got " + std::to_string(max_tokens));
  }
}

nlohmann::ordered_json GenParams::to_json() const {
  nlohmann::ordered_json j;
  j["temperature"] = temperature;
  j["max_tokens"] = max_tokens;
  j["stop"] = stop_sequences;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  return j;
}

GenParams GenParams::from_json(const nlohmann::json& j) {
  GenParams p;
  p.temperature = j.value("temperature", p.temperature);
  p.max_tokens = j.value("max_tokens", p.max_tokens);
  if (j.contains("stop")) p.stop_sequences = j.at("stop").get<std::vector<std::string>>();
  if (j.contains("seed") && !j.at("seed").is_null()) p.seed = j.at("seed").get<std::int64_t>();
  return p;
}

// ---------------------------------------------------------------------------
// Mock backends

std::string MockBackend::complete(const std::string& prompt, const GenParams& params) {
  ++completion_calls_;
  const auto digest = sha256_hex(prompt + kSep + params.to_json().dump());
  std::uint64_t state = std::stoull(digest.substr(0, 16), nullptr, 16);

  std::set<std::string> pool_set;
  for (auto& t : tokenize(prompt)) pool_set.insert(std::move(t));
  for (const auto& w : mock_vocabulary()) pool_set.insert(w);
  const std::vector<std::string> pool(pool_set.begin(), pool_set.end());

  auto n_words = static_cast<int>(24 + splitmix64(state) % 24);
  n_words = std::min(n_words, params.max_tokens);
  std::string text;
  for (int i = 0; i < n_words; ++i) {
    const auto& w = pool[splitmix64(state) % pool.size()];
    if (i) text += (i % 8 == 0) ? ". " : " ";
    text += w;
  }
  text += ".";
  for (const auto& stop : params.stop_sequences) {
    if (stop.empty()) continue;
    if (auto pos = text.find(stop); pos != std::string::npos) text.resize(pos);
  }
  return text;
}

std::vector<double> MockBackend::embed_text(std::string_view text) {
  auto tokens = tokenize(text);
  if (tokens.empty()) tokens.emplace_back(trim(text));
  std::vector<double> v(kEmbeddingDim, 0.0);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    double sum = 0.0;
    for (const auto& t : tokens) {
      auto h = fnv1a(t + kSep + std::to_string(i));
      sum += static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    v[i] = sum / static_cast<double>(tokens.size());
  }
  return v;
}

std::vector<double> MockBackend::embed(const std::string& text) {
  ++embedding_calls_;
  return embed_text(text);
}

ScriptedBackend::ScriptedBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {
  std::string key;
  for (const auto& r : rules_) {
    key += r.match + kSep + r.text + kSep + std::to_string(r.error_status) + '\n';
  }
  id_ = "scripted:" + sha256_hex(key).substr(0, 12);
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<Rule> rules;
  try {
    for (const auto& r : j.at("rules")) {
      Rule rule;
      rule.match = r.at("match").get<std::string>();
      rule.text = r.value("text", std::string{});
      rule.error_status = r.value("error", 0);
      rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad script: " + e.what());
  }
  return std::make_shared<ScriptedBackend>(std::move(rules));
}

std::string ScriptedBackend::complete(const std::string& prompt, const GenParams& params) {
  for (const auto& r : rules_) {
    if (prompt.find(r.match) == std::string::npos) continue;
    if (r.error_status != 0) throw HttpStatusError(r.error_status, "scripted failure");
    return r.text;
  }
  return MockBackend::complete(prompt, params);
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(std::string_view digest) const {
  return dir_ / std::string(digest.substr(0, 2)) / (std::string(digest) + ".json");
}

std::mutex& ResponseCache::lock_for(std::string_view digest) {
  return locks_[std::stoul(std::string(digest.substr(0, 2)), nullptr, 16) % locks_.size()];
}

std::optional<nlohmann::json> ResponseCache::get(std::string_view digest) const {
  auto path = path_for(digest);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void ResponseCache::put(std::string_view digest, const nlohmann::ordered_json& record) {
  std::lock_guard lock(lock_for(digest));
  write_file_atomic(path_for(digest), record.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, std::optional<std::filesystem::path> cache_dir,
                 RetryPolicy retry, int max_tokens_ceiling)
    : backend_(std::move(backend)), retry_(retry), max_tokens_ceiling_(max_tokens_ceiling) {
  if (!backend_) throw UsageError("gateway needs a backend");
  if (cache_dir) cache_.emplace(*cache_dir);
}

template <typename Fn>
auto Gateway::with_retry(Fn&& fn) -> decltype(fn()) {
  auto delay = retry_.base_delay;
  for (int attempt = 0;; ++attempt) {
    ++backend_attempts_;
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.transient() || attempt >= retry_.max_retries) {
        if (attempt == 0) throw;
        throw BackendError(std::string(e.what()) + " (after " + std::to_string(attempt + 1) +
                               " attempts)",
                           e.transient());
      }
    }
    ++retries_;
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay = std::min(retry_.max_delay,
                     std::chrono::milliseconds(static_cast<std::int64_t>(
                         static_cast<double>(delay.count()) * retry_.multiplier)));
  }
}

std::string Gateway::prompt_digest(const PromptText& prompt, const GenParams& params) const {
  std::string key = prompt.template_version;
  key += kSep;
  key += prompt.text;
  key += kSep;
  key += params.to_json().dump();
  key += kSep;
  key += backend_->id();
  return sha256_hex(key);
}

GenerationResult Gateway::generate(const PromptText& prompt, const GenParams& params) {
  params.validate(max_tokens_ceiling_);
  ++generation_requests_;
  GenerationResult result;
  result.backend_id = backend_->id();
  result.prompt_digest = prompt_digest(prompt, params);

  if (cache_) {
    if (auto hit = cache_->get(result.prompt_digest);
        hit && hit->contains("text") && (*hit)["text"].is_string()) {
      ++cache_hits_;
      result.text = (*hit)["text"].get<std::string>();
      result.cached = true;
      if (trim(result.text).empty()) ++empty_completions_;
      return result;
    }
  }

  result.text = with_retry([&] { return backend_->complete(prompt.text, params); });
  if (trim(result.text).empty()) ++empty_completions_;

  if (cache_) {
    nlohmann::ordered_json record;
    record["prompt"] = prompt.text;
    record["params"] = params.to_json();
    record["text"] = result.text;
    record["backend_id"] = result.backend_id;
    record["template_id"] = prompt.template_id;
    record["template_version"] = prompt.template_version;
    record["timestamp"] = iso_timestamp();
    cache_->put(result.prompt_digest, record);
  }
  return result;
}

EmbeddingResult Gateway::embed(std::string_view text) {
  if (trim(text).empty()) throw DataError("embed: text is empty after trimming");
  ++embedding_requests_;
  EmbeddingResult result;
  result.backend_id = backend_->embed_id();
  std::string key = "embedding";
  key += kSep;
  key += text;
  key += kSep;
  key += result.backend_id;
  const auto digest = sha256_hex(key);

  if (cache_) {
    if (auto hit = cache_->get(digest); hit && hit->contains("vector")) {
      try {
        result.vector = (*hit)["vector"].get<std::vector<double>>();
        if (!result.vector.empty()) {
          ++cache_hits_;
          result.dim = result.vector.size();
          result.cached = true;
          return result;
        }
      } catch (const nlohmann::json::exception&) {
      }
    }
  }

  result.vector = with_retry([&] { return backend_->embed(std::string(text)); });
  if (result.vector.empty()) throw SchemaError("empty embedding vector");
  for (double x : result.vector) {
    if (!std::isfinite(x)) throw SchemaError("non-finite embedding value");
  }
  result.dim = result.vector.size();

  if (cache_) {
    nlohmann::ordered_json record;
    record["prompt"] = std::string(text);
    record["params"] = {{"kind", "embedding"}};
    record["vector"] = result.vector;
    record["backend_id"] = result.backend_id;
    record["timestamp"] = iso_timestamp();
    cache_->put(digest, record);
  }
  return result;
}

std::vector<BatchItem<GenerationResult>> Gateway::generate_batch(
    std::span<const PromptText> prompts, const GenParams& params, std::size_t parallelism) {
  if (parallelism < 1) throw UsageError("parallelism must be >= 1");
  params.validate(max_tokens_ceiling_);
  std::vector<BatchItem<GenerationResult>> out(prompts.size());
  parallel_for(prompts.size(), parallelism, [&](std::size_t i) {
    try {
      out[i].value = generate(prompts[i], params);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

std::vector<BatchItem<EmbeddingResult>> Gateway::embed_batch(std::span<const std::string> texts,
                                                             std::size_t parallelism) {
  if (parallelism < 1) throw UsageError("parallelism must be >= 1");
  std::vector<BatchItem<EmbeddingResult>> out(texts.size());
  parallel_for(texts.size(), parallelism, [&](std::size_t i) {
    try {
      out[i].value = embed(texts[i]);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

GatewayStats Gateway::stats() const {
  return GatewayStats{generation_requests_, embedding_requests_, cache_hits_,
                      backend_attempts_,    retries_,            empty_completions_};
}

bool looks_like_refusal(std::string_view text) {
  static const std::vector<std::string> kOpeners = {
      "i'm sorry", "i am sorry", "i cannot", "i can't", "i can not",
      "as an ai",  "i'm unable", "i am unable", "i won't",
  };
  auto folded = fold_case(trim(text).substr(0, 64));
  std::string norm;
  for (std::size_t i = 0; i < folded.size(); ++i) {
    // Map U+2019 RIGHT SINGLE QUOTATION MARK to an ASCII apostrophe.
    if (folded.compare(i, 3, "\xe2\x80\x99") == 0) {
      norm.push_back('\'');
      i += 2;
    } else {
      norm.push_back(folded[i]);
    }
  }
  return std::any_of(kOpeners.begin(), kOpeners.end(),
                     [&](const std::string& o) { return norm.starts_with(o); });
}

}  // namespace ontoforge
