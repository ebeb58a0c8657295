#include <httplib.h>

#include <cmath>

#include "ontoforge/error.hpp"
#include "ontoforge/gateway.hpp"

namespace ontoforge {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto& url = config_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw UsageError("backend base_url must start with http:// or https://: " + url);
  }
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw UsageError("unsupported scheme in base_url: " + scheme);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = url;
  } else {
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
  if (config_.model.empty()) throw UsageError("backend model name is empty");
  if (config_.embed_model.empty()) config_.embed_model = config_.model;
}

std::string HttpBackend::id() const { return "openai-compatible:" + config_.base_url + "#" + config_.model; }

std::string HttpBackend::embed_id() const {
  return "openai-compatible:" + config_.base_url + "#" + config_.embed_model;
}

std::string HttpBackend::post(const std::string& path, const nlohmann::json& body) const {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(std::chrono::seconds(10));
  cli.set_read_timeout(config_.timeout);
  cli.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  auto res = cli.Post(path_prefix_ + path, headers, body.dump(), "application/json");
  if (!res) {
    throw BackendError("request to " + scheme_host_port_ + path_prefix_ + path +
                           " failed: " + httplib::to_string(res.error()),
                       /*transient=*/true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw HttpStatusError(res->status, res->body.substr(0, 512));
  }
  return res->body;
}

nlohmann::json HttpBackend::chat_request(const std::string& model, const std::string& prompt,
                                         const GenParams& params) {
  nlohmann::json req;
  req["model"] = model;
  req["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  req["temperature"] = params.temperature;
  req["max_tokens"] = params.max_tokens;
  if (!params.stop_sequences.empty()) req["stop"] = params.stop_sequences;
  if (params.seed) req["seed"] = *params.seed;
  return req;
}

std::string HttpBackend::parse_chat_response(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    if (!content.is_string()) throw SchemaError("message.content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(e.what());
  }
}

std::vector<double> HttpBackend::parse_embedding_response(const std::string& body) {
  std::vector<double> v;
  try {
    auto j = nlohmann::json::parse(body);
    const auto& arr = j.at("data").at(0).at("embedding");
    if (!arr.is_array()) throw SchemaError("embedding is not an array");
    v.reserve(arr.size());
    for (const auto& x : arr) {
      if (!x.is_number()) throw SchemaError("embedding entry is not a number");
      v.push_back(x.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(e.what());
  }
  if (v.empty()) throw SchemaError("empty embedding");
  for (double x : v) {
    if (!std::isfinite(x)) throw SchemaError("non-finite embedding value");
  }
  return v;
}

std::string HttpBackend::complete(const std::string& prompt, const GenParams& params) {
  return parse_chat_response(post(config_.chat_path, chat_request(config_.model, prompt, params)));
}

std::vector<double> HttpBackend::embed(const std::string& text) {
  nlohmann::json req{{"model", config_.embed_model}, {"input", text}};
  return parse_embedding_response(post(config_.embed_path, req));
}

}  // namespace ontoforge
