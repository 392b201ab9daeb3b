#include "core/http_providers.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include "core/errors.hpp"

namespace taxclass {

HttpProviderSpec HttpProviderSpec::from_json(const json& value, const std::string& default_path) {
  HttpProviderSpec spec;
  spec.base_url = value.at("base_url").get<std::string>();
  spec.path = value.value("path", default_path);
  spec.api_key_env = value.value("api_key_env", "");
  spec.model = value.value("model", "");
  spec.timeout_seconds = value.value("timeout_seconds", 120);
  return spec;
}

namespace {

std::string api_key_for(const HttpProviderSpec& spec) {
  if (spec.api_key_env.empty()) return "";
  const char* key = std::getenv(spec.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    raise(ErrorKind::AuthError, "environment variable " + spec.api_key_env + " is not set");
  }
  return key;
}

json post_json(const HttpProviderSpec& spec, const json& body) {
  httplib::Client client(spec.base_url);
  client.set_connection_timeout(spec.timeout_seconds);
  client.set_read_timeout(spec.timeout_seconds);
  httplib::Headers headers;
  const std::string key = api_key_for(spec);
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  const auto response = client.Post(spec.path, headers, body.dump(), "application/json");
  if (!response) {
    raise(ErrorKind::TransportError,
          "no response from " + spec.base_url + spec.path + " (" +
              httplib::to_string(response.error()) + ")");
  }
  if (response->status == 401 || response->status == 403) {
    raise(ErrorKind::AuthError, "status " + std::to_string(response->status) + " from " +
                                    spec.base_url + spec.path);
  }
  if (response->status == 429) {
    raise(ErrorKind::RateLimited, "status 429 from " + spec.base_url + spec.path);
  }
  if (response->status < 200 || response->status >= 300) {
    raise(ErrorKind::TransportError, "status " + std::to_string(response->status) + " from " +
                                         spec.base_url + spec.path + ": " +
                                         response->body.substr(0, 200));
  }
  try {
    return json::parse(response->body);
  } catch (const json::exception& e) {
    raise(ErrorKind::TransportError, std::string("malformed provider response: ") + e.what());
  }
}

const char* role_name(ChatRole role) {
  switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "user";
}

}  // namespace

HttpChatProvider::HttpChatProvider(HttpProviderSpec spec) : spec_(std::move(spec)) {}

std::string HttpChatProvider::id() const { return "http:" + spec_.base_url + spec_.path; }

ProviderResult HttpChatProvider::complete(const ChatRequest& request) {
  json messages = json::array();
  for (const ChatMessage& message : request.messages) {
    messages.push_back({{"role", role_name(message.role)}, {"content", message.content}});
  }
  json body = {{"model", request.model_id},
               {"messages", messages},
               {"temperature", request.temperature}};
  if (request.max_output_tokens.has_value()) body["max_tokens"] = *request.max_output_tokens;

  const auto start = std::chrono::steady_clock::now();
  const json response = post_json(spec_, body);
  ProviderResult result;
  result.latency_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    result.completion = response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    raise(ErrorKind::TransportError, "provider response lacks choices[0].message.content");
  }
  if (response.contains("usage")) {
    result.input_tokens = response["usage"].value("prompt_tokens", int64_t{0});
    result.output_tokens = response["usage"].value("completion_tokens", int64_t{0});
  }
  return result;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpProviderSpec spec, size_t batch_size)
    : spec_(std::move(spec)), batch_size_(batch_size == 0 ? 1 : batch_size) {}

std::string HttpEmbeddingProvider::id() const {
  return "http:" + spec_.model + "@" + spec_.base_url + spec_.path;
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                          EmbedCallStats* stats) {
  if (texts.empty()) raise(ErrorKind::ConfigError, "embed called with no texts");
  if (stats != nullptr) *stats = {};
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (size_t begin = 0; begin < texts.size(); begin += batch_size_) {
    const size_t end = std::min(begin + batch_size_, texts.size());
    json input = json::array();
    for (size_t i = begin; i < end; ++i) input.push_back(texts[i]);

    json response;
    const auto start = std::chrono::steady_clock::now();
    try {
      response = post_json(spec_, {{"model", spec_.model}, {"input", input}});
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::TransportError) {
        raise(ErrorKind::ProviderUnavailable, e.what());
      }
      throw;
    }
    if (stats != nullptr) {
      stats->latency_seconds +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (response.contains("usage")) {
        stats->tokens += response["usage"].value("total_tokens", int64_t{0});
      }
    }
    if (!response.contains("data") || !response["data"].is_array() ||
        response["data"].size() != end - begin) {
      raise(ErrorKind::DimensionMismatch, "embedding response size mismatch");
    }
    for (const json& item : response["data"]) {
      EmbeddingVector vec;
      for (const json& v : item.at("embedding")) vec.values.push_back(v.get<float>());
      if (!out.empty() && vec.dim() != out.front().dim()) {
        raise(ErrorKind::DimensionMismatch, "provider returned inconsistent dimensions");
      }
      out.push_back(std::move(vec));
    }
  }
  return out;
}

std::shared_ptr<ChatProvider> make_chat_provider(const json& spec) {
  const std::string kind = spec.value("kind", "mock");
  if (kind == "mock") {
    if (spec.contains("script") && !spec["script"].get<std::string>().empty()) {
      return MockChatProvider::from_script(spec["script"].get<std::string>());
    }
    return std::make_shared<MockChatProvider>();
  }
  if (kind == "http") {
    return std::make_shared<HttpChatProvider>(
        HttpProviderSpec::from_json(spec, "/v1/chat/completions"));
  }
  raise(ErrorKind::ConfigError, "unknown chat provider kind '" + kind + "'");
}

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const json& spec) {
  const std::string kind = spec.value("kind", "hash");
  if (kind == "hash") {
    return std::make_shared<HashEmbeddingProvider>(spec.value("dim", size_t{64}),
                                                   spec.value("salt", uint64_t{0}));
  }
  if (kind == "http") {
    return std::make_shared<HttpEmbeddingProvider>(
        HttpProviderSpec::from_json(spec, "/v1/embeddings"), spec.value("batch_size", size_t{128}));
  }
  raise(ErrorKind::ConfigError, "unknown embedding provider kind '" + kind + "'");
}

}  // namespace taxclass
