#pragma once

#include <memory>
#include <string>

#include "core/io.hpp"
#include "core/llm.hpp"
#include "core/retrieval.hpp"

namespace taxclass {

// OpenAI-compatible chat completions endpoint. Credentials come from the
// environment variable named in the spec, never from config files.
struct HttpProviderSpec {
  std::string base_url;  // e.g. https://api.openai.com
  std::string path;      // defaults per provider kind
  std::string api_key_env;
  std::string model;  // embeddings only
  int timeout_seconds = 120;

  static HttpProviderSpec from_json(const json& value, const std::string& default_path);
};

class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpProviderSpec spec);

  std::string id() const override;
  ProviderResult complete(const ChatRequest& request) override;

 private:
  HttpProviderSpec spec_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpProviderSpec spec, size_t batch_size = 128);

  std::string id() const override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                     EmbedCallStats* stats = nullptr) override;

 private:
  HttpProviderSpec spec_;
  size_t batch_size_;
};

// Provider factories driven by the run configuration: chat kind mock|http,
// embedding kind hash|http.
std::shared_ptr<ChatProvider> make_chat_provider(const json& spec);
std::shared_ptr<EmbeddingProvider> make_embedding_provider(const json& spec);

}  // namespace taxclass
