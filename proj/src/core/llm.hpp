#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "core/io.hpp"

namespace taxclass {

enum class ChatRole { System, User, Assistant };

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string content;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;  // experiment presets pin this to zero
  std::optional<int> max_output_tokens;

  static ChatRequest user(std::string model_id, std::string prompt);
};

enum class UsageStage { Inference, Rerank, Judge, Assess, Embed };

const char* to_string(UsageStage stage);
UsageStage usage_stage_from_string(std::string_view name);

struct UsageRecord {
  std::string request_id;
  int64_t input_tokens = 0;
  int64_t output_tokens = 0;
  double latency_seconds = 0.0;
  std::string model_id;
  UsageStage stage = UsageStage::Inference;

  json to_json() const;
  static UsageRecord from_json(const json& value);
};

struct ProviderResult {
  std::string completion;
  int64_t input_tokens = 0;
  int64_t output_tokens = 0;
  // Measured around the transport call by remote providers; exactly zero for
  // in-process mocks, which keeps mock runs bit-reproducible.
  double latency_seconds = 0.0;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string id() const = 0;
  virtual ProviderResult complete(const ChatRequest& request) = 0;
};

// Deterministic offline provider. Scripted rules are checked in order; the
// first rule whose `contains` strings all appear (and whose `not_contains`
// strings all do not) wins. Without a matching rule, a format-aware fallback
// echoes something structurally valid for the prompt at hand.
struct MockRule {
  std::vector<std::string> contains;
  std::vector<std::string> not_contains;
  std::string completion;
};

class MockChatProvider : public ChatProvider {
 public:
  MockChatProvider() = default;
  static std::shared_ptr<MockChatProvider> from_script(const std::string& jsonl_path);

  void add_rule(MockRule rule);
  void set_responder(std::function<std::string(const ChatRequest&)> responder);

  std::string id() const override { return "mock"; }
  ProviderResult complete(const ChatRequest& request) override;

 private:
  std::vector<MockRule> rules_;
  std::function<std::string(const ChatRequest&)> responder_;
};

// Cache key: digest over model id, full message list, temperature, and max
// output tokens. Any field difference yields a different key.
std::string request_digest(const ChatRequest& request);

// Append-only line-delimited record store keyed by request digest. Safe to
// merge across runs; concurrent reads with serialized appends.
class ResponseCache {
 public:
  struct Entry {
    std::string completion;
    int64_t input_tokens = 0;
    int64_t output_tokens = 0;
    std::string model_id;
  };

  explicit ResponseCache(std::string path);

  std::optional<Entry> get(const std::string& key) const;
  void put(const std::string& key, const Entry& entry);
  size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_seconds = 1.0;  // delay = base * 2^attempt, +/-20% jitter
};

struct CompletionResult {
  std::string text;
  UsageRecord usage;
  bool cache_hit = false;
};

// Provider + cache + bounded concurrency + retry wrapper. Latency is measured
// around the transport call only; cache hits report the original usage.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<ChatProvider> provider, std::shared_ptr<ResponseCache> cache,
            RetryPolicy retry = {}, int max_in_flight = 8);

  CompletionResult complete(const ChatRequest& request, UsageStage stage);

  size_t cache_hits() const;
  size_t cache_misses() const;

 private:
  std::shared_ptr<ChatProvider> provider_;
  std::shared_ptr<ResponseCache> cache_;
  RetryPolicy retry_;
  std::counting_semaphore<> in_flight_;
  mutable std::mutex stats_mutex_;
  size_t cache_hits_ = 0;
  size_t cache_misses_ = 0;
};

struct ModelPricing {
  double usd_per_million_input_tokens = 0.0;
  double usd_per_million_output_tokens = 0.0;
};

struct PricingTable {
  std::map<std::string, ModelPricing> models;

  static PricingTable from_file(const std::string& path);
  const ModelPricing& require(const std::string& model_id) const;
};

struct CostBucket {
  int64_t total_input_tokens = 0;
  int64_t total_output_tokens = 0;
  double total_cost_usd = 0.0;
  double total_seconds = 0.0;
  double avg_tokens = 0.0;
  double avg_cost_usd = 0.0;
  double avg_seconds = 0.0;
  double throughput_records_per_second = 0.0;
};

struct CostReport {
  CostBucket overall;
  std::map<std::string, CostBucket> per_stage;
  size_t n_records = 0;

  json to_json() const;
};

CostReport cost_report(const std::vector<UsageRecord>& usages, const PricingTable& pricing,
                       size_t n_records);

}  // namespace taxclass
