#include "core/llm.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

#include "core/digest.hpp"
#include "core/errors.hpp"
#include "core/text.hpp"

namespace taxclass {

ChatRequest ChatRequest::user(std::string model_id, std::string prompt) {
  ChatRequest request;
  request.model_id = std::move(model_id);
  request.messages.push_back({ChatRole::User, std::move(prompt)});
  return request;
}

const char* to_string(UsageStage stage) {
  switch (stage) {
    case UsageStage::Inference: return "inference";
    case UsageStage::Rerank: return "rerank";
    case UsageStage::Judge: return "judge";
    case UsageStage::Assess: return "assess";
    case UsageStage::Embed: return "embed";
  }
  return "?";
}

UsageStage usage_stage_from_string(std::string_view name) {
  if (name == "inference") return UsageStage::Inference;
  if (name == "rerank") return UsageStage::Rerank;
  if (name == "judge") return UsageStage::Judge;
  if (name == "assess") return UsageStage::Assess;
  if (name == "embed") return UsageStage::Embed;
  raise(ErrorKind::ConfigError, "unknown usage stage '" + std::string(name) + "'");
}

json UsageRecord::to_json() const {
  return {{"request_id", request_id},     {"input_tokens", input_tokens},
          {"output_tokens", output_tokens}, {"latency_seconds", latency_seconds},
          {"model_id", model_id},          {"stage", to_string(stage)}};
}

UsageRecord UsageRecord::from_json(const json& value) {
  UsageRecord record;
  record.request_id = value.value("request_id", "");
  record.input_tokens = value.at("input_tokens").get<int64_t>();
  record.output_tokens = value.at("output_tokens").get<int64_t>();
  record.latency_seconds = value.value("latency_seconds", 0.0);
  record.model_id = value.at("model_id").get<std::string>();
  record.stage = usage_stage_from_string(value.value("stage", "inference"));
  return record;
}

namespace {

// Crude deterministic token estimate used by the mock provider; live
// providers report real counts.
int64_t estimate_tokens(std::string_view text) {
  return static_cast<int64_t>((text.size() + 3) / 4);
}

std::string prompt_text(const ChatRequest& request) {
  std::string text;
  for (const ChatMessage& message : request.messages) {
    if (!text.empty()) text += '\n';
    text += message.content;
  }
  return text;
}

// Options offered in the task section: text after the last `Options:` line,
// up to the next section break.
std::vector<std::string> extract_prompt_options(const std::string& prompt) {
  const size_t pos = prompt.rfind("Options:");
  if (pos == std::string::npos) return {};
  size_t begin = prompt.find('\n', pos);
  if (begin == std::string::npos) return {};
  ++begin;
  size_t end = prompt.size();
  for (const char* boundary : {"\n---", "\nReasoning:", "\nYour task:"}) {
    const size_t b = prompt.find(boundary, begin);
    if (b != std::string::npos && b < end) end = b;
  }
  std::vector<std::string> options;
  for (const std::string& part : split(prompt.substr(begin, end - begin), ';')) {
    const std::string trimmed = trim(part);
    if (!trimmed.empty()) options.push_back(trimmed);
  }
  return options;
}

std::string mock_fallback(const std::string& prompt) {
  if (contains(prompt, "Encapsulate the answer in <answer></answer>")) {
    return "<answer>0</answer>";
  }
  if (contains(prompt, "Job record:")) {
    const auto options = extract_prompt_options(prompt);
    return "Answer: " + (options.empty() ? std::string("None (00-0000.00)") : options.front());
  }
  if (contains(prompt, "Options:")) {
    const auto options = extract_prompt_options(prompt);
    std::string out = "Reasoning: Ranked by fit with the given input.\nMost likely occupations:";
    const size_t limit = options.size() < 10 ? options.size() : 10;
    for (size_t i = 0; i < limit; ++i) {
      out += "\n" + std::to_string(i + 1) + ". " + options[i];
    }
    if (limit == 0) out += "\n1. None (00-0000.00)";
    return out;
  }
  // Inference prompt: echo the demonstrated prediction so downstream stages
  // see a resolvable label.
  const size_t pred = prompt.rfind("\nPrediction: ");
  if (pred != std::string::npos) {
    size_t end = prompt.find('\n', pred + 1);
    if (end == std::string::npos) end = prompt.size();
    return "Reasoning: Mirrors the demonstrated mapping.\n" +
           prompt.substr(pred + 1, end - pred - 1);
  }
  return "Reasoning: No usable signal in the prompt.\nPrediction: None";
}

}  // namespace

std::shared_ptr<MockChatProvider> MockChatProvider::from_script(const std::string& jsonl_path) {
  auto provider = std::make_shared<MockChatProvider>();
  for (const json& record : read_jsonl(jsonl_path)) {
    MockRule rule;
    if (record.contains("contains")) {
      for (const json& item : record["contains"]) rule.contains.push_back(item.get<std::string>());
    }
    if (record.contains("not_contains")) {
      for (const json& item : record["not_contains"]) {
        rule.not_contains.push_back(item.get<std::string>());
      }
    }
    rule.completion = record.at("completion").get<std::string>();
    provider->add_rule(std::move(rule));
  }
  return provider;
}

void MockChatProvider::add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }

void MockChatProvider::set_responder(std::function<std::string(const ChatRequest&)> responder) {
  responder_ = std::move(responder);
}

ProviderResult MockChatProvider::complete(const ChatRequest& request) {
  const std::string prompt = prompt_text(request);
  std::string completion;
  bool matched = false;
  for (const MockRule& rule : rules_) {
    bool ok = true;
    for (const std::string& needle : rule.contains) {
      if (!contains(prompt, needle)) { ok = false; break; }
    }
    if (ok) {
      for (const std::string& needle : rule.not_contains) {
        if (contains(prompt, needle)) { ok = false; break; }
      }
    }
    if (ok) {
      completion = rule.completion;
      matched = true;
      break;
    }
  }
  if (!matched) {
    completion = responder_ ? responder_(request) : mock_fallback(prompt);
  }
  return {completion, estimate_tokens(prompt), estimate_tokens(completion)};
}

std::string request_digest(const ChatRequest& request) {
  std::string canonical = request.model_id;
  canonical.push_back('\x1f');
  for (const ChatMessage& message : request.messages) {
    switch (message.role) {
      case ChatRole::System: canonical += "system"; break;
      case ChatRole::User: canonical += "user"; break;
      case ChatRole::Assistant: canonical += "assistant"; break;
    }
    canonical.push_back('\x1e');
    canonical += message.content;
    canonical.push_back('\x1f');
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", request.temperature);
  canonical += buf;
  canonical.push_back('\x1f');
  canonical += request.max_output_tokens.has_value()
                   ? std::to_string(*request.max_output_tokens)
                   : std::string("-");
  return sha256_hex(canonical);
}

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
  if (path_exists(path_)) {
    for (const json& record : read_jsonl(path_)) {
      Entry entry;
      entry.completion = record.at("completion").get<std::string>();
      entry.input_tokens = record.value("input_tokens", int64_t{0});
      entry.output_tokens = record.value("output_tokens", int64_t{0});
      entry.model_id = record.value("model_id", "");
      entries_[record.at("key").get<std::string>()] = std::move(entry);
    }
  }
}

std::optional<ResponseCache::Entry> ResponseCache::get(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, const Entry& entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!entries_.emplace(key, entry).second) return;  // first write wins
  const json record = {{"key", key},
                       {"completion", entry.completion},
                       {"input_tokens", entry.input_tokens},
                       {"output_tokens", entry.output_tokens},
                       {"model_id", entry.model_id}};
  append_line(path_, record.dump());
}

size_t ResponseCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

LlmClient::LlmClient(std::shared_ptr<ChatProvider> provider, std::shared_ptr<ResponseCache> cache,
                     RetryPolicy retry, int max_in_flight)
    : provider_(std::move(provider)),
      cache_(std::move(cache)),
      retry_(retry),
      in_flight_(max_in_flight > 0 ? max_in_flight : 1) {}

CompletionResult LlmClient::complete(const ChatRequest& request, UsageStage stage) {
  const std::string key = request_digest(request);

  if (cache_ != nullptr) {
    if (const auto entry = cache_->get(key)) {
      CompletionResult result;
      result.text = entry->completion;
      result.usage = {key, entry->input_tokens, entry->output_tokens, 0.0, request.model_id,
                      stage};
      result.cache_hit = true;
      std::lock_guard<std::mutex> lock(stats_mutex_);
      ++cache_hits_;
      return result;
    }
  }

  in_flight_.acquire();
  ProviderResult provider_result;
  try {
    int attempt = 0;
    while (true) {
      try {
        provider_result = provider_->complete(request);
        break;
      } catch (const Error& e) {
        const bool transient =
            e.kind() == ErrorKind::TransportError || e.kind() == ErrorKind::RateLimited;
        if (!transient || ++attempt >= retry_.max_attempts) throw;
        static thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
        const double jitter =
            0.8 + 0.4 * (static_cast<double>(jitter_rng() >> 11) * 0x1.0p-53);
        const double delay = retry_.base_delay_seconds * static_cast<double>(1 << attempt) * jitter;
        if (delay > 0) {
          std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
      }
    }
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  CompletionResult result;
  result.text = provider_result.completion;
  result.usage = {key, provider_result.input_tokens, provider_result.output_tokens,
                  provider_result.latency_seconds, request.model_id, stage};
  result.cache_hit = false;

  if (cache_ != nullptr) {
    cache_->put(key, {result.text, result.usage.input_tokens, result.usage.output_tokens,
                      request.model_id});
  }
  std::lock_guard<std::mutex> lock(stats_mutex_);
  ++cache_misses_;
  return result;
}

size_t LlmClient::cache_hits() const {
  std::lock_guard<std::mutex> lock(stats_mutex_);
  return cache_hits_;
}

size_t LlmClient::cache_misses() const {
  std::lock_guard<std::mutex> lock(stats_mutex_);
  return cache_misses_;
}

PricingTable PricingTable::from_file(const std::string& path) {
  const json doc = json::parse(read_file(path));
  PricingTable table;
  for (const auto& [model_id, value] : doc.items()) {
    ModelPricing pricing;
    pricing.usd_per_million_input_tokens = value.at("input_per_million_usd").get<double>();
    pricing.usd_per_million_output_tokens = value.at("output_per_million_usd").get<double>();
    if (pricing.usd_per_million_input_tokens < 0 || pricing.usd_per_million_output_tokens < 0) {
      raise(ErrorKind::ConfigError, "negative price for model '" + model_id + "'");
    }
    table.models[model_id] = pricing;
  }
  return table;
}

const ModelPricing& PricingTable::require(const std::string& model_id) const {
  const auto it = models.find(model_id);
  if (it == models.end()) {
    raise(ErrorKind::UnknownModel, "no pricing for model '" + model_id + "'");
  }
  return it->second;
}

namespace {

void finalize_bucket(CostBucket& bucket, size_t n_records) {
  const double n = static_cast<double>(n_records);
  bucket.avg_tokens =
      static_cast<double>(bucket.total_input_tokens + bucket.total_output_tokens) / n;
  bucket.avg_cost_usd = bucket.total_cost_usd / n;
  bucket.avg_seconds = bucket.total_seconds / n;
  bucket.throughput_records_per_second =
      bucket.avg_seconds > 0.0 ? 1.0 / bucket.avg_seconds : 0.0;
}

json bucket_json(const CostBucket& bucket) {
  return {{"total_input_tokens", bucket.total_input_tokens},
          {"total_output_tokens", bucket.total_output_tokens},
          {"total_cost_usd", bucket.total_cost_usd},
          {"total_seconds", bucket.total_seconds},
          {"avg_tokens", bucket.avg_tokens},
          {"avg_cost_usd", bucket.avg_cost_usd},
          {"avg_seconds", bucket.avg_seconds},
          {"throughput_records_per_second", bucket.throughput_records_per_second}};
}

}  // namespace

json CostReport::to_json() const {
  json stages = json::object();
  for (const auto& [stage, bucket] : per_stage) stages[stage] = bucket_json(bucket);
  return {{"n_records", n_records}, {"overall", bucket_json(overall)}, {"per_stage", stages}};
}

CostReport cost_report(const std::vector<UsageRecord>& usages, const PricingTable& pricing,
                       size_t n_records) {
  if (n_records == 0) raise(ErrorKind::ConfigError, "cost report requires n_records >= 1");
  CostReport report;
  report.n_records = n_records;
  for (const UsageRecord& usage : usages) {
    const ModelPricing& price = pricing.require(usage.model_id);
    const double cost = (static_cast<double>(usage.input_tokens) *
                             price.usd_per_million_input_tokens +
                         static_cast<double>(usage.output_tokens) *
                             price.usd_per_million_output_tokens) /
                        1e6;
    for (CostBucket* bucket : {&report.overall, &report.per_stage[to_string(usage.stage)]}) {
      bucket->total_input_tokens += usage.input_tokens;
      bucket->total_output_tokens += usage.output_tokens;
      bucket->total_cost_usd += cost;
      bucket->total_seconds += usage.latency_seconds;
    }
  }
  finalize_bucket(report.overall, n_records);
  for (auto& [_, bucket] : report.per_stage) finalize_bucket(bucket, n_records);
  return report;
}

}  // namespace taxclass
