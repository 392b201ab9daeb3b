#include "core/pipeline.hpp"

#include <atomic>

#include "core/digest.hpp"
#include "core/errors.hpp"
#include "core/parallel.hpp"
#include "core/text.hpp"

namespace taxclass {

std::atomic<bool>& cancel_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

StagePlan stage_plan_from_string(std::string_view name) {
  if (name == "full") return StagePlan::Full;
  if (name == "no_rerank") return StagePlan::NoRerank;
  if (name == "inference_only") return StagePlan::InferenceOnly;
  raise(ErrorKind::ConfigError, "unknown stage plan '" + std::string(name) + "'");
}

const char* to_string(StagePlan plan) {
  switch (plan) {
    case StagePlan::Full: return "full";
    case StagePlan::NoRerank: return "no_rerank";
    case StagePlan::InferenceOnly: return "inference_only";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (stages == StagePlan::InferenceOnly) {
    if (unit.has_value()) {
      raise(ErrorKind::ConfigError, "inference_only runs take unit = none");
    }
  } else if (!unit.has_value()) {
    raise(ErrorKind::ConfigError, "retrieval stages require unit sentence or label");
  }
  if (m == 0 || n == 0 || k == 0) raise(ErrorKind::ConfigError, "m, n, k must be >= 1");
  if (n > m) raise(ErrorKind::ConfigError, "rerank depth n must not exceed retrieval depth m");
  if (inference_model.empty()) raise(ErrorKind::ConfigError, "inference model id is empty");
}

json ClassificationResult::to_json() const {
  json labels = json::array();
  for (const InferenceLabel& label : inference.labels) {
    labels.push_back({{"title", label.title},
                      {"code_or_id", label.code_or_id.has_value() ? json(*label.code_or_id)
                                                                  : json(nullptr)}});
  }
  json retrieved_json = json::array();
  for (const ScoredCandidate& candidate : retrieved) {
    retrieved_json.push_back(
        {{"id", candidate.entity_id}, {"score", candidate.score}, {"rank", candidate.rank}});
  }
  json usage_json = json::array();
  for (const UsageRecord& record : usage) usage_json.push_back(record.to_json());

  return {{"instance_id", instance_id},
          {"input", input},
          {"inference",
           {{"rationale", inference.rationale},
            {"labels", labels},
            {"none_declared", inference.none_declared},
            {"raw", inference.raw},
            {"unparseable", inference_unparseable}}},
          {"retrieved", retrieved_json},
          {"final", final_labels},
          {"dropped_rerank_lines", dropped_rerank_lines},
          {"rerank_unparseable", rerank_unparseable},
          {"unclassifiable", unclassifiable},
          {"failed", failed},
          {"error", error},
          {"usage", usage_json},
          {"stage_timings",
           {{"inference", stage_timings.inference},
            {"retrieval", stage_timings.retrieval},
            {"rerank", stage_timings.rerank}}}};
}

std::vector<InputRecord> load_input_records(const std::string& jsonl_path) {
  std::vector<InputRecord> records;
  for (const json& value : read_jsonl(jsonl_path)) {
    InputRecord record;
    record.instance_id = value.at("instance_id").get<std::string>();
    record.text = value.at("text").get<std::string>();
    records.push_back(std::move(record));
  }
  return records;
}

Pipeline::Pipeline(PipelineConfig config, const Taxonomy& taxonomy, const RetrievalIndex* index,
                   std::shared_ptr<LlmClient> inference_client,
                   std::shared_ptr<LlmClient> rerank_client,
                   std::shared_ptr<EmbeddingProvider> embedder, const TemplateSet& templates,
                   ExampleSet examples)
    : config_(std::move(config)),
      taxonomy_(taxonomy),
      index_(index),
      inference_client_(std::move(inference_client)),
      rerank_client_(std::move(rerank_client)),
      embedder_(std::move(embedder)),
      templates_(templates),
      examples_(std::move(examples)) {
  config_.validate();
  if (config_.stages != StagePlan::InferenceOnly) {
    if (index_ == nullptr) raise(ErrorKind::ConfigMismatch, "retrieval stages need an index");
    if (index_->unit() != *config_.unit) {
      raise(ErrorKind::ConfigMismatch, std::string("index built for unit '") +
                                           to_string(index_->unit()) + "', run configured for '" +
                                           to_string(*config_.unit) + "'");
    }
    if (index_->taxonomy_name() != taxonomy_.name()) {
      raise(ErrorKind::ConfigMismatch, "index built for taxonomy '" + index_->taxonomy_name() +
                                           "', run uses '" + taxonomy_.name() + "'");
    }
    if (index_->size() != taxonomy_.size()) {
      raise(ErrorKind::ConfigMismatch, "index entity count differs from taxonomy size");
    }
    if (embedder_ == nullptr) raise(ErrorKind::ConfigMismatch, "retrieval stages need an embedder");
    if (embedder_->id() != index_->provider_id()) {
      raise(ErrorKind::ConfigMismatch, "index built with provider '" + index_->provider_id() +
                                           "', run configured with '" + embedder_->id() + "'");
    }
  }
}

std::string Pipeline::render_inference_prompt_for(const std::string& input) const {
  const PromptTemplate& tmpl =
      templates_.stage_template(config_.task_kind, config_.reasoning, PromptStage::Inference);
  return render_inference_prompt(tmpl, examples_.inference, input, config_.task_kind,
                                 config_.reasoning);
}

ClassificationResult Pipeline::classify(const std::string& instance_id,
                                        const std::string& input) const {
  ClassificationResult result;
  result.instance_id = instance_id;
  result.input = input;

  // Stage 1: inference.
  ChatRequest request =
      ChatRequest::user(config_.inference_model, render_inference_prompt_for(input));
  request.max_output_tokens = config_.max_output_tokens;
  const CompletionResult inference_completion =
      inference_client_->complete(request, UsageStage::Inference);
  result.usage.push_back(inference_completion.usage);
  result.stage_timings.inference = inference_completion.usage.latency_seconds;

  try {
    result.inference = parse_inference_output(inference_completion.text, config_.task_kind);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Unparseable) throw;
    result.inference_unparseable = true;
    result.inference.raw = inference_completion.text;
  }

  if (config_.stages == StagePlan::InferenceOnly) {
    if (!result.inference.none_declared) result.final_labels = result.inference.label_texts();
    return result;
  }

  // Stage 2: retrieval. An unparseable inference falls back to the raw
  // completion as the query; a declared None keeps the rationale under the
  // sentence unit and marks the record unclassifiable under the label unit.
  std::string query;
  if (result.inference_unparseable) {
    query = trim(result.inference.raw);
  } else if (result.inference.none_declared && *config_.unit == RetrievalUnit::Label) {
    result.unclassifiable = true;
    return result;
  } else {
    try {
      query = make_query(result.inference.rationale, result.inference.label_texts(),
                         *config_.unit);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyInference) throw;
      result.unclassifiable = true;
      return result;
    }
  }
  if (query.empty()) {
    result.unclassifiable = true;
    return result;
  }

  EmbedCallStats embed_stats;
  result.retrieved = index_->retrieve(query, config_.m, *embedder_, &embed_stats);
  result.usage.push_back({sha256_hex(query), embed_stats.tokens, 0, embed_stats.latency_seconds,
                          embedder_->id(), UsageStage::Embed});
  result.stage_timings.retrieval = embed_stats.latency_seconds;

  if (config_.stages == StagePlan::NoRerank) {
    const size_t take = std::min(config_.n, result.retrieved.size());
    for (size_t i = 0; i < take; ++i) result.final_labels.push_back(result.retrieved[i].entity_id);
    return result;
  }

  // Stage 3: reranking over exactly the retrieved options.
  std::vector<RerankOption> options;
  options.reserve(result.retrieved.size());
  for (const ScoredCandidate& candidate : result.retrieved) {
    const TaxonomyEntity* entity = taxonomy_.find_by_id(candidate.entity_id);
    if (entity == nullptr) {
      raise(ErrorKind::ConfigMismatch, "index id '" + candidate.entity_id +
                                           "' is not in the taxonomy");
    }
    options.push_back({candidate.entity_id, entity_label(*entity)});
  }

  const PromptTemplate& rerank_tmpl =
      templates_.stage_template(config_.task_kind, config_.reasoning, PromptStage::Rerank);
  ChatRequest rerank_request = ChatRequest::user(
      config_.rerank_model.empty() ? config_.inference_model : config_.rerank_model,
      render_rerank_prompt(rerank_tmpl, examples_.rerank, input, options, config_.task_kind,
                           config_.reasoning));
  rerank_request.max_output_tokens = config_.max_output_tokens;
  const CompletionResult rerank_completion =
      rerank_client_->complete(rerank_request, UsageStage::Rerank);
  result.usage.push_back(rerank_completion.usage);
  result.stage_timings.rerank = rerank_completion.usage.latency_seconds;

  try {
    RerankParse parsed = parse_rerank_output(rerank_completion.text, options);
    result.dropped_rerank_lines = parsed.dropped_lines;
    if (parsed.entity_ids.size() > config_.n) parsed.entity_ids.resize(config_.n);
    result.final_labels = std::move(parsed.entity_ids);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Unparseable) throw;
    result.rerank_unparseable = true;
  }
  return result;
}

std::vector<ClassificationResult> Pipeline::classify_batch(const std::vector<InputRecord>& inputs,
                                                           size_t concurrency,
                                                           double failure_threshold,
                                                           BatchStats& stats,
                                                           const std::atomic<bool>* cancel) const {
  if (inputs.empty()) raise(ErrorKind::ConfigError, "empty input batch");
  stats = {};
  stats.total = inputs.size();

  std::vector<ClassificationResult> results(inputs.size());
  std::vector<char> processed(inputs.size(), 0);
  std::atomic<size_t> failures{0};
  std::atomic<bool> threshold_tripped{false};
  const size_t failure_cap =
      failure_threshold >= 1.0
          ? inputs.size()
          : static_cast<size_t>(failure_threshold * static_cast<double>(inputs.size()));

  parallel_for(
      inputs.size(), concurrency,
      [&](size_t i) {
        if (threshold_tripped.load()) return;
        ClassificationResult result;
        try {
          result = classify(inputs[i].instance_id, inputs[i].text);
        } catch (const std::exception& e) {
          result.instance_id = inputs[i].instance_id;
          result.input = inputs[i].text;
          result.failed = true;
          result.error = e.what();
          if (failures.fetch_add(1) + 1 > failure_cap) threshold_tripped.store(true);
        }
        results[i] = std::move(result);
        processed[i] = 1;
      },
      cancel);

  // Drop records that never ran (cancelled or post-abort); completed work is
  // kept in input order.
  std::vector<ClassificationResult> completed;
  completed.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (processed[i] == 0) {
      ++stats.cancelled;
      continue;
    }
    if (results[i].failed) {
      ++stats.failed;
    } else {
      ++stats.succeeded;
    }
    completed.push_back(std::move(results[i]));
  }
  stats.aborted = threshold_tripped.load();
  return completed;
}

}  // namespace taxclass
