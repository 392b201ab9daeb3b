#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/llm.hpp"
#include "core/prompting.hpp"
#include "core/retrieval.hpp"
#include "core/taxonomy.hpp"

namespace taxclass {

enum class StagePlan { Full, NoRerank, InferenceOnly };

StagePlan stage_plan_from_string(std::string_view name);
const char* to_string(StagePlan plan);

// One experimental cell: reasoning mode x retrieval unit x stage ablation
// x (m, n, k) x seed x model ids.
struct PipelineConfig {
  TaskKind task_kind = TaskKind::Occupation;
  ReasoningMode reasoning = ReasoningMode::Tgre;
  std::optional<RetrievalUnit> unit = RetrievalUnit::Sentence;  // nullopt = none
  StagePlan stages = StagePlan::Full;
  size_t m = 10;
  size_t n = 10;
  size_t k = 1;
  uint64_t seed = 0;
  std::string inference_model;
  std::string rerank_model;  // may be a stronger model than inference
  std::optional<int> max_output_tokens;

  // inference_only <=> unit none; n <= m; m, n, k >= 1.
  void validate() const;
};

struct StageTimings {
  double inference = 0.0;
  double retrieval = 0.0;
  double rerank = 0.0;
};

struct ClassificationResult {
  std::string instance_id;
  std::string input;
  InferenceOutput inference;
  bool inference_unparseable = false;
  std::vector<ScoredCandidate> retrieved;
  std::vector<std::string> final_labels;  // entity ids, or label texts under inference_only
  size_t dropped_rerank_lines = 0;
  bool rerank_unparseable = false;
  bool unclassifiable = false;
  bool failed = false;
  std::string error;
  std::vector<UsageRecord> usage;
  StageTimings stage_timings;

  json to_json() const;
};

struct InputRecord {
  std::string instance_id;
  std::string text;
};

std::vector<InputRecord> load_input_records(const std::string& jsonl_path);

struct BatchStats {
  size_t total = 0;
  size_t succeeded = 0;
  size_t failed = 0;
  size_t cancelled = 0;
  bool aborted = false;  // failure rate above threshold
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, const Taxonomy& taxonomy, const RetrievalIndex* index,
           std::shared_ptr<LlmClient> inference_client, std::shared_ptr<LlmClient> rerank_client,
           std::shared_ptr<EmbeddingProvider> embedder, const TemplateSet& templates,
           ExampleSet examples);

  ClassificationResult classify(const std::string& instance_id, const std::string& input) const;

  // Results come back in input order regardless of completion order. A record
  // that throws is marked failed without aborting the batch; above the
  // failure-rate threshold the whole run is flagged aborted.
  std::vector<ClassificationResult> classify_batch(const std::vector<InputRecord>& inputs,
                                                   size_t concurrency, double failure_threshold,
                                                   BatchStats& stats,
                                                   const std::atomic<bool>* cancel = nullptr) const;

  std::string render_inference_prompt_for(const std::string& input) const;

  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  const Taxonomy& taxonomy_;
  const RetrievalIndex* index_;
  std::shared_ptr<LlmClient> inference_client_;
  std::shared_ptr<LlmClient> rerank_client_;
  std::shared_ptr<EmbeddingProvider> embedder_;
  const TemplateSet& templates_;
  ExampleSet examples_;
};

}  // namespace taxclass
