#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/llm.hpp"
#include "core/prompting.hpp"
#include "core/rng.hpp"
#include "core/taxonomy.hpp"

namespace taxclass {

enum class TaskMode { CompleteRecall, PartialRecall, Recognition };
enum class TaskDirection { CT, TC };
enum class TaskGranularity { Digits8, Digits2 };
enum class AnswerKind { Code, Title };

struct TaskVariant {
  TaskMode mode;
  TaskDirection direction;
  TaskGranularity granularity;

  bool operator==(const TaskVariant&) const = default;
};

// The eight legal cells: complete recall and recognition run CT8/TC8/TC2,
// partial recall runs CT8/TC8 only. CT2 never exists.
const std::vector<TaskVariant>& all_task_variants();
bool variant_is_legal(const TaskVariant& variant);
std::string variant_name(const TaskVariant& variant);
TaskVariant variant_from_name(std::string_view name);

struct OneShotExample {
  std::string query;
  std::string answer;
  std::vector<std::string> options;  // recognition only
};

struct KnowledgeTask {
  TaskVariant variant;
  std::string entity_id;
  std::string query;
  std::string query_field;
  std::string answer;
  std::string answer_field;
  std::optional<std::string> hint;   // partial recall only
  std::vector<std::string> options;  // recognition only
  OneShotExample example;
};

AnswerKind variant_answer_kind(const TaskVariant& variant);

// One task per taxonomy entity. The one-shot example entity is fixed per run
// seed and never demonstrates itself. Throws IllegalVariant for excluded
// cells.
std::vector<KnowledgeTask> generate_tasks(const Taxonomy& taxonomy, const TaskVariant& variant,
                                          Rng& rng);

// Codes: first 5 of the 10 characters. Titles: first ceil(w/2) words.
std::string make_partial_hint(std::string_view answer, AnswerKind kind);

std::string render_task_prompt(const KnowledgeTask& task, const TemplateSet& templates);

struct AnswerExtraction {
  std::string text;
  bool tagged = false;  // found an <answer></answer> span
};

AnswerExtraction extract_answer(std::string_view completion);

// Exact match; titles compare under lookup normalization, codes strictly.
// The templates' `0` no-answer marker scores false unless expected is `0`.
bool score_answer(std::string_view generated, std::string_view expected, AnswerKind kind);

struct AssessOptions {
  std::string model_id;
  std::optional<int> max_output_tokens;
  size_t concurrency = 4;
};

struct TaskOutcome {
  std::string variant;
  std::string entity_id;
  std::string query;
  std::string expected;
  std::string generated;
  bool correct = false;
  bool extraction_ok = false;
};

struct VariantAccuracy {
  std::string variant;
  size_t total = 0;
  size_t correct = 0;
  size_t extraction_failures = 0;
  double accuracy = 0.0;
  double extraction_failure_rate = 0.0;
};

struct AssessmentReport {
  std::vector<TaskOutcome> outcomes;  // task order, all variants
  std::vector<VariantAccuracy> variants;
  double average = 0.0;  // unweighted mean over the variants run
  std::vector<UsageRecord> usage;
};

// Runs every task of every requested variant through the model at
// temperature zero and scores exact-match accuracy per variant. Each variant
// draws its tasks from a seed forked off the run seed, so variant subsets are
// stable regardless of which other variants run.
AssessmentReport assess(LlmClient& client, const Taxonomy& taxonomy,
                        const std::vector<TaskVariant>& variants, const TemplateSet& templates,
                        Rng& rng, const AssessOptions& options);

}  // namespace taxclass
