#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/taxonomy.hpp"

namespace taxclass {

enum class TaskKind { Occupation, Skill };
enum class ReasoningMode { Tgre, Cot };
enum class PromptStage { Inference, Rerank };

TaskKind task_kind_from_string(std::string_view name);
ReasoningMode reasoning_from_string(std::string_view name);
const char* to_string(TaskKind kind);
const char* to_string(ReasoningMode mode);

// Plain-text template with ${variable} placeholders.
struct PromptTemplate {
  std::string name;
  std::string body;
  std::set<std::string> required_variables;

  static PromptTemplate from_string(std::string name, std::string body);
  static PromptTemplate from_file(const std::string& path);

  // Substitutes every placeholder; throws MissingVariable when a placeholder
  // has no binding. Substituted values are inserted verbatim.
  std::string render(const std::map<std::string, std::string>& variables) const;
};

// Loads templates/<task>/<reasoning>_<stage>.txt style files on demand.
class TemplateSet {
 public:
  explicit TemplateSet(std::string dir);

  const PromptTemplate& get(const std::string& relpath) const;
  const PromptTemplate& stage_template(TaskKind kind, ReasoningMode mode, PromptStage stage) const;
  const PromptTemplate& knowledge_recall() const { return get("knowledge/recall"); }
  const PromptTemplate& knowledge_recognition() const { return get("knowledge/recognition"); }
  const PromptTemplate& judge(TaskKind kind) const;

 private:
  std::string dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::unique_ptr<PromptTemplate>> cache_;
};

// In-context example: input, taxonomy-grounded rationale, labels, and (for
// reranking demonstrations) the offered options and ranked output.
struct GroundedExample {
  std::string input;
  std::string rationale;
  std::vector<std::string> labels;
  std::vector<std::string> options;
  std::vector<std::string> ranked_output;
};

// Builds the grounded rationale by splicing the taxonomy description of each
// label verbatim. Occupations: the job title/company sentence form. Skills:
// one bracketed `[label: description]` clause per label.
std::string make_grounded_rationale(const std::string& input,
                                    const std::vector<std::string>& labels,
                                    const Taxonomy& taxonomy, TaskKind kind);

struct PoolInstance {
  std::string id;
  std::string input;
  std::vector<std::string> labels;
  std::vector<std::string> options;
  std::vector<std::string> ranked_output;
};

std::vector<PoolInstance> load_example_pool(const std::string& jsonl_path);

// Pre-authored chain-of-thought demonstrations shipped as data.
struct FixtureExample {
  std::string input;
  std::string rationale;
  std::vector<std::string> labels;
  std::vector<std::string> options;
  std::vector<std::string> ranked_output;
};

struct CotFixtures {
  std::vector<FixtureExample> inference;
  std::vector<FixtureExample> rerank;
};

CotFixtures load_cot_fixtures(const std::string& json_path);

struct ExampleSet {
  std::vector<GroundedExample> inference;
  std::vector<GroundedExample> rerank;
};

// k grounded examples drawn uniformly from the pool (TGRE) or taken from the
// fixed fixture files (CoT).
ExampleSet select_example_set(const std::vector<PoolInstance>& pool, const CotFixtures* fixtures,
                              size_t k, Rng& rng, ReasoningMode mode, const Taxonomy& taxonomy,
                              TaskKind kind);

std::string render_example_block(const GroundedExample& example, TaskKind kind,
                                 ReasoningMode mode, PromptStage stage);

std::string render_inference_prompt(const PromptTemplate& tmpl,
                                    const std::vector<GroundedExample>& examples,
                                    const std::string& input, TaskKind kind, ReasoningMode mode);

struct RerankOption {
  std::string entity_id;
  std::string text;  // exactly as offered in the prompt
};

std::string render_options_line(const std::vector<RerankOption>& options);

std::string render_rerank_prompt(const PromptTemplate& tmpl,
                                 const std::vector<GroundedExample>& examples,
                                 const std::string& input,
                                 const std::vector<RerankOption>& options, TaskKind kind,
                                 ReasoningMode mode);

struct InferenceLabel {
  std::string title;
  std::optional<std::string> code_or_id;

  std::string text() const;
};

struct InferenceOutput {
  std::string rationale;
  std::vector<InferenceLabel> labels;
  bool none_declared = false;
  std::string raw;

  std::vector<std::string> label_texts() const;
};

// Parses an inference completion back into rationale + labels. Occupation
// outputs carry a `Prediction:` / `O*NET-SOC 2019 Occupations:` section with
// `Title (code)` entries; skill outputs carry either a `Skills:` section or
// bracketed `[label: description]` clauses inside the rationale.
InferenceOutput parse_inference_output(const std::string& raw, TaskKind kind);

struct RerankParse {
  std::vector<std::string> entity_ids;  // always a subset of the offered options
  size_t dropped_lines = 0;
  bool none_selected = false;
};

RerankParse parse_rerank_output(const std::string& raw, const std::vector<RerankOption>& options);

// Judge answers: `Answer:` line with semicolon-separated labels resolved
// against the offered pool. Unresolvable entries are dropped.
std::vector<std::string> parse_judge_answer(const std::string& raw,
                                            const std::vector<std::string>& pool);

}  // namespace taxclass
