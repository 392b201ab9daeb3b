#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "core/io.hpp"
#include "core/llm.hpp"
#include "core/prompting.hpp"
#include "core/rng.hpp"

namespace taxclass {

// |top-k ∩ truth| / k. Empty predictions score 0.
double precision_at_k(const std::vector<std::string>& predicted,
                      const std::set<std::string>& truth, size_t k);

enum class RpDenominator {
  PredictedTotal,  // min(|predicted|, |truth|)
  TopK,            // min(K, |truth|)
};

// Hits among the top-min(k,|predicted|) predictions over the denominator
// above. Empty predictions score 0.
double rp_at_k(const std::vector<std::string>& predicted, const std::set<std::string>& truth,
               size_t k, RpDenominator denominator = RpDenominator::PredictedTotal);

struct GroundTruth {
  std::map<std::string, std::set<std::string>> labels_by_instance;

  static GroundTruth from_file(const std::string& jsonl_path);
};

struct JudgeVerdict {
  std::string instance_id;
  std::vector<std::string> pool;
  std::vector<std::vector<std::string>> per_run_selections;
  std::set<std::string> final;
  bool tie_broken_randomly = false;

  json to_json() const;
  static JudgeVerdict from_json(const json& value);
};

// Candidate-pool selection protocol: shuffle the pool per run, render the
// zero-shot selection prompt, parse the Answer line, and keep labels chosen
// in at least 2 of `runs` runs. With no majority, one label is drawn
// uniformly from the maximal-vote set.
JudgeVerdict judge_select(LlmClient& judge, const std::string& model_id,
                          const std::string& record_text,
                          const std::vector<std::string>& candidate_pool,
                          const PromptTemplate& judge_template, size_t runs, Rng& rng);

// A method scores 1 on an instance iff its top-1 label is in the verdict's
// final set; instances whose verdict is the bare None sentinel score 0 for
// every method but stay in the denominator.
struct MethodPredictions {
  std::string name;
  std::map<std::string, std::vector<std::string>> top_labels_by_instance;
};

std::map<std::string, double> score_against_judge(const std::vector<MethodPredictions>& methods,
                                                  const std::vector<JudgeVerdict>& verdicts);

struct MetricTable {
  std::vector<std::string> method_names;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> values;  // [method][column]

  json to_json() const;
  std::string to_text() const;
};

// Macro-average of the requested metrics over instances; every method must
// cover exactly the ground-truth instance set.
MetricTable aggregate_against_truth(const std::vector<MethodPredictions>& methods,
                                    const GroundTruth& truth, const std::vector<size_t>& ks,
                                    bool include_precision, bool include_rp,
                                    RpDenominator denominator = RpDenominator::PredictedTotal);

}  // namespace taxclass
