#include "core/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "core/errors.hpp"
#include "core/taxonomy.hpp"
#include "core/text.hpp"

namespace taxclass {

double precision_at_k(const std::vector<std::string>& predicted,
                      const std::set<std::string>& truth, size_t k) {
  if (k == 0) raise(ErrorKind::ConfigError, "precision_at_k requires k >= 1");
  if (predicted.empty()) return 0.0;
  size_t hits = 0;
  const size_t window = std::min(k, predicted.size());
  for (size_t i = 0; i < window; ++i) {
    if (truth.count(predicted[i]) != 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

double rp_at_k(const std::vector<std::string>& predicted, const std::set<std::string>& truth,
               size_t k, RpDenominator denominator) {
  if (k == 0) raise(ErrorKind::ConfigError, "rp_at_k requires k >= 1");
  if (truth.empty()) raise(ErrorKind::ConfigError, "rp_at_k requires non-empty truth");
  if (predicted.empty()) return 0.0;
  const size_t window = std::min(k, predicted.size());
  size_t hits = 0;
  for (size_t i = 0; i < window; ++i) {
    if (truth.count(predicted[i]) != 0) ++hits;
  }
  const size_t denom = denominator == RpDenominator::PredictedTotal
                           ? std::min(predicted.size(), truth.size())
                           : std::min(k, truth.size());
  if (denom == 0) return 0.0;
  return static_cast<double>(hits) / static_cast<double>(denom);
}

GroundTruth GroundTruth::from_file(const std::string& jsonl_path) {
  GroundTruth truth;
  for (const json& record : read_jsonl(jsonl_path)) {
    const std::string instance_id = record.at("instance_id").get<std::string>();
    std::set<std::string> labels;
    for (const json& label : record.at("labels")) labels.insert(label.get<std::string>());
    if (labels.empty()) {
      raise(ErrorKind::ConfigError, "instance '" + instance_id + "' has an empty truth set");
    }
    truth.labels_by_instance[instance_id] = std::move(labels);
  }
  return truth;
}

json JudgeVerdict::to_json() const {
  return {{"instance_id", instance_id},
          {"pool", pool},
          {"per_run_selections", per_run_selections},
          {"final", std::vector<std::string>(final.begin(), final.end())},
          {"tie_broken_randomly", tie_broken_randomly}};
}

JudgeVerdict JudgeVerdict::from_json(const json& value) {
  JudgeVerdict verdict;
  verdict.instance_id = value.at("instance_id").get<std::string>();
  for (const json& label : value.at("pool")) verdict.pool.push_back(label.get<std::string>());
  for (const json& run : value.at("per_run_selections")) {
    std::vector<std::string> selections;
    for (const json& label : run) selections.push_back(label.get<std::string>());
    verdict.per_run_selections.push_back(std::move(selections));
  }
  for (const json& label : value.at("final")) verdict.final.insert(label.get<std::string>());
  verdict.tie_broken_randomly = value.value("tie_broken_randomly", false);
  return verdict;
}

JudgeVerdict judge_select(LlmClient& judge, const std::string& model_id,
                          const std::string& record_text,
                          const std::vector<std::string>& candidate_pool,
                          const PromptTemplate& judge_template, size_t runs, Rng& rng) {
  JudgeVerdict verdict;
  verdict.pool = candidate_pool;
  if (std::find(verdict.pool.begin(), verdict.pool.end(), std::string(kNoneSentinelLabel)) ==
      verdict.pool.end()) {
    verdict.pool.emplace_back(kNoneSentinelLabel);
  }

  std::map<std::string, size_t> votes;
  for (size_t run = 0; run < runs; ++run) {
    std::vector<std::string> shuffled = verdict.pool;
    Rng run_rng = rng.fork(run);
    run_rng.shuffle(shuffled);

    const std::string prompt =
        judge_template.render({{"input", record_text}, {"options", join(shuffled, "; ")}});
    const CompletionResult completion =
        judge.complete(ChatRequest::user(model_id, prompt), UsageStage::Judge);

    // A run whose answer cannot be parsed selects nothing.
    std::vector<std::string> selections = parse_judge_answer(completion.text, verdict.pool);
    for (const std::string& label : selections) ++votes[label];
    verdict.per_run_selections.push_back(std::move(selections));
  }

  const size_t majority = runs / 2 + 1;
  for (const auto& [label, count] : votes) {
    if (count >= majority) verdict.final.insert(label);
  }
  if (verdict.final.empty()) {
    size_t max_votes = 0;
    for (const auto& [_, count] : votes) max_votes = std::max(max_votes, count);
    if (max_votes == 0) {
      // Every run selected nothing; the record has no applicable label.
      verdict.final.insert(std::string(kNoneSentinelLabel));
    } else {
      std::vector<std::string> tied;
      for (const auto& [label, count] : votes) {
        if (count == max_votes) tied.push_back(label);
      }
      std::sort(tied.begin(), tied.end());
      Rng tie_rng = rng.fork(runs);
      verdict.final.insert(tied[tie_rng.below(tied.size())]);
      verdict.tie_broken_randomly = true;
    }
  }
  return verdict;
}

std::map<std::string, double> score_against_judge(const std::vector<MethodPredictions>& methods,
                                                  const std::vector<JudgeVerdict>& verdicts) {
  std::map<std::string, double> scores;
  if (verdicts.empty()) return scores;
  for (const MethodPredictions& method : methods) {
    size_t hits = 0;
    for (const JudgeVerdict& verdict : verdicts) {
      const auto it = method.top_labels_by_instance.find(verdict.instance_id);
      if (it == method.top_labels_by_instance.end()) {
        raise(ErrorKind::MissingVerdict, "method '" + method.name +
                                             "' lacks a prediction for instance '" +
                                             verdict.instance_id + "'");
      }
      if (it->second.empty()) continue;
      const std::string& top1 = it->second.front();
      if (top1 != kNoneSentinelLabel && verdict.final.count(top1) != 0) ++hits;
    }
    scores[method.name] = static_cast<double>(hits) / static_cast<double>(verdicts.size());
  }
  return scores;
}

json MetricTable::to_json() const {
  json rows = json::array();
  for (size_t i = 0; i < method_names.size(); ++i) {
    json row = {{"method", method_names[i]}};
    for (size_t j = 0; j < column_names.size(); ++j) row[column_names[j]] = values[i][j];
    rows.push_back(std::move(row));
  }
  return {{"columns", column_names}, {"rows", rows}};
}

std::string MetricTable::to_text() const {
  size_t name_width = 6;
  for (const std::string& name : method_names) name_width = std::max(name_width, name.size());

  std::string out = "method";
  out.append(name_width - 6, ' ');
  for (const std::string& column : column_names) {
    out += "  ";
    out.append(column.size() < 8 ? 8 - column.size() : 0, ' ');
    out += column;
  }
  out += '\n';
  for (size_t i = 0; i < method_names.size(); ++i) {
    out += method_names[i];
    out.append(name_width - method_names[i].size(), ' ');
    for (size_t j = 0; j < column_names.size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%8.4f", values[i][j]);
      out += "  ";
      const size_t pad = column_names[j].size() > 8 ? column_names[j].size() - 8 : 0;
      out.append(pad, ' ');
      out += buf;
    }
    out += '\n';
  }
  return out;
}

MetricTable aggregate_against_truth(const std::vector<MethodPredictions>& methods,
                                    const GroundTruth& truth, const std::vector<size_t>& ks,
                                    bool include_precision, bool include_rp,
                                    RpDenominator denominator) {
  MetricTable table;
  for (size_t k : ks) {
    if (include_precision) table.column_names.push_back("P@" + std::to_string(k));
  }
  for (size_t k : ks) {
    if (include_rp) table.column_names.push_back("RP@" + std::to_string(k));
  }

  const size_t n = truth.labels_by_instance.size();
  if (n == 0) raise(ErrorKind::ConfigError, "ground truth is empty");

  for (const MethodPredictions& method : methods) {
    for (const auto& [instance_id, _] : truth.labels_by_instance) {
      if (method.top_labels_by_instance.count(instance_id) == 0) {
        raise(ErrorKind::InstanceMismatch, "method '" + method.name +
                                               "' lacks instance '" + instance_id + "'");
      }
    }
    table.method_names.push_back(method.name);
    std::vector<double> row;
    if (include_precision) {
      for (size_t k : ks) {
        double sum = 0.0;
        for (const auto& [instance_id, labels] : truth.labels_by_instance) {
          sum += precision_at_k(method.top_labels_by_instance.at(instance_id), labels, k);
        }
        row.push_back(sum / static_cast<double>(n));
      }
    }
    if (include_rp) {
      for (size_t k : ks) {
        double sum = 0.0;
        for (const auto& [instance_id, labels] : truth.labels_by_instance) {
          sum += rp_at_k(method.top_labels_by_instance.at(instance_id), labels, k, denominator);
        }
        row.push_back(sum / static_cast<double>(n));
      }
    }
    table.values.push_back(std::move(row));
  }
  return table;
}

}  // namespace taxclass
