#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/io.hpp"
#include "core/pipeline.hpp"

namespace taxclass {

// Everything one experiment cell needs: the pipeline cell plus file layout
// and provider wiring. One config file per cell.
struct RunConfig {
  PipelineConfig pipeline;

  std::string taxonomy_path;
  TaxonomyFormat taxonomy_format = TaxonomyFormat::Onet;
  std::string taxonomy_name;
  std::optional<size_t> expected_count;

  std::string templates_dir = "templates";
  std::string examples_pool_path;
  std::string cot_fixtures_path;
  std::string index_path;

  json chat_provider = {{"kind", "mock"}};
  json embedding_provider = {{"kind", "hash"}};
  std::string judge_model;
  std::string assess_model;

  std::string cache_path;
  std::string pricing_path;
  std::string output_dir = "out";
  size_t concurrency = 4;
  double failure_threshold = 0.25;
  size_t judge_runs = 3;

  json raw;  // original document, echoed into manifests

  static RunConfig from_file(const std::string& path);
  static RunConfig from_json(const json& doc);

  // CLI flag overrides: seed, concurrency, stages, unit, reasoning, k, m, n,
  // out, mock.
  void apply_overrides(const json& overrides);
};

// Each runner returns a machine-readable summary of what it wrote. Outputs
// land in a fresh timestamped directory under output_dir.
json run_classify(const RunConfig& config, const std::string& input_path, bool dry_run);
json run_assess(const RunConfig& config, const std::vector<std::string>& variant_names);
json run_judge(const RunConfig& config, const json& args);
json run_metrics(const json& args);
json run_cost(const std::string& usage_log_path, const std::string& pricing_path,
              std::optional<size_t> n_records);

}  // namespace taxclass
