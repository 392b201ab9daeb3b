#include "core/runners.hpp"

#include <algorithm>

#include "core/digest.hpp"
#include "core/errors.hpp"
#include "core/evaluation.hpp"
#include "core/http_providers.hpp"
#include "core/knowledge.hpp"
#include "core/parallel.hpp"
#include "core/text.hpp"

namespace taxclass {

namespace {

std::optional<RetrievalUnit> unit_from_config(const std::string& name) {
  if (name == "none" || name.empty()) return std::nullopt;
  return retrieval_unit_from_string(name);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    raise(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig config;
  config.raw = doc;

  config.pipeline.task_kind = task_kind_from_string(doc.value("task_kind", "occupation"));
  config.pipeline.reasoning = reasoning_from_string(doc.value("reasoning", "tgre"));
  config.pipeline.stages = stage_plan_from_string(doc.value("stages", "full"));
  config.pipeline.unit = unit_from_config(
      doc.value("unit", config.pipeline.stages == StagePlan::InferenceOnly ? "none" : "sentence"));

  // Occupation cells default to m = n = 10; skill cells retrieve wider,
  // m = 50 with n = 10 and two-shot examples.
  const bool skill = config.pipeline.task_kind == TaskKind::Skill;
  config.pipeline.m = doc.value("m", skill ? size_t{50} : size_t{10});
  config.pipeline.n = doc.value("n", size_t{10});
  config.pipeline.k = doc.value("k", skill ? size_t{2} : size_t{1});
  if (!doc.contains("seed")) raise(ErrorKind::ConfigError, "run config requires a seed");
  config.pipeline.seed = doc.at("seed").get<uint64_t>();

  const json models = doc.value("models", json::object());
  config.pipeline.inference_model = models.value("inference", "mock-llm");
  config.pipeline.rerank_model = models.value("rerank", config.pipeline.inference_model);
  config.judge_model = models.value("judge", config.pipeline.inference_model);
  config.assess_model = models.value("assess", config.pipeline.inference_model);
  if (doc.contains("max_output_tokens")) {
    config.pipeline.max_output_tokens = doc["max_output_tokens"].get<int>();
  }

  const json taxonomy = doc.value("taxonomy", json::object());
  config.taxonomy_path = taxonomy.value("path", "");
  config.taxonomy_format = taxonomy_format_from_string(taxonomy.value("format", "onet"));
  config.taxonomy_name = taxonomy.value("name", "");
  if (taxonomy.contains("expected_count") && !taxonomy["expected_count"].is_null()) {
    config.expected_count = taxonomy["expected_count"].get<size_t>();
  }

  config.templates_dir = doc.value("templates_dir", "templates");
  config.examples_pool_path = doc.value("examples_pool", "");
  config.cot_fixtures_path = doc.value("cot_fixtures", "");
  config.index_path = doc.value("index_path", "");

  const json providers = doc.value("providers", json::object());
  if (providers.contains("chat")) config.chat_provider = providers["chat"];
  if (providers.contains("embedding")) config.embedding_provider = providers["embedding"];

  config.cache_path = doc.value("cache_path", "");
  config.pricing_path = doc.value("pricing_path", "");
  config.output_dir = doc.value("output_dir", "out");
  config.concurrency = doc.value("concurrency", size_t{4});
  config.failure_threshold = doc.value("failure_threshold", 0.25);
  config.judge_runs = doc.value("judge_runs", size_t{3});
  return config;
}

void RunConfig::apply_overrides(const json& overrides) {
  if (overrides.is_null()) return;
  if (overrides.contains("seed")) pipeline.seed = overrides["seed"].get<uint64_t>();
  if (overrides.contains("concurrency")) concurrency = overrides["concurrency"].get<size_t>();
  if (overrides.contains("stages")) {
    pipeline.stages = stage_plan_from_string(overrides["stages"].get<std::string>());
    if (pipeline.stages == StagePlan::InferenceOnly) pipeline.unit = std::nullopt;
  }
  if (overrides.contains("unit")) {
    pipeline.unit = unit_from_config(overrides["unit"].get<std::string>());
  }
  if (overrides.contains("reasoning")) {
    pipeline.reasoning = reasoning_from_string(overrides["reasoning"].get<std::string>());
  }
  if (overrides.contains("k")) pipeline.k = overrides["k"].get<size_t>();
  if (overrides.contains("m")) pipeline.m = overrides["m"].get<size_t>();
  if (overrides.contains("n")) pipeline.n = overrides["n"].get<size_t>();
  if (overrides.contains("out")) output_dir = overrides["out"].get<std::string>();
  if (overrides.contains("mock") && overrides["mock"].get<bool>()) {
    json mock_chat = {{"kind", "mock"}};
    if (chat_provider.contains("script")) mock_chat["script"] = chat_provider["script"];
    if (overrides.contains("mock_script")) mock_chat["script"] = overrides["mock_script"];
    chat_provider = mock_chat;
    if (embedding_provider.value("kind", "hash") != "hash") {
      embedding_provider = {{"kind", "hash"}};
    }
  }
}

namespace {

struct RunContext {
  Taxonomy taxonomy;
  std::unique_ptr<TemplateSet> templates;
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<ResponseCache> cache;
  std::shared_ptr<LlmClient> client;
  std::shared_ptr<EmbeddingProvider> embedder;
};

RunContext make_context(const RunConfig& config, bool need_chat, bool need_embedder) {
  RunContext ctx;
  if (config.taxonomy_path.empty()) raise(ErrorKind::ConfigError, "taxonomy path is empty");
  ctx.taxonomy = Taxonomy::load(config.taxonomy_path, config.taxonomy_format,
                                config.taxonomy_name);
  if (config.expected_count.has_value() && ctx.taxonomy.size() != *config.expected_count) {
    raise(ErrorKind::ConfigError, "taxonomy has " + std::to_string(ctx.taxonomy.size()) +
                                      " entities, expected " +
                                      std::to_string(*config.expected_count));
  }
  ctx.templates = std::make_unique<TemplateSet>(config.templates_dir);
  if (need_chat) {
    ctx.chat = make_chat_provider(config.chat_provider);
    if (!config.cache_path.empty()) {
      ctx.cache = std::make_shared<ResponseCache>(config.cache_path);
    }
    ctx.client = std::make_shared<LlmClient>(ctx.chat, ctx.cache, RetryPolicy{},
                                             static_cast<int>(config.concurrency));
  }
  if (need_embedder) ctx.embedder = make_embedding_provider(config.embedding_provider);
  return ctx;
}

json manifest_base(const char* command, const RunConfig& config) {
  return {{"command", command},
          {"config", config.raw},
          {"seed", config.pipeline.seed},
          {"started_at", utc_stamp_iso()},
          {"library_version", "taxclass 0.1.0"}};
}

void write_usage_log(const std::string& path, const std::vector<UsageRecord>& usages) {
  std::string out;
  for (const UsageRecord& usage : usages) {
    out += usage.to_json().dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

RetrievalIndex obtain_index(const RunConfig& config, const Taxonomy& taxonomy,
                            EmbeddingProvider& embedder) {
  if (!config.index_path.empty() && path_exists(config.index_path)) {
    return RetrievalIndex::load(config.index_path);
  }
  if (!config.pipeline.unit.has_value()) {
    raise(ErrorKind::ConfigError, "cannot build an index without a retrieval unit");
  }
  RetrievalIndex index = RetrievalIndex::build(taxonomy, *config.pipeline.unit, embedder);
  if (!config.index_path.empty()) index.save(config.index_path);
  return index;
}

ExampleSet load_examples(const RunConfig& config, const Taxonomy& taxonomy, Rng& rng) {
  std::vector<PoolInstance> pool;
  if (!config.examples_pool_path.empty()) pool = load_example_pool(config.examples_pool_path);
  CotFixtures fixtures;
  const CotFixtures* fixtures_ptr = nullptr;
  if (!config.cot_fixtures_path.empty()) {
    fixtures = load_cot_fixtures(config.cot_fixtures_path);
    fixtures_ptr = &fixtures;
  }
  Rng example_rng = rng.fork(fnv1a64("examples"));
  return select_example_set(pool, fixtures_ptr, config.pipeline.k, example_rng,
                            config.pipeline.reasoning, taxonomy, config.pipeline.task_kind);
}

}  // namespace

json run_classify(const RunConfig& config, const std::string& input_path, bool dry_run) {
  config.pipeline.validate();
  const bool needs_retrieval = config.pipeline.stages != StagePlan::InferenceOnly;
  RunContext ctx = make_context(config, /*need_chat=*/!dry_run, needs_retrieval);

  Rng rng(config.pipeline.seed);
  const ExampleSet examples = load_examples(config, ctx.taxonomy, rng);
  const std::vector<InputRecord> inputs = load_input_records(input_path);
  if (inputs.empty()) raise(ErrorKind::ConfigError, input_path + " has no records");

  const std::string run_dir = make_run_dir(config.output_dir, "classify");
  json manifest = manifest_base("classify", config);
  manifest["input_path"] = input_path;
  manifest["input_count"] = inputs.size();

  if (dry_run) {
    // Render the inference prompts only; no provider is touched.
    std::string out;
    const PromptTemplate& tmpl = ctx.templates->stage_template(
        config.pipeline.task_kind, config.pipeline.reasoning, PromptStage::Inference);
    for (const InputRecord& record : inputs) {
      const json line = {{"instance_id", record.instance_id},
                         {"prompt", render_inference_prompt(tmpl, examples.inference, record.text,
                                                            config.pipeline.task_kind,
                                                            config.pipeline.reasoning)}};
      out += line.dump();
      out += '\n';
    }
    const std::string prompts_path = run_dir + "/prompts.jsonl";
    write_file_atomic(prompts_path, out);
    manifest["dry_run"] = true;
    manifest["finished_at"] = utc_stamp_iso();
    write_file_atomic(run_dir + "/manifest.json", manifest.dump(2) + "\n");
    return {{"run_dir", run_dir}, {"prompts_path", prompts_path}, {"count", inputs.size()},
            {"dry_run", true}};
  }

  std::optional<RetrievalIndex> index;
  if (needs_retrieval) index = obtain_index(config, ctx.taxonomy, *ctx.embedder);

  Pipeline pipeline(config.pipeline, ctx.taxonomy, index.has_value() ? &*index : nullptr,
                    ctx.client, ctx.client, ctx.embedder, *ctx.templates, examples);

  BatchStats stats;
  const std::vector<ClassificationResult> results = pipeline.classify_batch(
      inputs, config.concurrency, config.failure_threshold, stats, &cancel_flag());

  std::string results_out;
  std::vector<UsageRecord> all_usage;
  for (const ClassificationResult& result : results) {
    results_out += result.to_json().dump();
    results_out += '\n';
    all_usage.insert(all_usage.end(), result.usage.begin(), result.usage.end());
  }
  const std::string results_path = run_dir + "/results.jsonl";
  write_file_atomic(results_path, results_out);
  write_usage_log(run_dir + "/usage.jsonl", all_usage);

  manifest["counts"] = {{"total", stats.total},
                        {"succeeded", stats.succeeded},
                        {"failed", stats.failed},
                        {"cancelled", stats.cancelled}};
  manifest["aborted"] = stats.aborted;
  manifest["cache"] = {{"hits", ctx.client->cache_hits()},
                       {"misses", ctx.client->cache_misses()}};
  if (index.has_value()) {
    manifest["index"] = {{"taxonomy_name", index->taxonomy_name()},
                         {"unit", to_string(index->unit())},
                         {"provider_id", index->provider_id()},
                         {"count", index->size()},
                         {"dim", index->dim()}};
  }
  manifest["finished_at"] = utc_stamp_iso();
  write_file_atomic(run_dir + "/manifest.json", manifest.dump(2) + "\n");

  return {{"run_dir", run_dir},
          {"results_path", results_path},
          {"counts", manifest["counts"]},
          {"aborted", stats.aborted},
          {"cache_hits", ctx.client->cache_hits()},
          {"cache_misses", ctx.client->cache_misses()}};
}

json run_assess(const RunConfig& config, const std::vector<std::string>& variant_names) {
  RunContext ctx = make_context(config, /*need_chat=*/true, /*need_embedder=*/false);

  std::vector<TaskVariant> variants;
  if (variant_names.empty() || (variant_names.size() == 1 && variant_names[0] == "all")) {
    variants = all_task_variants();
  } else {
    for (const std::string& name : variant_names) variants.push_back(variant_from_name(name));
  }

  Rng rng(config.pipeline.seed);
  AssessOptions options;
  options.model_id = config.assess_model;
  options.max_output_tokens = config.pipeline.max_output_tokens;
  options.concurrency = config.concurrency;

  const AssessmentReport report = assess(*ctx.client, ctx.taxonomy, variants, *ctx.templates, rng,
                                         options);

  const std::string run_dir = make_run_dir(config.output_dir, "assess");
  std::string rows;
  for (const TaskOutcome& outcome : report.outcomes) {
    const json line = {{"variant", outcome.variant},   {"entity_id", outcome.entity_id},
                       {"query", outcome.query},       {"expected", outcome.expected},
                       {"generated", outcome.generated}, {"correct", outcome.correct},
                       {"extraction_ok", outcome.extraction_ok}};
    rows += line.dump();
    rows += '\n';
  }
  write_file_atomic(run_dir + "/tasks.jsonl", rows);
  write_usage_log(run_dir + "/usage.jsonl", report.usage);

  json summary = {{"model", config.assess_model}, {"average", report.average}};
  json by_variant = json::object();
  std::string table = "variant                 accuracy  extraction_failure_rate  tasks\n";
  for (const VariantAccuracy& accuracy : report.variants) {
    by_variant[accuracy.variant] = {{"accuracy", accuracy.accuracy},
                                    {"total", accuracy.total},
                                    {"correct", accuracy.correct},
                                    {"extraction_failures", accuracy.extraction_failures},
                                    {"extraction_failure_rate", accuracy.extraction_failure_rate}};
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-22s  %8.4f  %23.4f  %5zu\n", accuracy.variant.c_str(),
                  accuracy.accuracy, accuracy.extraction_failure_rate, accuracy.total);
    table += buf;
  }
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "average                 %8.4f\n", report.average);
    table += buf;
  }
  summary["variants"] = by_variant;
  write_file_atomic(run_dir + "/summary.json", summary.dump(2) + "\n");
  write_file_atomic(run_dir + "/summary.txt", table);

  json manifest = manifest_base("assess", config);
  manifest["finished_at"] = utc_stamp_iso();
  manifest["cache"] = {{"hits", ctx.client->cache_hits()},
                       {"misses", ctx.client->cache_misses()}};
  write_file_atomic(run_dir + "/manifest.json", manifest.dump(2) + "\n");

  summary["run_dir"] = run_dir;
  return summary;
}

namespace {

struct LoadedResults {
  std::string name;
  std::map<std::string, std::vector<std::string>> finals_by_instance;
};

std::vector<LoadedResults> load_method_results(const json& entries) {
  std::vector<LoadedResults> methods;
  for (const json& entry : entries) {
    LoadedResults method;
    method.name = entry.at("name").get<std::string>();
    for (const json& record : read_jsonl(entry.at("path").get<std::string>())) {
      std::vector<std::string> finals;
      for (const json& label : record.at("final")) finals.push_back(label.get<std::string>());
      method.finals_by_instance[record.at("instance_id").get<std::string>()] = std::move(finals);
    }
    methods.push_back(std::move(method));
  }
  return methods;
}

// Result finals are entity ids (or raw label texts under inference_only);
// resolve to the `Title (code)` rendering used by judge pools.
std::string label_text_for(const Taxonomy& taxonomy, const std::string& value) {
  if (const TaxonomyEntity* entity = taxonomy.find_by_id(value)) return entity_label(*entity);
  try {
    return entity_label(taxonomy.lookup(value));
  } catch (const Error&) {
    return value;
  }
}

}  // namespace

json run_judge(const RunConfig& config, const json& args) {
  RunContext ctx = make_context(config, /*need_chat=*/true, /*need_embedder=*/false);

  const std::vector<InputRecord> inputs = load_input_records(args.at("input").get<std::string>());
  const std::vector<LoadedResults> methods = load_method_results(args.at("results"));
  if (methods.empty()) raise(ErrorKind::ConfigError, "judge needs at least one results file");
  const bool pool_all = args.value("pool", "top1") == "all";
  const size_t runs = args.value("runs", config.judge_runs);

  Rng rng(config.pipeline.seed);
  const PromptTemplate& judge_template = ctx.templates->judge(config.pipeline.task_kind);

  std::vector<JudgeVerdict> verdicts(inputs.size());
  parallel_for(inputs.size(), config.concurrency, [&](size_t i) {
    const InputRecord& record = inputs[i];
    // Pool: distinct labels predicted by all methods for this record, in
    // first-seen order. The None sentinel joins inside judge_select.
    std::vector<std::string> pool;
    for (const LoadedResults& method : methods) {
      const auto it = method.finals_by_instance.find(record.instance_id);
      if (it == method.finals_by_instance.end()) continue;
      const size_t take = pool_all ? it->second.size() : std::min<size_t>(1, it->second.size());
      for (size_t j = 0; j < take; ++j) {
        const std::string text = label_text_for(ctx.taxonomy, it->second[j]);
        if (std::find(pool.begin(), pool.end(), text) == pool.end()) pool.push_back(text);
      }
    }
    Rng instance_rng = rng.fork(fnv1a64(record.instance_id));
    JudgeVerdict verdict = judge_select(*ctx.client, config.judge_model, record.text, pool,
                                        judge_template, runs, instance_rng);
    verdict.instance_id = record.instance_id;
    verdicts[i] = std::move(verdict);
  });

  const std::string run_dir = make_run_dir(config.output_dir, "judge");
  std::string out;
  for (const JudgeVerdict& verdict : verdicts) {
    out += verdict.to_json().dump();
    out += '\n';
  }
  const std::string verdicts_path = run_dir + "/verdicts.jsonl";
  write_file_atomic(verdicts_path, out);

  json manifest = manifest_base("judge", config);
  manifest["runs_per_instance"] = runs;
  manifest["methods"] = args.at("results");
  manifest["finished_at"] = utc_stamp_iso();
  manifest["cache"] = {{"hits", ctx.client->cache_hits()},
                       {"misses", ctx.client->cache_misses()}};
  write_file_atomic(run_dir + "/manifest.json", manifest.dump(2) + "\n");

  return {{"run_dir", run_dir},
          {"verdicts_path", verdicts_path},
          {"instances", inputs.size()},
          {"judge_calls", ctx.client->cache_hits() + ctx.client->cache_misses()}};
}

json run_metrics(const json& args) {
  const std::vector<LoadedResults> loaded = load_method_results(args.at("results"));
  if (loaded.empty()) raise(ErrorKind::ConfigError, "metrics needs at least one results file");

  std::optional<Taxonomy> taxonomy;
  if (args.contains("taxonomy")) {
    const json& spec = args["taxonomy"];
    taxonomy = Taxonomy::load(spec.at("path").get<std::string>(),
                              taxonomy_format_from_string(spec.value("format", "onet")),
                              spec.value("name", ""));
  }

  const std::string out_dir = args.value("out", "out");
  const std::string run_dir = make_run_dir(out_dir, "metrics");
  json summary;

  if (args.contains("verdicts")) {
    const auto verdict_records = read_jsonl(args["verdicts"].get<std::string>());
    std::vector<JudgeVerdict> verdicts;
    verdicts.reserve(verdict_records.size());
    for (const json& record : verdict_records) verdicts.push_back(JudgeVerdict::from_json(record));

    std::vector<MethodPredictions> methods;
    for (const LoadedResults& load : loaded) {
      MethodPredictions method;
      method.name = load.name;
      for (const auto& [instance_id, finals] : load.finals_by_instance) {
        std::vector<std::string> texts;
        for (const std::string& value : finals) {
          texts.push_back(taxonomy.has_value() ? label_text_for(*taxonomy, value) : value);
        }
        method.top_labels_by_instance[instance_id] = std::move(texts);
      }
      methods.push_back(std::move(method));
    }
    const auto scores = score_against_judge(methods, verdicts);

    MetricTable table;
    table.column_names = {"P@1"};
    for (const auto& [name, score] : scores) {
      table.method_names.push_back(name);
      table.values.push_back({score});
    }
    summary = {{"mode", "verdicts"}, {"table", table.to_json()}};
    write_file_atomic(run_dir + "/report.json", summary.dump(2) + "\n");
    write_file_atomic(run_dir + "/report.txt", table.to_text());
  } else if (args.contains("truth")) {
    GroundTruth truth = GroundTruth::from_file(args["truth"].get<std::string>());
    if (taxonomy.has_value()) {
      // Resolve truth labels to entity ids so they compare against finals.
      for (auto& [_, labels] : truth.labels_by_instance) {
        std::set<std::string> resolved;
        for (const std::string& label : labels) resolved.insert(taxonomy->lookup(label).id);
        labels = std::move(resolved);
      }
    }

    std::vector<size_t> ks;
    if (args.contains("ks")) {
      for (const json& k : args["ks"]) ks.push_back(k.get<size_t>());
    } else {
      ks = {1};
    }
    const bool include_precision = args.value("precision", true);
    const bool include_rp = args.value("rp", false);
    const RpDenominator denominator = args.value("rp_denominator", "predicted") == std::string("k")
                                          ? RpDenominator::TopK
                                          : RpDenominator::PredictedTotal;

    std::vector<MethodPredictions> methods;
    for (const LoadedResults& load : loaded) {
      MethodPredictions method;
      method.name = load.name;
      method.top_labels_by_instance = load.finals_by_instance;
      methods.push_back(std::move(method));
    }
    const MetricTable table =
        aggregate_against_truth(methods, truth, ks, include_precision, include_rp, denominator);
    summary = {{"mode", "truth"}, {"table", table.to_json()}};
    write_file_atomic(run_dir + "/report.json", summary.dump(2) + "\n");
    write_file_atomic(run_dir + "/report.txt", table.to_text());
  } else {
    raise(ErrorKind::ConfigError, "metrics needs either 'truth' or 'verdicts'");
  }

  summary["run_dir"] = run_dir;
  return summary;
}

json run_cost(const std::string& usage_log_path, const std::string& pricing_path,
              std::optional<size_t> n_records) {
  const PricingTable pricing = PricingTable::from_file(pricing_path);
  std::vector<UsageRecord> usages;
  for (const json& record : read_jsonl(usage_log_path)) {
    usages.push_back(UsageRecord::from_json(record));
  }
  size_t records = 0;
  if (n_records.has_value()) {
    records = *n_records;
  } else {
    for (const UsageRecord& usage : usages) {
      if (usage.stage == UsageStage::Inference) ++records;
    }
    if (records == 0) records = usages.empty() ? 1 : usages.size();
  }
  const CostReport report = cost_report(usages, pricing, records);
  return report.to_json();
}

}  // namespace taxclass
