#include "core/prompting.hpp"

#include <algorithm>
#include <cctype>

#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/text.hpp"

namespace taxclass {

TaskKind task_kind_from_string(std::string_view name) {
  if (name == "occupation") return TaskKind::Occupation;
  if (name == "skill") return TaskKind::Skill;
  raise(ErrorKind::ConfigError, "unknown task kind '" + std::string(name) + "'");
}

ReasoningMode reasoning_from_string(std::string_view name) {
  const std::string folded = to_lower_ascii(name);
  if (folded == "tgre") return ReasoningMode::Tgre;
  if (folded == "cot") return ReasoningMode::Cot;
  raise(ErrorKind::ConfigError, "unknown reasoning mode '" + std::string(name) + "'");
}

const char* to_string(TaskKind kind) {
  return kind == TaskKind::Occupation ? "occupation" : "skill";
}

const char* to_string(ReasoningMode mode) { return mode == ReasoningMode::Tgre ? "tgre" : "cot"; }

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::set<std::string> scan_variables(const std::string& body) {
  std::set<std::string> vars;
  size_t i = 0;
  while (i + 1 < body.size()) {
    if (body[i] == '$' && body[i + 1] == '{') {
      const size_t close = body.find('}', i + 2);
      if (close != std::string::npos) {
        const std::string name = body.substr(i + 2, close - i - 2);
        if (!name.empty() && std::all_of(name.begin(), name.end(), is_ident_char)) {
          vars.insert(name);
          i = close + 1;
          continue;
        }
      }
    }
    ++i;
  }
  return vars;
}

}  // namespace

PromptTemplate PromptTemplate::from_string(std::string name, std::string body) {
  PromptTemplate tmpl;
  tmpl.name = std::move(name);
  tmpl.body = std::move(body);
  tmpl.required_variables = scan_variables(tmpl.body);
  return tmpl;
}

PromptTemplate PromptTemplate::from_file(const std::string& path) {
  return from_string(path, read_file(path));
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& variables) const {
  std::string out;
  out.reserve(body.size());
  size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '$' && i + 1 < body.size() && body[i + 1] == '{') {
      const size_t close = body.find('}', i + 2);
      if (close != std::string::npos) {
        const std::string name = body.substr(i + 2, close - i - 2);
        if (!name.empty() && std::all_of(name.begin(), name.end(), is_ident_char)) {
          const auto it = variables.find(name);
          if (it == variables.end()) {
            raise(ErrorKind::MissingVariable,
                  "template '" + this->name + "' has no binding for '" + name + "'");
          }
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(body[i]);
    ++i;
  }
  return out;
}

TemplateSet::TemplateSet(std::string dir) : dir_(std::move(dir)) {}

const PromptTemplate& TemplateSet::get(const std::string& relpath) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(relpath);
  if (it == cache_.end()) {
    auto tmpl = std::make_unique<PromptTemplate>(
        PromptTemplate::from_file(dir_ + "/" + relpath + ".txt"));
    it = cache_.emplace(relpath, std::move(tmpl)).first;
  }
  return *it->second;
}

const PromptTemplate& TemplateSet::stage_template(TaskKind kind, ReasoningMode mode,
                                                  PromptStage stage) const {
  const std::string rel = std::string(to_string(kind)) + "/" + to_string(mode) + "_" +
                          (stage == PromptStage::Inference ? "inference" : "rerank");
  return get(rel);
}

const PromptTemplate& TemplateSet::judge(TaskKind kind) const {
  return get(std::string(to_string(kind)) + "/judge");
}

namespace {

// Occupation inputs are `job title, company` pairs; the company is the part
// after the last comma.
std::pair<std::string, std::string> split_title_company(const std::string& input) {
  const size_t pos = input.rfind(',');
  if (pos == std::string::npos) return {trim(input), ""};
  return {trim(input.substr(0, pos)), trim(input.substr(pos + 1))};
}

}  // namespace

std::string make_grounded_rationale(const std::string& input,
                                    const std::vector<std::string>& labels,
                                    const Taxonomy& taxonomy, TaskKind kind) {
  if (labels.empty()) raise(ErrorKind::NotFound, "no labels to ground");

  if (kind == TaskKind::Occupation) {
    const TaxonomyEntity& entity = taxonomy.lookup(labels.front());
    if (entity.description.empty()) {
      raise(ErrorKind::NotFound, "entity '" + entity.id + "' has no description");
    }
    const auto [title, company] = split_title_company(input);
    return "Given the job title '" + title + "' and company '" + company +
           ",' the individual is likely expected to " + lowercase_first(entity.description);
  }

  std::string rationale =
      "The job vacancy snippet explicitly mentions the following ESCO skills and knowledge:";
  for (const std::string& label : labels) {
    const TaxonomyEntity& entity = taxonomy.lookup(label);
    if (entity.description.empty()) {
      raise(ErrorKind::NotFound, "entity '" + entity.id + "' has no description");
    }
    rationale += "\n- [" + entity.title + ": " + entity.description + "]";
  }
  return rationale;
}

namespace {

std::vector<std::string> string_array(const json& value) {
  std::vector<std::string> out;
  if (value.is_array()) {
    for (const json& item : value) out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<PoolInstance> load_example_pool(const std::string& jsonl_path) {
  std::vector<PoolInstance> pool;
  for (const json& record : read_jsonl(jsonl_path)) {
    PoolInstance instance;
    instance.id = record.value("id", "");
    instance.input = record.at("input").get<std::string>();
    instance.labels = string_array(record.at("labels"));
    if (record.contains("options")) instance.options = string_array(record["options"]);
    if (record.contains("ranked_output")) {
      instance.ranked_output = string_array(record["ranked_output"]);
    }
    pool.push_back(std::move(instance));
  }
  return pool;
}

CotFixtures load_cot_fixtures(const std::string& json_path) {
  const json doc = json::parse(read_file(json_path));
  CotFixtures fixtures;
  auto parse_side = [](const json& arr) {
    std::vector<FixtureExample> out;
    for (const json& item : arr) {
      FixtureExample example;
      example.input = item.at("input").get<std::string>();
      example.rationale = item.at("rationale").get<std::string>();
      if (item.contains("labels")) example.labels = string_array(item["labels"]);
      if (item.contains("options")) example.options = string_array(item["options"]);
      if (item.contains("ranked_output")) {
        example.ranked_output = string_array(item["ranked_output"]);
      }
      out.push_back(std::move(example));
    }
    return out;
  };
  fixtures.inference = parse_side(doc.at("inference"));
  fixtures.rerank = parse_side(doc.at("rerank"));
  return fixtures;
}

ExampleSet select_example_set(const std::vector<PoolInstance>& pool, const CotFixtures* fixtures,
                              size_t k, Rng& rng, ReasoningMode mode, const Taxonomy& taxonomy,
                              TaskKind kind) {
  ExampleSet set;
  if (mode == ReasoningMode::Cot) {
    if (fixtures == nullptr || fixtures->inference.size() < k || fixtures->rerank.size() < k) {
      raise(ErrorKind::PoolTooSmall, "CoT fixtures provide fewer than k=" + std::to_string(k) +
                                         " examples");
    }
    auto to_example = [](const FixtureExample& fx) {
      GroundedExample example;
      example.input = fx.input;
      example.rationale = fx.rationale;
      example.labels = fx.labels;
      example.options = fx.options;
      example.ranked_output = fx.ranked_output.empty() ? fx.labels : fx.ranked_output;
      return example;
    };
    for (size_t i = 0; i < k; ++i) set.inference.push_back(to_example(fixtures->inference[i]));
    for (size_t i = 0; i < k; ++i) set.rerank.push_back(to_example(fixtures->rerank[i]));
    return set;
  }

  if (pool.size() < k) {
    raise(ErrorKind::PoolTooSmall, "example pool has " + std::to_string(pool.size()) +
                                       " instances, need " + std::to_string(k));
  }
  for (size_t pick : rng.sample_indexes(pool.size(), k)) {
    const PoolInstance& instance = pool[pick];
    GroundedExample example;
    example.input = instance.input;
    example.rationale = make_grounded_rationale(instance.input, instance.labels, taxonomy, kind);
    example.labels = instance.labels;
    example.options = instance.options.empty() ? instance.labels : instance.options;
    example.ranked_output =
        instance.ranked_output.empty() ? instance.labels : instance.ranked_output;
    set.inference.push_back(example);
    set.rerank.push_back(std::move(example));
  }
  return set;
}

namespace {

std::string numbered_list(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += '\n';
    out += std::to_string(i + 1) + ". " + items[i];
  }
  return out;
}

const char* occupation_output_field(ReasoningMode mode) {
  return mode == ReasoningMode::Tgre ? "Prediction:" : "O*NET-SOC 2019 Occupations:";
}

}  // namespace

std::string render_example_block(const GroundedExample& example, TaskKind kind,
                                 ReasoningMode mode, PromptStage stage) {
  if (kind == TaskKind::Occupation) {
    if (stage == PromptStage::Inference) {
      return "Job title and company: " + example.input + "\nReasoning: " + example.rationale +
             "\n" + occupation_output_field(mode) + " " + join(example.labels, "; ");
    }
    const char* ranked_field =
        mode == ReasoningMode::Tgre ? "Most likely occupations:" : "O*NET-SOC 2019 Occupations:";
    return "Job title and company: " + example.input + "\nOptions:\n" +
           join(example.options, "; ") + "\nReasoning: " + example.rationale + "\n" +
           ranked_field + "\n" + numbered_list(example.ranked_output);
  }

  if (stage == PromptStage::Inference) {
    if (mode == ReasoningMode::Tgre) {
      // The bracketed concepts in the rationale carry the labels.
      return "Text snippet: " + example.input + "\nReasoning: " + example.rationale;
    }
    return "Vacancy: " + example.input + "\nReasoning: " + example.rationale +
           "\nSkills: " + join(example.labels, ", ");
  }

  if (mode == ReasoningMode::Tgre) {
    return "Text snippet: " + example.input + "\nOptions:\n" + join(example.options, "; ") +
           "\nReasoning: " + example.rationale +
           "\nTherefore, we select the following 10 most applicable options:\n" +
           numbered_list(example.ranked_output);
  }
  return "Text snippet: " + example.input + "\nOptions:\n" + join(example.options, "; ") +
         "\nReasoning: " + example.rationale + "\nSkills: " + join(example.ranked_output, "; ");
}

namespace {

std::map<std::string, std::string> example_bindings(const PromptTemplate& tmpl,
                                                    const std::vector<GroundedExample>& examples,
                                                    TaskKind kind, ReasoningMode mode,
                                                    PromptStage stage) {
  std::map<std::string, std::string> vars;
  std::vector<std::string> blocks;
  blocks.reserve(examples.size());
  for (const GroundedExample& example : examples) {
    blocks.push_back(render_example_block(example, kind, mode, stage));
  }
  if (tmpl.required_variables.count("examples") != 0) {
    if (blocks.empty()) {
      raise(ErrorKind::MissingVariable, "template '" + tmpl.name + "' requires examples");
    }
    vars["examples"] = join(blocks, "\n---\n");
  }
  for (size_t i = 0; i < blocks.size(); ++i) {
    vars["example_" + std::to_string(i + 1)] = blocks[i];
  }
  return vars;
}

}  // namespace

std::string render_inference_prompt(const PromptTemplate& tmpl,
                                    const std::vector<GroundedExample>& examples,
                                    const std::string& input, TaskKind kind, ReasoningMode mode) {
  auto vars = example_bindings(tmpl, examples, kind, mode, PromptStage::Inference);
  vars["input"] = input;
  return tmpl.render(vars);
}

std::string render_options_line(const std::vector<RerankOption>& options) {
  std::vector<std::string> texts;
  texts.reserve(options.size());
  for (const RerankOption& option : options) texts.push_back(option.text);
  return join(texts, "; ");
}

std::string render_rerank_prompt(const PromptTemplate& tmpl,
                                 const std::vector<GroundedExample>& examples,
                                 const std::string& input,
                                 const std::vector<RerankOption>& options, TaskKind kind,
                                 ReasoningMode mode) {
  if (options.empty()) raise(ErrorKind::MissingVariable, "rerank prompt requires options");
  auto vars = example_bindings(tmpl, examples, kind, mode, PromptStage::Rerank);
  vars["input"] = input;
  vars["options"] = render_options_line(options);
  return tmpl.render(vars);
}

std::string InferenceLabel::text() const {
  if (code_or_id.has_value() && !code_or_id->empty()) {
    if (title.empty()) return *code_or_id;
    return title + " (" + *code_or_id + ")";
  }
  return title;
}

std::vector<std::string> InferenceOutput::label_texts() const {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const InferenceLabel& label : labels) out.push_back(label.text());
  return out;
}

namespace {

struct SectionHit {
  size_t marker_pos = std::string::npos;
  size_t body_pos = std::string::npos;
};

// Last occurrence of any marker; completions place the final answer section
// after the rationale.
SectionHit find_last_marker(const std::string& raw, const std::vector<std::string>& markers) {
  SectionHit hit;
  for (const std::string& marker : markers) {
    const size_t pos = raw.rfind(marker);
    if (pos != std::string::npos &&
        (hit.marker_pos == std::string::npos || pos > hit.marker_pos)) {
      hit.marker_pos = pos;
      hit.body_pos = pos + marker.size();
    }
  }
  return hit;
}

bool is_none_text(const std::string& text) {
  const std::string folded = to_lower_ascii(trim(text));
  if (folded == "none" || folded == "\"none\"" || folded == "none.") return true;
  return folded.rfind("none (00-0000.00)", 0) == 0 || folded.rfind("none(00-0000.00)", 0) == 0;
}

// Sentence punctuation after a label, but never the dot inside a bare code.
std::string strip_trailing_period(const std::string& text) {
  std::string out = trim(text);
  if (!out.empty() && out.back() == '.' && !looks_like_soc_code(out)) {
    out = trim(out.substr(0, out.size() - 1));
  }
  return out;
}

InferenceLabel parse_label_entry(const std::string& entry) {
  InferenceLabel label;
  std::string text = trim(entry);
  // strip leading list numbering if present
  size_t i = 0;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i > 0 && i < text.size() && (text[i] == '.' || text[i] == ')')) {
    text = trim(text.substr(i + 1));
  }
  if (!text.empty() && text.back() == '.') {
    // trailing sentence period, not part of a label
    const std::string trimmed = trim(text.substr(0, text.size() - 1));
    if (!trimmed.empty() && trimmed.back() == ')') text = trimmed;
  }
  if (looks_like_soc_code(text)) {
    label.code_or_id = text;
    return label;
  }
  const size_t close = text.rfind(')');
  if (close != std::string::npos && close == text.size() - 1) {
    const size_t open = text.rfind('(');
    if (open != std::string::npos && open < close) {
      const std::string inner = trim(text.substr(open + 1, close - open - 1));
      if (looks_like_soc_code(inner) || inner.rfind("http", 0) == 0) {
        label.title = trim(text.substr(0, open));
        label.code_or_id = inner;
        return label;
      }
    }
  }
  label.title = text;
  return label;
}

std::vector<std::string> split_entries(const std::string& section) {
  // Semicolons take precedence; comma-separated lists appear in skill
  // outputs that follow the `Skills: a, b` form.
  const char delim = section.find(';') != std::string::npos ? ';' : ',';
  std::vector<std::string> entries;
  for (const std::string& part : split(section, delim)) {
    const std::string trimmed = trim(part);
    if (!trimmed.empty()) entries.push_back(trimmed);
  }
  return entries;
}

// Bracketed `[label: description]` clauses inside a grounded skill rationale.
std::vector<std::string> extract_bracket_labels(const std::string& rationale) {
  std::vector<std::string> labels;
  size_t i = 0;
  while (true) {
    const size_t open = rationale.find('[', i);
    if (open == std::string::npos) break;
    const size_t close = rationale.find(']', open + 1);
    if (close == std::string::npos) break;
    const std::string clause = rationale.substr(open + 1, close - open - 1);
    const size_t colon = clause.find(':');
    if (colon != std::string::npos) {
      const std::string label = trim(clause.substr(0, colon));
      if (!label.empty()) labels.push_back(label);
    }
    i = close + 1;
  }
  return labels;
}

}  // namespace

InferenceOutput parse_inference_output(const std::string& raw, TaskKind kind) {
  InferenceOutput output;
  output.raw = raw;

  const std::vector<std::string> markers =
      kind == TaskKind::Occupation
          ? std::vector<std::string>{"Prediction:", "O*NET-SOC 2019 Occupations:"}
          : std::vector<std::string>{"Skills:"};
  const SectionHit hit = find_last_marker(raw, markers);

  const size_t reasoning_pos = raw.find("Reasoning:");
  size_t rationale_begin = 0;
  if (reasoning_pos != std::string::npos) rationale_begin = reasoning_pos + 10;
  const size_t rationale_end =
      hit.marker_pos != std::string::npos && hit.marker_pos >= rationale_begin ? hit.marker_pos
                                                                               : raw.size();
  output.rationale = trim(raw.substr(rationale_begin, rationale_end - rationale_begin));

  if (hit.marker_pos == std::string::npos) {
    if (kind == TaskKind::Skill) {
      const auto bracketed = extract_bracket_labels(output.rationale);
      if (!bracketed.empty()) {
        for (const std::string& label : bracketed) output.labels.push_back({label, std::nullopt});
        return output;
      }
    }
    raise(ErrorKind::Unparseable, "no prediction section in completion");
  }

  // Section runs to the end of the completion.
  const std::string section = trim(raw.substr(hit.body_pos));
  if (is_none_text(section)) {
    output.none_declared = true;
    return output;
  }
  for (const std::string& entry : split_entries(section)) {
    if (is_none_text(entry)) {
      output.none_declared = output.labels.empty();
      continue;
    }
    InferenceLabel label = parse_label_entry(entry);
    if (!label.title.empty() || label.code_or_id.has_value()) {
      output.labels.push_back(std::move(label));
    }
  }
  if (output.labels.empty() && !output.none_declared) {
    raise(ErrorKind::Unparseable, "prediction section is empty");
  }
  return output;
}

namespace {

struct OptionKey {
  std::string exact;
  std::string norm_text;
  std::string norm_title;
  std::string code;
};

std::vector<OptionKey> option_keys(const std::vector<RerankOption>& options) {
  std::vector<OptionKey> keys;
  keys.reserve(options.size());
  for (const RerankOption& option : options) {
    OptionKey key;
    key.exact = trim(option.text);
    key.norm_text = normalize_title(option.text);
    const size_t open = option.text.rfind('(');
    const size_t close = option.text.rfind(')');
    if (open != std::string::npos && close != std::string::npos && open < close) {
      const std::string inner = trim(option.text.substr(open + 1, close - open - 1));
      if (looks_like_soc_code(inner) || inner.rfind("http", 0) == 0) {
        key.code = inner;
        key.norm_title = normalize_title(option.text.substr(0, open));
      }
    }
    if (key.norm_title.empty()) key.norm_title = key.norm_text;
    keys.push_back(std::move(key));
  }
  return keys;
}

// Resolution precedence: exact option text, then composite/bare code, then
// normalized title.
size_t resolve_entry(const std::string& entry, const std::vector<OptionKey>& keys) {
  const std::string trimmed = trim(entry);
  const std::string norm = normalize_title(trimmed);
  for (size_t i = 0; i < keys.size(); ++i) {
    if (trimmed == keys[i].exact) return i;
  }
  const InferenceLabel label = parse_label_entry(trimmed);
  if (label.code_or_id.has_value()) {
    for (size_t i = 0; i < keys.size(); ++i) {
      if (!keys[i].code.empty() && keys[i].code == *label.code_or_id) return i;
    }
  }
  for (size_t i = 0; i < keys.size(); ++i) {
    if (!keys[i].code.empty() && keys[i].code == trimmed) return i;
  }
  for (size_t i = 0; i < keys.size(); ++i) {
    if (norm == keys[i].norm_text || norm == keys[i].norm_title) return i;
  }
  if (!label.title.empty()) {
    const std::string norm_title = normalize_title(label.title);
    for (size_t i = 0; i < keys.size(); ++i) {
      if (norm_title == keys[i].norm_title) return i;
    }
  }
  return static_cast<size_t>(-1);
}

std::vector<std::string> numbered_lines(const std::string& raw) {
  std::vector<std::string> entries;
  for (const std::string& line : split(raw, '\n')) {
    const std::string trimmed = trim(line);
    size_t i = 0;
    while (i < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[i]))) ++i;
    if (i == 0 || i >= trimmed.size()) continue;
    if (trimmed[i] != '.' && trimmed[i] != ')') continue;
    const std::string body = trim(trimmed.substr(i + 1));
    if (!body.empty()) entries.push_back(body);
  }
  return entries;
}

}  // namespace

RerankParse parse_rerank_output(const std::string& raw, const std::vector<RerankOption>& options) {
  RerankParse result;
  std::vector<std::string> entries = numbered_lines(raw);
  if (entries.empty()) {
    // Fall back to a `Skills:`-style single-line ranking.
    const SectionHit hit = find_last_marker(raw, {"Skills:", "Most likely occupations:",
                                                  "O*NET-SOC 2019 Occupations:"});
    if (hit.marker_pos == std::string::npos) {
      raise(ErrorKind::Unparseable, "no ranked list in completion");
    }
    const std::string section = trim(raw.substr(hit.body_pos));
    if (section.empty()) raise(ErrorKind::Unparseable, "ranked list section is empty");
    entries = split_entries(section);
  }

  const auto keys = option_keys(options);
  std::vector<bool> seen(options.size(), false);
  for (const std::string& entry : entries) {
    if (is_none_text(entry)) {
      result.none_selected = true;
      continue;
    }
    const size_t idx = resolve_entry(entry, keys);
    if (idx == static_cast<size_t>(-1)) {
      ++result.dropped_lines;
      continue;
    }
    if (seen[idx]) continue;  // duplicates collapse, first occurrence wins
    seen[idx] = true;
    result.entity_ids.push_back(options[idx].entity_id);
  }
  return result;
}

std::vector<std::string> parse_judge_answer(const std::string& raw,
                                            const std::vector<std::string>& pool) {
  const size_t pos = raw.rfind("Answer:");
  if (pos == std::string::npos) return {};
  std::string section = trim(raw.substr(pos + 7));
  const size_t newline = section.find('\n');
  if (newline != std::string::npos) section = trim(section.substr(0, newline));

  std::vector<RerankOption> options;
  options.reserve(pool.size());
  for (const std::string& label : pool) options.push_back({label, label});
  const auto keys = option_keys(options);

  std::vector<std::string> selected;
  std::vector<bool> seen(pool.size(), false);
  for (const std::string& entry : split_entries(section)) {
    const std::string cleaned = strip_trailing_period(entry);
    const size_t idx = resolve_entry(cleaned.empty() ? entry : cleaned, keys);
    if (idx == static_cast<size_t>(-1) || seen[idx]) continue;
    seen[idx] = true;
    selected.push_back(pool[idx]);
  }
  return selected;
}

}  // namespace taxclass
