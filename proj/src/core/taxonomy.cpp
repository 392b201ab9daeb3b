#include "core/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/text.hpp"

namespace taxclass {

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

bool looks_like_soc_code(std::string_view text) {
  if (text.size() != 10) return false;
  for (size_t i = 0; i < 10; ++i) {
    if (i == 2) {
      if (text[i] != '-') return false;
    } else if (i == 7) {
      if (text[i] != '.') return false;
    } else if (!is_digit(text[i])) {
      return false;
    }
  }
  return true;
}

SocCode parse_soc_code(std::string_view text) {
  if (!looks_like_soc_code(text)) {
    raise(ErrorKind::MalformedCode, "expected DD-DDDD.DD, got '" + std::string(text) + "'");
  }
  SocCode code;
  code.raw = std::string(text);
  code.major = code.raw.substr(0, 2);
  code.minor = code.raw.substr(0, 4);
  code.broad = code.raw.substr(0, 6);
  code.detailed = code.raw.substr(0, 7);
  code.specific = code.raw;
  code.sentinel = code.raw == kNoneSentinelCode;
  return code;
}

std::string entity_label(const TaxonomyEntity& entity) {
  if (entity.kind == EntityKind::Occupation && entity.code.has_value()) {
    return entity.title + " (" + entity.code->raw + ")";
  }
  return entity.title;
}

TaxonomyFormat taxonomy_format_from_string(std::string_view name) {
  if (name == "onet") return TaxonomyFormat::Onet;
  if (name == "esco") return TaxonomyFormat::Esco;
  if (name == "archive") return TaxonomyFormat::Archive;
  raise(ErrorKind::ConfigError, "unknown taxonomy format '" + std::string(name) + "'");
}

namespace {

size_t require_column(const std::vector<std::string>& header, const std::string& name,
                      const std::string& path) {
  for (size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  raise(ErrorKind::MissingColumn, path + ": header lacks column '" + name + "'");
}

std::vector<TaxonomyEntity> load_onet_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) raise(ErrorKind::MissingColumn, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, '\t');
  const size_t code_col = require_column(header, "O*NET-SOC Code", path);
  const size_t title_col = require_column(header, "Title", path);
  const size_t desc_col = require_column(header, "Description", path);

  std::vector<TaxonomyEntity> entities;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    const size_t needed = std::max({code_col, title_col, desc_col});
    if (fields.size() <= needed) {
      raise(ErrorKind::EmptyField, path + ": row " + std::to_string(row) + " has too few fields");
    }
    TaxonomyEntity entity;
    entity.id = trim(fields[code_col]);
    entity.title = trim(fields[title_col]);
    entity.description = trim(fields[desc_col]);
    entity.kind = EntityKind::Occupation;
    if (entity.id.empty() || entity.title.empty() || entity.description.empty()) {
      raise(ErrorKind::EmptyField, path + ": row " + std::to_string(row) + " has an empty field");
    }
    entity.code = parse_soc_code(entity.id);
    entities.push_back(std::move(entity));
  }
  return entities;
}

// Minimal RFC 4180 reader: quoted fields, doubled-quote escapes, embedded
// separators and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  size_t i = 0;
  const size_t n = content.size();
  while (i < n) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < n && content[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      if (row.size() > 1 || !row[0].empty()) rows.push_back(std::move(row));
      row.clear();
    } else {
      field.push_back(c);
    }
    ++i;
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    if (row.size() > 1 || !row[0].empty()) rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TaxonomyEntity> load_esco_rows(const std::string& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) raise(ErrorKind::MissingColumn, path + ": empty file");
  const size_t uri_col = require_column(rows[0], "conceptUri", path);
  const size_t label_col = require_column(rows[0], "preferredLabel", path);
  const size_t desc_col = require_column(rows[0], "description", path);

  std::vector<TaxonomyEntity> entities;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    const size_t needed = std::max({uri_col, label_col, desc_col});
    if (fields.size() <= needed) {
      raise(ErrorKind::EmptyField, path + ": row " + std::to_string(r + 1) + " has too few fields");
    }
    TaxonomyEntity entity;
    entity.id = trim(fields[uri_col]);
    entity.title = trim(fields[label_col]);
    entity.description = trim(fields[desc_col]);
    entity.kind = EntityKind::Skill;
    if (entity.id.empty() || entity.title.empty() || entity.description.empty()) {
      raise(ErrorKind::EmptyField, path + ": row " + std::to_string(r + 1) + " has an empty field");
    }
    entities.push_back(std::move(entity));
  }
  return entities;
}

std::vector<TaxonomyEntity> load_archive_rows(const std::string& path, std::string& name_out) {
  const auto records = read_jsonl(path);
  if (records.empty() || !records[0].contains("taxclass_archive")) {
    raise(ErrorKind::Unparseable, path + ": not a taxonomy archive");
  }
  name_out = records[0].value("name", "");
  std::vector<TaxonomyEntity> entities;
  for (size_t i = 1; i < records.size(); ++i) {
    const json& rec = records[i];
    TaxonomyEntity entity;
    entity.id = rec.at("id").get<std::string>();
    entity.title = rec.at("title").get<std::string>();
    entity.description = rec.at("description").get<std::string>();
    entity.kind = rec.at("kind").get<std::string>() == "skill" ? EntityKind::Skill
                                                               : EntityKind::Occupation;
    if (entity.kind == EntityKind::Occupation) entity.code = parse_soc_code(entity.id);
    entities.push_back(std::move(entity));
  }
  return entities;
}

}  // namespace

Taxonomy Taxonomy::load(const std::string& path, TaxonomyFormat format, std::string name) {
  std::vector<TaxonomyEntity> entities;
  switch (format) {
    case TaxonomyFormat::Onet:
      if (name.empty()) name = "onet-soc-2019";
      entities = load_onet_rows(path);
      break;
    case TaxonomyFormat::Esco:
      if (name.empty()) name = "esco-1.2";
      entities = load_esco_rows(path);
      break;
    case TaxonomyFormat::Archive: {
      std::string archived_name;
      entities = load_archive_rows(path, archived_name);
      if (name.empty()) name = archived_name;
      break;
    }
  }
  return from_entities(std::move(name), std::move(entities));
}

Taxonomy Taxonomy::from_entities(std::string name, std::vector<TaxonomyEntity> entities) {
  Taxonomy taxonomy;
  taxonomy.name_ = std::move(name);
  taxonomy.entities_ = std::move(entities);
  taxonomy.build_indexes();
  return taxonomy;
}

void Taxonomy::build_indexes() {
  by_id_.clear();
  by_title_.clear();
  by_major_.clear();
  for (size_t i = 0; i < entities_.size(); ++i) {
    const TaxonomyEntity& entity = entities_[i];
    if (entity.id.empty()) raise(ErrorKind::EmptyField, "entity " + std::to_string(i) + " lacks id");
    if (entity.title.empty() || entity.description.empty()) {
      raise(ErrorKind::EmptyField, "entity '" + entity.id + "' has an empty field");
    }
    if (!by_id_.emplace(entity.id, i).second) {
      raise(ErrorKind::DuplicateId, "duplicate entity id '" + entity.id + "'");
    }
    const std::string norm = normalize_title(entity.title);
    auto [it, inserted] = by_title_.emplace(norm, i);
    if (!inserted) it->second = kAmbiguous;
    if (entity.kind == EntityKind::Occupation && entity.code.has_value()) {
      by_major_[entity.code->major].push_back(i);
    }
  }
}

void Taxonomy::save_archive(const std::string& path) const {
  std::vector<json> records;
  records.reserve(entities_.size() + 1);
  records.push_back({{"taxclass_archive", 1}, {"name", name_}, {"count", entities_.size()}});
  for (const TaxonomyEntity& entity : entities_) {
    records.push_back({{"id", entity.id},
                       {"title", entity.title},
                       {"description", entity.description},
                       {"kind", entity.kind == EntityKind::Skill ? "skill" : "occupation"}});
  }
  write_jsonl(path, records);
}

const TaxonomyEntity* Taxonomy::find_by_id(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &entities_[it->second];
}

const TaxonomyEntity& Taxonomy::lookup(std::string_view label) const {
  const std::string trimmed = trim(label);
  if (trimmed.empty()) raise(ErrorKind::NotFound, "empty label");

  if (const TaxonomyEntity* entity = find_by_id(trimmed)) return *entity;

  // `Title (code)` composite: only treated as such when the parenthesized
  // tail is a code or URI, so ESCO titles like `Python (computer
  // programming)` still resolve as titles.
  if (trimmed.back() == ')') {
    const size_t open = trimmed.rfind('(');
    if (open != std::string::npos) {
      const std::string inner = trim(trimmed.substr(open + 1, trimmed.size() - open - 2));
      if (looks_like_soc_code(inner) || inner.rfind("http", 0) == 0) {
        if (const TaxonomyEntity* entity = find_by_id(inner)) return *entity;
        raise(ErrorKind::NotFound, "no entity with code '" + inner + "'");
      }
    }
  }

  const auto it = by_title_.find(normalize_title(trimmed));
  if (it == by_title_.end()) raise(ErrorKind::NotFound, "no entity matching '" + trimmed + "'");
  if (it->second == kAmbiguous) {
    raise(ErrorKind::AmbiguousTitle, "title '" + trimmed + "' matches multiple entities");
  }
  return entities_[it->second];
}

const std::vector<size_t>& Taxonomy::major_group(const std::string& major) const {
  static const std::vector<size_t> empty;
  const auto it = by_major_.find(major);
  return it == by_major_.end() ? empty : it->second;
}

std::vector<const TaxonomyEntity*> sample_recognition_options(const Taxonomy& taxonomy,
                                                              const TaxonomyEntity& answer,
                                                              Rng& rng) {
  if (!answer.code.has_value()) {
    raise(ErrorKind::InsufficientPool, "entity '" + answer.id + "' has no major group");
  }
  const auto& same_major = taxonomy.major_group(answer.code->major);
  if (same_major.size() < 3) {
    raise(ErrorKind::InsufficientPool,
          "major group " + answer.code->major + " has fewer than 3 entities");
  }

  std::vector<size_t> same_pool;
  same_pool.reserve(same_major.size());
  for (size_t idx : same_major) {
    if (taxonomy.at(idx).id != answer.id) same_pool.push_back(idx);
  }

  std::vector<size_t> diff_pool;
  for (size_t i = 0; i < taxonomy.size(); ++i) {
    const TaxonomyEntity& entity = taxonomy.at(i);
    if (entity.code.has_value() && entity.code->major != answer.code->major) {
      diff_pool.push_back(i);
    }
  }
  if (diff_pool.size() < 2) {
    raise(ErrorKind::InsufficientPool, "fewer than 2 entities outside major group " +
                                           answer.code->major);
  }

  std::vector<const TaxonomyEntity*> options;
  options.push_back(&answer);
  for (size_t pick : rng.sample_indexes(same_pool.size(), 2)) {
    options.push_back(&taxonomy.at(same_pool[pick]));
  }
  for (size_t pick : rng.sample_indexes(diff_pool.size(), 2)) {
    options.push_back(&taxonomy.at(diff_pool[pick]));
  }
  rng.shuffle(options);
  return options;
}

}  // namespace taxclass
