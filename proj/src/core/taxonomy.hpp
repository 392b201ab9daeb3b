#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"

namespace taxclass {

// Occupation code of form DD-DDDD.DD. The prefixes encode the five hierarchy
// levels: major (2), minor (4), broad (6), detailed (7), specific (10 = raw).
struct SocCode {
  std::string raw;
  std::string major;
  std::string minor;
  std::string broad;
  std::string detailed;
  std::string specific;
  bool sentinel = false;  // 00-0000.00, the "None" label
};

inline constexpr std::string_view kNoneSentinelCode = "00-0000.00";
inline constexpr std::string_view kNoneSentinelLabel = "None (00-0000.00)";

// Throws MalformedCode when the pattern does not match.
SocCode parse_soc_code(std::string_view text);
bool looks_like_soc_code(std::string_view text);

enum class EntityKind { Occupation, Skill };

struct TaxonomyEntity {
  std::string id;
  std::string title;
  std::string description;
  EntityKind kind = EntityKind::Occupation;
  std::optional<SocCode> code;
};

// Rendering used in prompts and option lists: `Title (code)` for occupations,
// the bare preferred label for skills.
std::string entity_label(const TaxonomyEntity& entity);

enum class TaxonomyFormat { Onet, Esco, Archive };

TaxonomyFormat taxonomy_format_from_string(std::string_view name);

class Taxonomy {
 public:
  Taxonomy() = default;

  // onet: tab-separated with `O*NET-SOC Code`, `Title`, `Description` columns.
  // esco: comma-separated with `conceptUri`, `preferredLabel`, `description`.
  // archive: the normalized JSONL form written by save_archive().
  static Taxonomy load(const std::string& path, TaxonomyFormat format, std::string name = "");

  static Taxonomy from_entities(std::string name, std::vector<TaxonomyEntity> entities);

  void save_archive(const std::string& path) const;

  const std::string& name() const { return name_; }
  size_t size() const { return entities_.size(); }
  const std::vector<TaxonomyEntity>& entities() const { return entities_; }
  const TaxonomyEntity& at(size_t i) const { return entities_.at(i); }

  const TaxonomyEntity* find_by_id(std::string_view id) const;

  // Resolves an id, a `Title (code)` composite, or a bare title, in that
  // precedence. Throws NotFound / AmbiguousTitle.
  const TaxonomyEntity& lookup(std::string_view label) const;

  // Entity indexes per 2-digit major group; occupations only.
  const std::vector<size_t>& major_group(const std::string& major) const;
  size_t major_group_count() const { return by_major_.size(); }

 private:
  void build_indexes();

  std::string name_;
  std::vector<TaxonomyEntity> entities_;
  std::unordered_map<std::string, size_t> by_id_;
  static constexpr size_t kAmbiguous = static_cast<size_t>(-1);
  std::unordered_map<std::string, size_t> by_title_;
  std::map<std::string, std::vector<size_t>> by_major_;
};

// Recognition option sampling: the answer, two other entities from the same
// major group, two from different major groups, uniformly shuffled.
std::vector<const TaxonomyEntity*> sample_recognition_options(const Taxonomy& taxonomy,
                                                              const TaxonomyEntity& answer,
                                                              Rng& rng);

}  // namespace taxclass
