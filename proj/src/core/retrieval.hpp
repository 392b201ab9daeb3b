#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/prompting.hpp"
#include "core/taxonomy.hpp"

namespace taxclass {

struct EmbeddingVector {
  std::vector<float> values;

  size_t dim() const { return values.size(); }
};

// dot(a,b) / (|a|·|b|); float32 inputs, accumulation is in double.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Transport-side accounting for one embed call. In-process providers report
// zero latency; remote ones measure around the request.
struct EmbedCallStats {
  double latency_seconds = 0.0;
  int64_t tokens = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  // Stable identity recorded in persisted indexes so stale reuse is
  // detectable.
  virtual std::string id() const = 0;

  // One vector per text, uniform dimension, deterministic for a fixed
  // (provider id, text).
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                             EmbedCallStats* stats = nullptr) = 0;
};

// Deterministic offline provider: each text hashes to a seed that drives a
// pseudo-random unit-range vector. Same text, same vector, any machine.
class HashEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(size_t dim = 64, uint64_t salt = 0);

  std::string id() const override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                     EmbedCallStats* stats = nullptr) override;

 private:
  size_t dim_;
  uint64_t salt_;
};

enum class RetrievalUnit { Sentence, Label };

RetrievalUnit retrieval_unit_from_string(std::string_view name);
const char* to_string(RetrievalUnit unit);

// label: `Title (code)` (bare label for skills). sentence: the label form
// followed by `: description`.
std::string make_document(const TaxonomyEntity& entity, RetrievalUnit unit);

// label: inferred labels joined by `; `. sentence: rationale, one space, the
// joined labels. The original input x never enters the query.
std::string make_query(const std::string& rationale, const std::vector<std::string>& labels,
                       RetrievalUnit unit);

struct ScoredCandidate {
  std::string entity_id;
  double score = 0.0;
  int rank = 0;
};

class RetrievalIndex {
 public:
  static RetrievalIndex build(const Taxonomy& taxonomy, RetrievalUnit unit,
                              EmbeddingProvider& provider);

  // Binary layout: version byte, u32 header length, JSON header, document
  // table, little-endian float32 vector block. See docs/index_format.md.
  void save(const std::string& path) const;
  static RetrievalIndex load(const std::string& path);

  // Exhaustive cosine scan; exactly min(m, size) candidates ordered by
  // descending score with ascending-id tie-break, ranks 1-based.
  std::vector<ScoredCandidate> retrieve(const std::string& query, size_t m,
                                        EmbeddingProvider& provider,
                                        EmbedCallStats* stats = nullptr) const;

  const std::string& taxonomy_name() const { return taxonomy_name_; }
  RetrievalUnit unit() const { return unit_; }
  const std::string& provider_id() const { return provider_id_; }
  size_t size() const { return documents_.size(); }
  size_t dim() const { return dim_; }
  const std::vector<std::pair<std::string, std::string>>& documents() const { return documents_; }
  const EmbeddingVector& vector_at(size_t i) const { return vectors_[i]; }

 private:
  std::string taxonomy_name_;
  RetrievalUnit unit_ = RetrievalUnit::Sentence;
  std::string provider_id_;
  size_t dim_ = 0;
  std::vector<std::pair<std::string, std::string>> documents_;  // (entity_id, document_text)
  std::vector<EmbeddingVector> vectors_;
};

}  // namespace taxclass
