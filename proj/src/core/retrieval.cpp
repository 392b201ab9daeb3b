#include "core/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/digest.hpp"
#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/rng.hpp"
#include "core/text.hpp"

namespace taxclass {

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    raise(ErrorKind::DimensionMismatch, "cosine over dims " + std::to_string(a.dim()) + " and " +
                                            std::to_string(b.dim()));
  }
  double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    const double x = a.values[i];
    const double y = b.values[i];
    dot += x * y;
    norm_a += x * x;
    norm_b += y * y;
  }
  if (norm_a == 0.0 || norm_b == 0.0) raise(ErrorKind::ZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

HashEmbeddingProvider::HashEmbeddingProvider(size_t dim, uint64_t salt)
    : dim_(dim), salt_(salt) {}

std::string HashEmbeddingProvider::id() const {
  return "hash64:dim=" + std::to_string(dim_) + ":salt=" + std::to_string(salt_);
}

std::vector<EmbeddingVector> HashEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                          EmbedCallStats* stats) {
  if (texts.empty()) raise(ErrorKind::ConfigError, "embed called with no texts");
  if (stats != nullptr) *stats = {};
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    Rng rng(splitmix64(fnv1a64(text) ^ salt_));
    EmbeddingVector vec;
    vec.values.resize(dim_);
    for (size_t i = 0; i < dim_; ++i) {
      vec.values[i] = static_cast<float>(rng.unit() * 2.0 - 1.0);
    }
    double norm = 0.0;
    for (float v : vec.values) norm += static_cast<double>(v) * v;
    if (norm < 1e-24) vec.values[0] = 1.0f;
    out.push_back(std::move(vec));
  }
  return out;
}

RetrievalUnit retrieval_unit_from_string(std::string_view name) {
  if (name == "sentence") return RetrievalUnit::Sentence;
  if (name == "label") return RetrievalUnit::Label;
  raise(ErrorKind::ConfigError, "unknown retrieval unit '" + std::string(name) + "'");
}

const char* to_string(RetrievalUnit unit) {
  return unit == RetrievalUnit::Sentence ? "sentence" : "label";
}

std::string make_document(const TaxonomyEntity& entity, RetrievalUnit unit) {
  std::string doc = entity_label(entity);
  if (unit == RetrievalUnit::Sentence) {
    doc += ": " + entity.description;
  }
  return doc;
}

std::string make_query(const std::string& rationale, const std::vector<std::string>& labels,
                       RetrievalUnit unit) {
  const std::string joined = join(labels, "; ");
  if (unit == RetrievalUnit::Label) {
    if (joined.empty()) raise(ErrorKind::EmptyInference, "no labels for label-unit query");
    return joined;
  }
  const std::string trimmed_rationale = trim(rationale);
  if (trimmed_rationale.empty() && joined.empty()) {
    raise(ErrorKind::EmptyInference, "inference produced neither rationale nor labels");
  }
  if (trimmed_rationale.empty()) return joined;
  if (joined.empty()) return trimmed_rationale;
  return trimmed_rationale + " " + joined;
}

RetrievalIndex RetrievalIndex::build(const Taxonomy& taxonomy, RetrievalUnit unit,
                                     EmbeddingProvider& provider) {
  if (taxonomy.size() == 0) raise(ErrorKind::ConfigError, "cannot index an empty taxonomy");
  RetrievalIndex index;
  index.taxonomy_name_ = taxonomy.name();
  index.unit_ = unit;
  index.provider_id_ = provider.id();

  std::vector<std::string> texts;
  texts.reserve(taxonomy.size());
  index.documents_.reserve(taxonomy.size());
  for (const TaxonomyEntity& entity : taxonomy.entities()) {
    std::string doc = make_document(entity, unit);
    texts.push_back(doc);
    index.documents_.emplace_back(entity.id, std::move(doc));
  }

  index.vectors_ = provider.embed(texts);
  if (index.vectors_.size() != texts.size()) {
    raise(ErrorKind::DimensionMismatch, "provider returned " +
                                            std::to_string(index.vectors_.size()) +
                                            " vectors for " + std::to_string(texts.size()) +
                                            " texts");
  }
  index.dim_ = index.vectors_.empty() ? 0 : index.vectors_[0].dim();
  for (const EmbeddingVector& vec : index.vectors_) {
    if (vec.dim() != index.dim_) {
      raise(ErrorKind::DimensionMismatch, "provider returned mixed dimensions");
    }
  }
  return index;
}

namespace {

constexpr uint8_t kIndexVersion = 1;

void put_u32le(std::string& out, uint32_t value) {
  out.push_back(static_cast<char>(value & 0xFF));
  out.push_back(static_cast<char>((value >> 8) & 0xFF));
  out.push_back(static_cast<char>((value >> 16) & 0xFF));
  out.push_back(static_cast<char>((value >> 24) & 0xFF));
}

uint32_t get_u32le(const std::string& data, size_t& pos) {
  if (pos + 4 > data.size()) raise(ErrorKind::Unparseable, "truncated index file");
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  pos += 4;
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::string get_bytes(const std::string& data, size_t& pos, size_t len) {
  if (pos + len > data.size()) raise(ErrorKind::Unparseable, "truncated index file");
  std::string out = data.substr(pos, len);
  pos += len;
  return out;
}

void put_f32le(std::string& out, float value) {
  uint32_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  put_u32le(out, bits);
}

float get_f32le(const std::string& data, size_t& pos) {
  const uint32_t bits = get_u32le(data, pos);
  float value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

}  // namespace

void RetrievalIndex::save(const std::string& path) const {
  std::string out;
  out.push_back(static_cast<char>(kIndexVersion));

  const json header = {{"taxonomy_name", taxonomy_name_},
                       {"unit", to_string(unit_)},
                       {"provider_id", provider_id_},
                       {"dim", dim_},
                       {"count", documents_.size()}};
  const std::string header_bytes = header.dump();
  put_u32le(out, static_cast<uint32_t>(header_bytes.size()));
  out += header_bytes;

  for (const auto& [id, doc] : documents_) {
    put_u32le(out, static_cast<uint32_t>(id.size()));
    out += id;
    put_u32le(out, static_cast<uint32_t>(doc.size()));
    out += doc;
  }
  for (const EmbeddingVector& vec : vectors_) {
    for (float v : vec.values) put_f32le(out, v);
  }
  write_file_atomic(path, out);
}

RetrievalIndex RetrievalIndex::load(const std::string& path) {
  const std::string data = read_file(path);
  if (data.empty()) raise(ErrorKind::Unparseable, path + ": empty index file");
  size_t pos = 0;
  const auto version = static_cast<uint8_t>(data[pos++]);
  if (version != kIndexVersion) {
    raise(ErrorKind::Unparseable, path + ": unsupported index version " +
                                      std::to_string(version));
  }
  const uint32_t header_len = get_u32le(data, pos);
  const json header = json::parse(get_bytes(data, pos, header_len));

  RetrievalIndex index;
  index.taxonomy_name_ = header.at("taxonomy_name").get<std::string>();
  index.unit_ = retrieval_unit_from_string(header.at("unit").get<std::string>());
  index.provider_id_ = header.at("provider_id").get<std::string>();
  index.dim_ = header.at("dim").get<size_t>();
  const auto count = header.at("count").get<size_t>();

  index.documents_.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const uint32_t id_len = get_u32le(data, pos);
    std::string id = get_bytes(data, pos, id_len);
    const uint32_t doc_len = get_u32le(data, pos);
    std::string doc = get_bytes(data, pos, doc_len);
    index.documents_.emplace_back(std::move(id), std::move(doc));
  }
  index.vectors_.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    EmbeddingVector vec;
    vec.values.resize(index.dim_);
    for (size_t d = 0; d < index.dim_; ++d) vec.values[d] = get_f32le(data, pos);
    index.vectors_.push_back(std::move(vec));
  }
  if (pos != data.size()) raise(ErrorKind::Unparseable, path + ": trailing bytes in index file");
  return index;
}

std::vector<ScoredCandidate> RetrievalIndex::retrieve(const std::string& query, size_t m,
                                                      EmbeddingProvider& provider,
                                                      EmbedCallStats* stats) const {
  if (m == 0) raise(ErrorKind::ConfigError, "retrieve requires m >= 1");
  if (provider.id() != provider_id_) {
    raise(ErrorKind::ConfigMismatch, "index built with provider '" + provider_id_ +
                                         "', queried with '" + provider.id() + "'");
  }
  const EmbeddingVector query_vec = provider.embed({query}, stats).at(0);

  std::vector<ScoredCandidate> scored;
  scored.reserve(documents_.size());
  for (size_t i = 0; i < documents_.size(); ++i) {
    scored.push_back({documents_[i].first, cosine_similarity(query_vec, vectors_[i]), 0});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity_id < b.entity_id;
  });
  if (scored.size() > m) scored.resize(m);
  for (size_t i = 0; i < scored.size(); ++i) scored[i].rank = static_cast<int>(i + 1);
  return scored;
}

}  // namespace taxclass
