#pragma once

#include "eqi/corpus.hpp"

namespace eqi {

// Deterministic dual encoder over signed feature hashing: sublinear TF times
// Robertson IDF, hashed into `dim` buckets, L2-normalized. The same encoder
// serves queries and documents.
class SurrogateEncoder {
 public:
  static constexpr const char* kHashName = "fnv1a64-mix";

  static SurrogateEncoder build(const Collection& collection, uint32_t dim,
                                uint64_t seed);

  // Zero vector for token-free text, otherwise unit norm.
  std::vector<float> encode(std::string_view text) const;

  uint32_t dim() const { return dim_; }
  uint64_t seed() const { return seed_; }
  uint64_t n_docs() const { return n_docs_; }
  double idf(std::string_view term) const;
  double default_idf() const { return default_idf_; }
  const std::string& fingerprint() const { return fingerprint_; }

  // Directory layout: encoder.json header + idf.tsv (`term\tweight`).
  void save(const std::filesystem::path& dir) const;
  static SurrogateEncoder load(const std::filesystem::path& dir);

 private:
  void finalize();

  uint32_t dim_ = 0;
  uint64_t seed_ = 0;
  uint64_t n_docs_ = 0;
  double default_idf_ = 0.0;
  std::unordered_map<std::string, double> idf_;
  std::string fingerprint_;
};

}  // namespace eqi
