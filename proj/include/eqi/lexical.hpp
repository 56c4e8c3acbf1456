#pragma once

#include "eqi/corpus.hpp"
#include "eqi/dense_index.hpp"

namespace eqi {

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

// IDF(t) * TF*(k1+1) / (TF + k1*(1 - b + b*len/avgdl)).
double bm25_term_score(const Bm25Params& params, double idf, double tf,
                       double len, double avgdl);

// BM25 inverted index over the tokenizer's terms. Works for either side;
// reversed retrieval indexes the query log and issues documents as probes.
class InvertedIndex {
 public:
  static InvertedIndex build(const ItemSet& items);

  size_t n_items() const { return ids_.size(); }
  double avgdl() const { return avgdl_; }
  size_t df(std::string_view term) const;
  // Robertson idf over the indexed side; shared form with the encoder.
  double idf(std::string_view term) const;
  uint32_t length_at(size_t pos) const { return lengths_[pos]; }
  const std::vector<uint64_t>& ids() const { return ids_; }

  // Probe terms are deduplicated: each distinct term contributes once.
  // Items sharing no term with the probe are excluded.
  RankedList topk(const std::vector<std::string>& probe_tokens,
                  const Bm25Params& params, size_t k) const;

  // header.json + postings.tsv (`term\tid:tf,id:tf,...`, terms sorted).
  void save(const std::filesystem::path& dir) const;
  static InvertedIndex load(const std::filesystem::path& dir);

 private:
  std::vector<uint64_t> ids_;      // ascending
  std::vector<uint32_t> lengths_;  // token counts, aligned with ids_
  double avgdl_ = 0.0;
  std::unordered_map<std::string, size_t> term_slot_;
  std::vector<std::vector<std::pair<uint32_t, uint32_t>>> postings_;  // (pos, tf)
};

class GroundTruth;
struct RelqConfig;

// Grid search maximizing mean exposure-list quality of reversed retrieval on
// the validation docs; ties resolved to the smaller (k1, b) lexicographically.
Bm25Params tune_bm25(const InvertedIndex& query_index,
                     const std::vector<Item>& validation_docs,
                     const GroundTruth& gt, const std::vector<Bm25Params>& grid,
                     const RelqConfig& relq_config, int threads);

}  // namespace eqi
