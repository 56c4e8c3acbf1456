#pragma once

#include <optional>

#include "eqi/dense_index.hpp"
#include "eqi/encoder.hpp"
#include "eqi/lexical.hpp"

namespace eqi {

// Ranks are 0-based in memory everywhere; the TREC file format is the only
// 1-based surface and is converted on the way in and out.
inline constexpr uint32_t kInfRank = UINT32_MAX;

// A document retrieval system under audit: text probe in, ranked docs out.
class DocRetriever {
 public:
  virtual ~DocRetriever() = default;
  virtual RankedList topk_for_text(std::string_view text, size_t k) const = 0;
  virtual std::string name() const = 0;
};

class DenseDocRetriever final : public DocRetriever {
 public:
  DenseDocRetriever(const SurrogateEncoder& encoder, const DenseIndex& index);
  RankedList topk_for_text(std::string_view text, size_t k) const override;
  std::string name() const override { return "dense"; }

 private:
  const SurrogateEncoder* encoder_;
  const DenseIndex* index_;
};

class LexicalDocRetriever final : public DocRetriever {
 public:
  LexicalDocRetriever(const InvertedIndex& index, Bm25Params params)
      : index_(&index), params_(params) {}
  RankedList topk_for_text(std::string_view text, size_t k) const override;
  std::string name() const override { return "bm25"; }
  Bm25Params params() const { return params_; }

 private:
  const InvertedIndex* index_;
  Bm25Params params_;
};

// Per-query top-n result rows, ascending query id.
class RunTable {
 public:
  explicit RunTable(size_t n_qd) : n_qd_(n_qd) {}

  void add_row(uint64_t qid, RankedList row);
  size_t n_qd() const { return n_qd_; }
  const std::vector<std::pair<uint64_t, RankedList>>& rows() const {
    return rows_;
  }
  const RankedList* row(uint64_t qid) const;

  // TREC run format `qid Q0 docid rank score tag` with 1-based ranks.
  void save_trec(const std::filesystem::path& path,
                 std::string_view tag) const;
  static RunTable load_trec(const std::filesystem::path& path);

 private:
  size_t n_qd_ = 0;
  std::vector<std::pair<uint64_t, RankedList>> rows_;
  std::unordered_map<uint64_t, size_t> pos_;
};

RunTable run_all_queries(const DocRetriever& retriever, const QueryLog& queries,
                         size_t n_qd, int threads);

// Inversion of a RunTable: for each retrieved document, the queries exposing
// it with their 0-based ranks. Documents never retrieved have no entry.
class GroundTruth {
 public:
  using Exposure = std::vector<std::pair<uint64_t, uint32_t>>;  // (qid, rank)

  static GroundTruth invert(const RunTable& run);

  size_t n_qd() const { return n_qd_; }
  // Ascending qid; nullptr when the document is never retrieved.
  const Exposure* exposing(uint64_t doc_id) const;
  std::optional<uint32_t> rank_of(uint64_t doc_id, uint64_t qid) const;
  const std::vector<std::pair<uint64_t, Exposure>>& docs() const {
    return docs_;
  }

  // TSV `docid\tqid\trank0based`.
  void save_tsv(const std::filesystem::path& path) const;
  static GroundTruth load_tsv(const std::filesystem::path& path,
                              size_t n_qd = 0);

 private:
  size_t n_qd_ = 0;
  std::vector<std::pair<uint64_t, Exposure>> docs_;  // ascending doc id
  std::unordered_map<uint64_t, size_t> pos_;
};

}  // namespace eqi
