#pragma once

#include "eqi/oracle.hpp"

namespace eqi {

// One training document with its rank-labeled nearby queries. Labels are
// 0-based document-retrieval ranks, kInfRank when the query does not expose
// the document. Every example has at least one finite label.
struct TrainExample {
  uint64_t doc_id = 0;
  std::vector<std::pair<uint64_t, uint32_t>> labels;  // ascending qid
};

struct TrainProvenance {
  uint64_t seed = 0;
  size_t n_qd = 0;
  size_t n_dq = 0;
  size_t n_train_queries = 0;
  size_t n_train_docs = 0;
  size_t querylog_size = 0;
  size_t collection_size = 0;
  size_t candidate_count = 0;
  size_t skipped_no_finite = 0;
  std::string retriever;
  std::string encoder_fingerprint;
};

class TrainSet {
 public:
  TrainSet() = default;
  TrainSet(std::vector<TrainExample> examples, TrainProvenance prov);

  const std::vector<TrainExample>& examples() const { return examples_; }
  const TrainExample* by_doc(uint64_t doc_id) const;
  const TrainProvenance& provenance() const { return prov_; }
  size_t size() const { return examples_.size(); }

  // TSV `docid\tqid\trank` with literal `inf`, plus a provenance JSON
  // sidecar at `<path>.json`.
  void save(const std::filesystem::path& path) const;
  static TrainSet load(const std::filesystem::path& path);

 private:
  std::vector<TrainExample> examples_;  // ascending doc id
  std::unordered_map<uint64_t, size_t> pos_;
  TrainProvenance prov_;
};

// Training data generation: sample Q_train, retrieve and cache each sigma_q,
// pool the retrieved docs as candidates, sample training docs from the pool,
// and label each training doc's n_dq nearest queries (base embedding space)
// with the cached rank or infinity. Candidates whose nearest-query list has
// no exposing query are skipped so every example admits a positive; the skip
// count lands in provenance. `exclude_docs` removes ids from the candidate
// pool before sampling (used to hold out evaluation docs).
TrainSet generate_train_set(const QueryLog& queries, const Collection& docs,
                            const DocRetriever& retriever,
                            const SurrogateEncoder& encoder, size_t n_qd,
                            size_t n_dq, size_t n_train_queries,
                            size_t n_train_docs, uint64_t seed, int threads,
                            const std::vector<uint64_t>& exclude_docs = {});

struct SamplerConfig {
  double alpha = 0.5;  // probability of a Case 1 (both finite) instance
};

// Case 1: both queries expose the doc at different ranks. Case 2: the
// negative does not expose the doc at all. rank(q_pos) < rank(q_neg) always.
struct TrainInstance {
  uint64_t doc_id = 0;
  uint64_t q_pos = 0;
  uint64_t q_neg = 0;
  uint32_t rank_pos = 0;
  uint32_t rank_neg = 0;
  int which_case = 0;
};

class InstanceSampler {
 public:
  InstanceSampler(const TrainSet& train_set, SamplerConfig config);

  // Bernoulli(alpha) case draw, then a uniform example admitting that case
  // (rejection, at most 100 redraws), then a uniform valid pair inside it.
  TrainInstance sample(Rng& rng) const;

 private:
  struct Entry {
    uint64_t doc_id;
    std::vector<std::pair<uint32_t, uint64_t>> finite;  // (rank, qid) rank-asc
    std::vector<uint64_t> infinite;
    uint64_t case1_pairs;
  };
  std::vector<Entry> entries_;
  SamplerConfig config_;
  bool any_case1_ = false;
  bool any_case2_ = false;
};

}  // namespace eqi
