#pragma once

#include <span>

#include "eqi/common.hpp"

namespace eqi {

struct ScoredId {
  uint64_t id = 0;
  double score = 0.0;
};

// Scores non-increasing, ties broken by ascending id, no duplicate ids.
using RankedList = std::vector<ScoredId>;

void sort_ranked(RankedList& list);

// f32 accumulation in storage order; the reference arithmetic for every
// dense score in the toolkit.
float dot_f32(std::span<const float> a, std::span<const float> b);

// Exact flat inner-product index. Immutable after build.
class DenseIndex {
 public:
  static DenseIndex build(std::vector<uint64_t> ids,
                          const std::vector<std::vector<float>>& vectors,
                          std::string fingerprint = {});

  RankedList topk(std::span<const float> probe, size_t k) const;

  size_t size() const { return ids_.size(); }
  uint32_t dim() const { return dim_; }
  const std::vector<uint64_t>& ids() const { return ids_; }
  std::span<const float> row(size_t pos) const {
    return {data_.data() + pos * dim_, dim_};
  }
  const std::string& fingerprint() const { return fingerprint_; }

  // Header line (count, dim, fingerprint) + u64 ids + row-major f32, all
  // little-endian.
  void save(const std::filesystem::path& path) const;
  static DenseIndex load(const std::filesystem::path& path);

 private:
  uint32_t dim_ = 0;
  std::vector<uint64_t> ids_;
  std::vector<float> data_;
  std::string fingerprint_;
};

}  // namespace eqi
