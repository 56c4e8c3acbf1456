#include "eqi/dense_index.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include <json.hpp>

namespace eqi {

void sort_ranked(RankedList& list) {
  std::sort(list.begin(), list.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

float dot_f32(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

DenseIndex DenseIndex::build(std::vector<uint64_t> ids,
                             const std::vector<std::vector<float>>& vectors,
                             std::string fingerprint) {
  if (ids.empty() || ids.size() != vectors.size())
    throw SizeError("dense_index: need equal, non-zero id and vector counts");
  DenseIndex index;
  index.dim_ = (uint32_t)vectors[0].size();
  if (index.dim_ == 0) throw DimError("dense_index: zero-dimensional vectors");
  std::unordered_set<uint64_t> seen;
  seen.reserve(ids.size());
  for (uint64_t id : ids)
    if (!seen.insert(id).second)
      throw IntegrityError("dense_index: duplicate id " + std::to_string(id));
  index.data_.resize(ids.size() * index.dim_);
  for (size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != index.dim_)
      throw DimError("dense_index: vector " + std::to_string(i) + " has dim " +
                     std::to_string(vectors[i].size()) + ", expected " +
                     std::to_string(index.dim_));
    std::memcpy(index.data_.data() + i * index.dim_, vectors[i].data(),
                index.dim_ * sizeof(float));
  }
  index.ids_ = std::move(ids);
  index.fingerprint_ = std::move(fingerprint);
  return index;
}

RankedList DenseIndex::topk(std::span<const float> probe, size_t k) const {
  if (probe.size() != dim_)
    throw DimError("dense_index: probe dim " + std::to_string(probe.size()) +
                   " != index dim " + std::to_string(dim_));
  RankedList scored(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i)
    scored[i] = ScoredId{ids_[i], (double)dot_f32(row(i), probe)};
  size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + (ptrdiff_t)take,
                    scored.end(), [](const ScoredId& a, const ScoredId& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.id < b.id;
                    });
  scored.resize(take);
  return scored;
}

static void put_u32le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((char)(uint8_t)(v >> (8 * i)));
}
static void put_u64le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((char)(uint8_t)(v >> (8 * i)));
}
static uint64_t get_u64le(const char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= (uint64_t)(uint8_t)p[i] << (8 * i);
  return v;
}
static uint32_t get_u32le(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= (uint32_t)(uint8_t)p[i] << (8 * i);
  return v;
}

void DenseIndex::save(const std::filesystem::path& path) const {
  nlohmann::json header = {{"format", "eqi-dense-index"},
                           {"version", 1},
                           {"count", ids_.size()},
                           {"dim", dim_},
                           {"fingerprint", fingerprint_}};
  std::string out = header.dump();
  out += '\n';
  out.reserve(out.size() + ids_.size() * 8 + data_.size() * 4);
  for (uint64_t id : ids_) put_u64le(out, id);
  for (float f : data_) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32le(out, bits);
  }
  write_text_file(path, out);
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
  std::string raw = read_text_file(path);
  size_t nl = raw.find('\n');
  if (nl == std::string::npos)
    throw ParseError("dense_index: " + path.string() + ": missing header");
  nlohmann::json header = nlohmann::json::parse(raw.substr(0, nl));
  if (header.value("format", "") != "eqi-dense-index")
    throw ParseError("dense_index: " + path.string() + ": bad format");
  DenseIndex index;
  size_t count = header.at("count").get<size_t>();
  index.dim_ = header.at("dim").get<uint32_t>();
  index.fingerprint_ = header.value("fingerprint", "");
  size_t need = nl + 1 + count * 8 + count * (size_t)index.dim_ * 4;
  if (raw.size() != need)
    throw ParseError("dense_index: " + path.string() + ": truncated payload");
  const char* p = raw.data() + nl + 1;
  index.ids_.resize(count);
  for (size_t i = 0; i < count; ++i, p += 8) index.ids_[i] = get_u64le(p);
  index.data_.resize(count * index.dim_);
  for (size_t i = 0; i < index.data_.size(); ++i, p += 4) {
    uint32_t bits = get_u32le(p);
    std::memcpy(&index.data_[i], &bits, 4);
  }
  std::unordered_set<uint64_t> seen(index.ids_.begin(), index.ids_.end());
  if (seen.size() != index.ids_.size())
    throw IntegrityError("dense_index: " + path.string() + ": duplicate ids");
  return index;
}

}  // namespace eqi
