#include "eqi/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

#include <json.hpp>

namespace eqi {

static double robertson_idf(uint64_t n_docs, uint64_t df) {
  return std::log(1.0 + ((double)n_docs - (double)df + 0.5) / ((double)df + 0.5));
}

SurrogateEncoder SurrogateEncoder::build(const Collection& collection,
                                         uint32_t dim, uint64_t seed) {
  if (collection.empty()) throw DataError("encoder: empty collection");
  if (dim < 8) throw DimError("encoder: dim must be >= 8");
  SurrogateEncoder enc;
  enc.dim_ = dim;
  enc.seed_ = seed;
  enc.n_docs_ = collection.size();
  std::unordered_map<std::string, uint64_t> df;
  std::unordered_set<std::string> seen;
  for (const Item& item : collection.items()) {
    seen.clear();
    for (std::string& tok : tokenize(item.text))
      if (seen.insert(tok).second) ++df[tok];
  }
  enc.idf_.reserve(df.size());
  for (const auto& [term, count] : df)
    enc.idf_.emplace(term, robertson_idf(enc.n_docs_, count));
  enc.finalize();
  return enc;
}

void SurrogateEncoder::finalize() {
  default_idf_ = robertson_idf(n_docs_, 0);
  std::vector<const std::pair<const std::string, double>*> sorted;
  sorted.reserve(idf_.size());
  for (const auto& entry : idf_) sorted.push_back(&entry);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->first < b->first; });
  uint64_t h = keyed_hash64(kHashName, seed_);
  h = mix64(h ^ (uint64_t)dim_);
  h = mix64(h ^ n_docs_);
  for (auto* entry : sorted) {
    h = keyed_hash64(entry->first, h);
    h = mix64(h ^ std::bit_cast<uint64_t>(entry->second));
  }
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  fingerprint_ = buf;
}

double SurrogateEncoder::idf(std::string_view term) const {
  auto it = idf_.find(std::string(term));
  return it == idf_.end() ? default_idf_ : it->second;
}

std::vector<float> SurrogateEncoder::encode(std::string_view text) const {
  // Distinct tokens in first-appearance order so accumulation is a pure
  // function of the text.
  std::vector<std::string> order;
  std::unordered_map<std::string, uint64_t> counts;
  for (std::string& tok : tokenize(text)) {
    auto [it, inserted] = counts.emplace(std::move(tok), 0);
    if (inserted) order.push_back(it->first);
    ++it->second;
  }
  std::vector<double> acc(dim_, 0.0);
  for (const std::string& term : order) {
    double tf = (double)counts[term];
    double w = (1.0 + std::log(tf)) * idf(term);
    uint64_t h = keyed_hash64(term, seed_);
    uint32_t bucket = (uint32_t)(h % dim_);
    double sign = (h >> 63) ? -1.0 : 1.0;
    acc[bucket] += sign * w;
  }
  double norm_sq = 0.0;
  for (double v : acc) norm_sq += v * v;
  std::vector<float> out(dim_);
  if (norm_sq > 0.0) {
    double inv = 1.0 / std::sqrt(norm_sq);
    for (uint32_t i = 0; i < dim_; ++i) out[i] = (float)(acc[i] * inv);
  }
  return out;
}

void SurrogateEncoder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json header = {
      {"format", "eqi-encoder"}, {"version", 1},        {"dim", dim_},
      {"seed", seed_},           {"hash", kHashName},   {"n_docs", n_docs_},
  };
  write_text_file(dir / "encoder.json", header.dump(2) + "\n");
  std::vector<const std::pair<const std::string, double>*> sorted;
  sorted.reserve(idf_.size());
  for (const auto& entry : idf_) sorted.push_back(&entry);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->first < b->first; });
  std::string tsv;
  for (auto* entry : sorted) {
    tsv += entry->first;
    tsv += '\t';
    tsv += format_double(entry->second);
    tsv += '\n';
  }
  write_text_file(dir / "idf.tsv", tsv);
}

SurrogateEncoder SurrogateEncoder::load(const std::filesystem::path& dir) {
  nlohmann::json header =
      nlohmann::json::parse(read_text_file(dir / "encoder.json"));
  if (header.value("format", "") != "eqi-encoder")
    throw ParseError("encoder: " + dir.string() + " is not an encoder dir");
  if (header.value("hash", "") != kHashName)
    throw IntegrityError("encoder: unsupported hash '" +
                         header.value("hash", std::string()) + "'");
  SurrogateEncoder enc;
  enc.dim_ = header.at("dim").get<uint32_t>();
  enc.seed_ = header.at("seed").get<uint64_t>();
  enc.n_docs_ = header.at("n_docs").get<uint64_t>();
  std::string tsv = read_text_file(dir / "idf.tsv");
  size_t line_no = 0;
  for (std::string_view line : split_lines(tsv)) {
    ++line_no;
    size_t tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw ParseError("encoder: idf.tsv:" + std::to_string(line_no) +
                       ": missing tab");
    enc.idf_.emplace(std::string(line.substr(0, tab)),
                     parse_double(line.substr(tab + 1),
                                  "encoder: idf.tsv:" + std::to_string(line_no)));
  }
  enc.finalize();
  return enc;
}

}  // namespace eqi
