#include "eqi/oracle.hpp"

#include <algorithm>
#include <map>

namespace eqi {

DenseDocRetriever::DenseDocRetriever(const SurrogateEncoder& encoder,
                                     const DenseIndex& index)
    : encoder_(&encoder), index_(&index) {
  if (encoder.dim() != index.dim())
    throw DimError("oracle: encoder dim " + std::to_string(encoder.dim()) +
                   " != index dim " + std::to_string(index.dim()));
  if (!index.fingerprint().empty() &&
      index.fingerprint() != encoder.fingerprint())
    throw IntegrityError(
        "oracle: dense index was built with a different encoder");
}

RankedList DenseDocRetriever::topk_for_text(std::string_view text,
                                            size_t k) const {
  return index_->topk(encoder_->encode(text), k);
}

RankedList LexicalDocRetriever::topk_for_text(std::string_view text,
                                              size_t k) const {
  return index_->topk(tokenize(text), params_, k);
}

void RunTable::add_row(uint64_t qid, RankedList row) {
  if (row.size() > n_qd_)
    throw SizeError("oracle: row for query " + std::to_string(qid) +
                    " exceeds n_qd " + std::to_string(n_qd_));
  if (!pos_.emplace(qid, rows_.size()).second)
    throw IntegrityError("oracle: duplicate run row for query " +
                         std::to_string(qid));
  rows_.emplace_back(qid, std::move(row));
  // Keep rows ascending by qid even if callers append out of order.
  if (rows_.size() > 1 && rows_[rows_.size() - 2].first > qid) {
    std::sort(rows_.begin(), rows_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 0; i < rows_.size(); ++i) pos_[rows_[i].first] = i;
  }
}

const RankedList* RunTable::row(uint64_t qid) const {
  auto it = pos_.find(qid);
  return it == pos_.end() ? nullptr : &rows_[it->second].second;
}

void RunTable::save_trec(const std::filesystem::path& path,
                         std::string_view tag) const {
  std::string out;
  for (const auto& [qid, row] : rows_) {
    for (size_t i = 0; i < row.size(); ++i) {
      out += std::to_string(qid);
      out += " Q0 ";
      out += std::to_string(row[i].id);
      out += ' ';
      out += std::to_string(i + 1);  // 1-based on disk per TREC convention
      out += ' ';
      out += format_double(row[i].score);
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  write_text_file(path, out);
}

RunTable RunTable::load_trec(const std::filesystem::path& path) {
  std::string raw = read_text_file(path);
  std::map<uint64_t, std::vector<std::pair<uint64_t, ScoredId>>> grouped;
  size_t line_no = 0;
  for (std::string_view line : split_lines(raw)) {
    ++line_no;
    std::string where = "oracle: " + path.string() + ":" +
                        std::to_string(line_no);
    std::vector<std::string_view> fields;
    for (std::string_view f : split_on(line, ' '))
      if (!f.empty()) fields.push_back(f);
    if (fields.size() != 6) throw ParseError(where + ": expected 6 fields");
    uint64_t qid = parse_u64(fields[0], where);
    uint64_t docid = parse_u64(fields[2], where);
    uint64_t rank1 = parse_u64(fields[3], where);
    double score = parse_double(fields[4], where);
    if (rank1 == 0) throw ParseError(where + ": TREC ranks start at 1");
    grouped[qid].emplace_back(rank1, ScoredId{docid, score});
  }
  size_t n_qd = 0;
  for (auto& [qid, entries] : grouped) n_qd = std::max(n_qd, entries.size());
  RunTable run(n_qd);
  for (auto& [qid, entries] : grouped) {
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    RankedList row;
    row.reserve(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].first != i + 1)
        throw IntegrityError("oracle: " + path.string() + ": query " +
                             std::to_string(qid) +
                             " has non-contiguous ranks");
      if (i > 0 && entries[i].second.score > entries[i - 1].second.score)
        throw IntegrityError("oracle: " + path.string() + ": query " +
                             std::to_string(qid) +
                             " has increasing scores down the ranking");
      row.push_back(entries[i].second);
    }
    run.add_row(qid, std::move(row));
  }
  return run;
}

RunTable run_all_queries(const DocRetriever& retriever, const QueryLog& queries,
                         size_t n_qd, int threads) {
  if (n_qd == 0) throw SizeError("oracle: n_qd must be >= 1");
  std::vector<RankedList> rows(queries.size());
  parallel_chunks(queries.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      rows[i] = retriever.topk_for_text(queries.at(i).text, n_qd);
  });
  RunTable run(n_qd);
  for (size_t i = 0; i < queries.size(); ++i)
    run.add_row(queries.at(i).id, std::move(rows[i]));
  return run;
}

GroundTruth GroundTruth::invert(const RunTable& run) {
  GroundTruth gt;
  gt.n_qd_ = run.n_qd();
  std::map<uint64_t, Exposure> exposure;
  for (const auto& [qid, row] : run.rows())
    for (size_t rank = 0; rank < row.size(); ++rank)
      exposure[row[rank].id].emplace_back(qid, (uint32_t)rank);
  gt.docs_.reserve(exposure.size());
  for (auto& [doc, entries] : exposure) {
    // Rows arrive ascending by qid, so each entry list is already sorted.
    gt.pos_.emplace(doc, gt.docs_.size());
    gt.docs_.emplace_back(doc, std::move(entries));
  }
  return gt;
}

const GroundTruth::Exposure* GroundTruth::exposing(uint64_t doc_id) const {
  auto it = pos_.find(doc_id);
  return it == pos_.end() ? nullptr : &docs_[it->second].second;
}

std::optional<uint32_t> GroundTruth::rank_of(uint64_t doc_id,
                                             uint64_t qid) const {
  const Exposure* exp = exposing(doc_id);
  if (!exp) return std::nullopt;
  auto it = std::lower_bound(
      exp->begin(), exp->end(), qid,
      [](const std::pair<uint64_t, uint32_t>& e, uint64_t q) {
        return e.first < q;
      });
  if (it == exp->end() || it->first != qid) return std::nullopt;
  return it->second;
}

void GroundTruth::save_tsv(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [doc, entries] : docs_) {
    for (const auto& [qid, rank] : entries) {
      out += std::to_string(doc);
      out += '\t';
      out += std::to_string(qid);
      out += '\t';
      out += std::to_string(rank);
      out += '\n';
    }
  }
  write_text_file(path, out);
}

GroundTruth GroundTruth::load_tsv(const std::filesystem::path& path,
                                  size_t n_qd) {
  std::string raw = read_text_file(path);
  std::map<uint64_t, Exposure> exposure;
  uint32_t max_rank = 0;
  size_t line_no = 0;
  for (std::string_view line : split_lines(raw)) {
    ++line_no;
    std::string where =
        "oracle: " + path.string() + ":" + std::to_string(line_no);
    auto fields = split_on(line, '\t');
    if (fields.size() != 3) throw ParseError(where + ": expected 3 fields");
    uint64_t doc = parse_u64(fields[0], where);
    uint64_t qid = parse_u64(fields[1], where);
    uint64_t rank = parse_u64(fields[2], where);
    exposure[doc].emplace_back(qid, (uint32_t)rank);
    max_rank = std::max<uint32_t>(max_rank, (uint32_t)rank);
  }
  GroundTruth gt;
  gt.n_qd_ = n_qd ? n_qd : (size_t)max_rank + 1;
  for (auto& [doc, entries] : exposure) {
    std::sort(entries.begin(), entries.end());
    for (size_t i = 0; i < entries.size(); ++i) {
      if (i > 0 && entries[i].first == entries[i - 1].first)
        throw IntegrityError("oracle: " + path.string() + ": duplicate (doc " +
                             std::to_string(doc) + ", query " +
                             std::to_string(entries[i].first) + ") pair");
      if (n_qd && entries[i].second >= gt.n_qd_)
        throw IntegrityError("oracle: " + path.string() + ": rank beyond n_qd");
    }
    gt.pos_.emplace(doc, gt.docs_.size());
    gt.docs_.emplace_back(doc, std::move(entries));
  }
  return gt;
}

}  // namespace eqi
