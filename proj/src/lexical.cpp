#include "eqi/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <json.hpp>

#include "eqi/relq.hpp"

namespace eqi {

double bm25_term_score(const Bm25Params& params, double idf, double tf,
                       double len, double avgdl) {
  double norm = params.k1 * (1.0 - params.b + params.b * len / avgdl);
  return idf * tf * (params.k1 + 1.0) / (tf + norm);
}

InvertedIndex InvertedIndex::build(const ItemSet& items) {
  if (items.empty()) throw SizeError("lexical: cannot index an empty item set");
  InvertedIndex index;
  index.ids_.reserve(items.size());
  index.lengths_.reserve(items.size());
  uint64_t total_len = 0;
  std::unordered_map<std::string, uint32_t> tf;
  for (size_t pos = 0; pos < items.size(); ++pos) {
    const Item& item = items.at(pos);
    std::vector<std::string> tokens = tokenize(item.text);
    index.ids_.push_back(item.id);
    index.lengths_.push_back((uint32_t)tokens.size());
    total_len += tokens.size();
    tf.clear();
    for (std::string& tok : tokens) ++tf[std::move(tok)];
    for (auto& [term, count] : tf) {
      auto [it, inserted] =
          index.term_slot_.emplace(term, index.postings_.size());
      if (inserted) index.postings_.emplace_back();
      index.postings_[it->second].emplace_back((uint32_t)pos, count);
    }
  }
  index.avgdl_ = (double)total_len / (double)items.size();
  return index;
}

size_t InvertedIndex::df(std::string_view term) const {
  auto it = term_slot_.find(std::string(term));
  return it == term_slot_.end() ? 0 : postings_[it->second].size();
}

double InvertedIndex::idf(std::string_view term) const {
  double d = (double)df(term);
  double n = (double)n_items();
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

RankedList InvertedIndex::topk(const std::vector<std::string>& probe_tokens,
                               const Bm25Params& params, size_t k) const {
  std::vector<std::string_view> distinct;
  std::unordered_set<std::string_view> seen;
  for (const std::string& tok : probe_tokens)
    if (seen.insert(tok).second) distinct.push_back(tok);

  std::vector<double> scores(ids_.size(), 0.0);
  std::vector<uint8_t> touched(ids_.size(), 0);
  for (std::string_view term : distinct) {
    auto it = term_slot_.find(std::string(term));
    if (it == term_slot_.end()) continue;
    double term_idf = idf(term);
    for (const auto& [pos, tf] : postings_[it->second]) {
      scores[pos] +=
          bm25_term_score(params, term_idf, (double)tf, (double)lengths_[pos],
                          avgdl_);
      touched[pos] = 1;
    }
  }
  RankedList out;
  for (size_t pos = 0; pos < ids_.size(); ++pos)
    if (touched[pos]) out.push_back(ScoredId{ids_[pos], scores[pos]});
  sort_ranked(out);
  if (out.size() > k) out.resize(k);
  return out;
}

void InvertedIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json header = {{"format", "eqi-lexical-index"},
                           {"version", 1},
                           {"n_items", ids_.size()},
                           {"avgdl", avgdl_},
                           {"ids", ids_},
                           {"lengths", lengths_}};
  write_text_file(dir / "header.json", header.dump() + "\n");
  std::vector<std::pair<std::string_view, size_t>> terms;
  terms.reserve(term_slot_.size());
  for (const auto& [term, slot] : term_slot_) terms.emplace_back(term, slot);
  std::sort(terms.begin(), terms.end());
  std::string tsv;
  for (const auto& [term, slot] : terms) {
    tsv += term;
    tsv += '\t';
    bool first = true;
    for (const auto& [pos, tf] : postings_[slot]) {
      if (!first) tsv += ',';
      first = false;
      tsv += std::to_string(ids_[pos]);
      tsv += ':';
      tsv += std::to_string(tf);
    }
    tsv += '\n';
  }
  write_text_file(dir / "postings.tsv", tsv);
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& dir) {
  nlohmann::json header =
      nlohmann::json::parse(read_text_file(dir / "header.json"));
  if (header.value("format", "") != "eqi-lexical-index")
    throw ParseError("lexical: " + dir.string() + " is not a lexical index");
  InvertedIndex index;
  index.ids_ = header.at("ids").get<std::vector<uint64_t>>();
  index.lengths_ = header.at("lengths").get<std::vector<uint32_t>>();
  index.avgdl_ = header.at("avgdl").get<double>();
  if (index.ids_.size() != index.lengths_.size() ||
      index.ids_.size() != header.at("n_items").get<size_t>())
    throw IntegrityError("lexical: " + dir.string() + ": header size mismatch");
  std::unordered_map<uint64_t, uint32_t> pos_of;
  pos_of.reserve(index.ids_.size());
  for (size_t i = 0; i < index.ids_.size(); ++i)
    pos_of.emplace(index.ids_[i], (uint32_t)i);
  std::string tsv = read_text_file(dir / "postings.tsv");
  size_t line_no = 0;
  for (std::string_view line : split_lines(tsv)) {
    ++line_no;
    std::string where = "lexical: postings.tsv:" + std::to_string(line_no);
    size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(where + ": missing tab");
    std::string term(line.substr(0, tab));
    auto [it, inserted] = index.term_slot_.emplace(term, index.postings_.size());
    if (!inserted) throw IntegrityError(where + ": duplicate term");
    index.postings_.emplace_back();
    auto& plist = index.postings_[it->second];
    for (std::string_view entry : split_on(line.substr(tab + 1), ',')) {
      size_t colon = entry.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(where + ": bad posting '" + std::string(entry) + "'");
      uint64_t id = parse_u64(entry.substr(0, colon), where);
      uint64_t tf = parse_u64(entry.substr(colon + 1), where);
      auto pit = pos_of.find(id);
      if (pit == pos_of.end())
        throw IntegrityError(where + ": unknown item id " + std::to_string(id));
      plist.emplace_back(pit->second, (uint32_t)tf);
    }
  }
  return index;
}

Bm25Params tune_bm25(const InvertedIndex& query_index,
                     const std::vector<Item>& validation_docs,
                     const GroundTruth& gt, const std::vector<Bm25Params>& grid,
                     const RelqConfig& relq_config, int threads) {
  if (grid.empty()) throw SizeError("lexical: empty tuning grid");
  if (validation_docs.empty())
    throw SizeError("lexical: empty validation doc set");

  struct Cell {
    double mean = 0.0;
    size_t defined = 0;
  };
  std::vector<Cell> cells(grid.size());
  parallel_chunks(grid.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t g = lo; g < hi; ++g) {
      double sum = 0.0;
      size_t defined = 0;
      for (const Item& doc : validation_docs) {
        RankedList hits = query_index.topk(tokenize(doc.text), grid[g],
                                           relq_config.n_dq);
        ExposureList psi{doc.id, {}};
        psi.queries.reserve(hits.size());
        for (const ScoredId& hit : hits) psi.queries.push_back(hit.id);
        if (auto score = relq_score(psi, gt, relq_config)) {
          sum += *score;
          ++defined;
        }
      }
      cells[g] = Cell{defined ? sum / (double)defined : 0.0, defined};
    }
  });

  bool any_defined = false;
  for (const Cell& c : cells) any_defined |= c.defined > 0;
  if (!any_defined)
    throw DataError(
        "lexical: validation ground truth has no exposing queries for any "
        "validation doc");

  size_t best = 0;
  for (size_t g = 1; g < grid.size(); ++g) {
    if (cells[g].mean > cells[best].mean) {
      best = g;
    } else if (cells[g].mean == cells[best].mean) {
      if (grid[g].k1 < grid[best].k1 ||
          (grid[g].k1 == grid[best].k1 && grid[g].b < grid[best].b))
        best = g;
    }
  }
  return grid[best];
}

}  // namespace eqi
