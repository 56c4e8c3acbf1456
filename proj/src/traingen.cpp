#include "eqi/traingen.hpp"

#include <algorithm>
#include <unordered_set>

#include <json.hpp>

namespace eqi {

TrainSet::TrainSet(std::vector<TrainExample> examples, TrainProvenance prov)
    : examples_(std::move(examples)), prov_(std::move(prov)) {
  std::sort(examples_.begin(), examples_.end(),
            [](const TrainExample& a, const TrainExample& b) {
              return a.doc_id < b.doc_id;
            });
  for (size_t i = 0; i < examples_.size(); ++i) {
    TrainExample& ex = examples_[i];
    std::sort(ex.labels.begin(), ex.labels.end());
    bool finite = false;
    for (const auto& [qid, rank] : ex.labels) finite |= rank != kInfRank;
    if (!finite)
      throw IntegrityError("traingen: example for doc " +
                           std::to_string(ex.doc_id) +
                           " has no exposing query");
    if (!pos_.emplace(ex.doc_id, i).second)
      throw IntegrityError("traingen: duplicate training doc " +
                           std::to_string(ex.doc_id));
  }
}

const TrainExample* TrainSet::by_doc(uint64_t doc_id) const {
  auto it = pos_.find(doc_id);
  return it == pos_.end() ? nullptr : &examples_[it->second];
}

void TrainSet::save(const std::filesystem::path& path) const {
  std::string tsv;
  for (const TrainExample& ex : examples_) {
    for (const auto& [qid, rank] : ex.labels) {
      tsv += std::to_string(ex.doc_id);
      tsv += '\t';
      tsv += std::to_string(qid);
      tsv += '\t';
      tsv += rank == kInfRank ? "inf" : std::to_string(rank);
      tsv += '\n';
    }
  }
  write_text_file(path, tsv);
  nlohmann::json prov = {{"seed", prov_.seed},
                         {"n_qd", prov_.n_qd},
                         {"n_dq", prov_.n_dq},
                         {"n_train_queries", prov_.n_train_queries},
                         {"n_train_docs", prov_.n_train_docs},
                         {"querylog_size", prov_.querylog_size},
                         {"collection_size", prov_.collection_size},
                         {"candidate_count", prov_.candidate_count},
                         {"skipped_no_finite", prov_.skipped_no_finite},
                         {"retriever", prov_.retriever},
                         {"encoder_fingerprint", prov_.encoder_fingerprint}};
  write_text_file(path.string() + ".json", prov.dump(2) + "\n");
}

TrainSet TrainSet::load(const std::filesystem::path& path) {
  std::string raw = read_text_file(path);
  std::vector<TrainExample> examples;
  std::unordered_map<uint64_t, size_t> where;
  size_t line_no = 0;
  for (std::string_view line : split_lines(raw)) {
    ++line_no;
    std::string ctx =
        "traingen: " + path.string() + ":" + std::to_string(line_no);
    auto fields = split_on(line, '\t');
    if (fields.size() != 3) throw ParseError(ctx + ": expected 3 fields");
    uint64_t doc = parse_u64(fields[0], ctx);
    uint64_t qid = parse_u64(fields[1], ctx);
    uint32_t rank =
        fields[2] == "inf" ? kInfRank : (uint32_t)parse_u64(fields[2], ctx);
    auto [it, inserted] = where.emplace(doc, examples.size());
    if (inserted) examples.push_back(TrainExample{doc, {}});
    examples[it->second].labels.emplace_back(qid, rank);
  }
  TrainProvenance prov;
  std::filesystem::path prov_path = path.string() + ".json";
  if (std::filesystem::exists(prov_path)) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(prov_path));
    prov.seed = j.value("seed", 0ull);
    prov.n_qd = j.value("n_qd", (size_t)0);
    prov.n_dq = j.value("n_dq", (size_t)0);
    prov.n_train_queries = j.value("n_train_queries", (size_t)0);
    prov.n_train_docs = j.value("n_train_docs", (size_t)0);
    prov.querylog_size = j.value("querylog_size", (size_t)0);
    prov.collection_size = j.value("collection_size", (size_t)0);
    prov.candidate_count = j.value("candidate_count", (size_t)0);
    prov.skipped_no_finite = j.value("skipped_no_finite", (size_t)0);
    prov.retriever = j.value("retriever", std::string());
    prov.encoder_fingerprint = j.value("encoder_fingerprint", std::string());
  }
  return TrainSet(std::move(examples), std::move(prov));
}

TrainSet generate_train_set(const QueryLog& queries, const Collection& docs,
                            const DocRetriever& retriever,
                            const SurrogateEncoder& encoder, size_t n_qd,
                            size_t n_dq, size_t n_train_queries,
                            size_t n_train_docs, uint64_t seed, int threads,
                            const std::vector<uint64_t>& exclude_docs) {
  if (n_qd == 0 || n_dq == 0 || n_train_queries == 0 || n_train_docs == 0)
    throw SizeError("traingen: all sizes must be >= 1");
  if (n_train_queries > queries.size())
    throw SizeError("traingen: n_train_queries " +
                    std::to_string(n_train_queries) + " exceeds query log of " +
                    std::to_string(queries.size()));

  QueryLog q_train = sample_subset(queries, n_train_queries,
                                   derive_seed(seed, "traingen.queries"));

  // sigma_q cache for each training query.
  RunTable cache = run_all_queries(retriever, q_train, n_qd, threads);
  std::unordered_map<uint64_t, std::unordered_map<uint64_t, uint32_t>> ranks;
  ranks.reserve(q_train.size());
  std::unordered_set<uint64_t> candidate_set;
  for (const auto& [qid, row] : cache.rows()) {
    auto& by_doc = ranks[qid];
    by_doc.reserve(row.size());
    for (size_t r = 0; r < row.size(); ++r) {
      by_doc.emplace(row[r].id, (uint32_t)r);
      candidate_set.insert(row[r].id);
    }
  }
  for (uint64_t id : exclude_docs) candidate_set.erase(id);
  std::vector<uint64_t> candidates(candidate_set.begin(), candidate_set.end());
  std::sort(candidates.begin(), candidates.end());
  if (candidates.size() < n_train_docs)
    throw SizeError("traingen: candidate set of " +
                    std::to_string(candidates.size()) +
                    " docs is smaller than n_train_docs " +
                    std::to_string(n_train_docs));

  // Nearest-query search runs in the base embedding space.
  std::vector<std::vector<float>> q_vecs(q_train.size());
  parallel_chunks(q_train.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      q_vecs[i] = encoder.encode(q_train.at(i).text);
  });
  DenseIndex q_index = DenseIndex::build(q_train.all_ids(), q_vecs);

  Rng rng(derive_seed(seed, "traingen.docs"));
  for (size_t i = 0; i + 1 < candidates.size(); ++i) {
    size_t j = i + (size_t)rng.bounded(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }

  std::vector<TrainExample> examples;
  examples.reserve(n_train_docs);
  size_t skipped = 0;
  size_t cursor = 0;
  while (examples.size() < n_train_docs && cursor < candidates.size()) {
    size_t want = n_train_docs - examples.size();
    size_t take = std::min(want, candidates.size() - cursor);
    std::vector<TrainExample> block(take);
    std::vector<uint8_t> ok(take, 0);
    parallel_chunks(take, threads, [&](size_t lo, size_t hi) {
      for (size_t b = lo; b < hi; ++b) {
        uint64_t doc_id = candidates[cursor + b];
        const Item* doc = docs.by_id(doc_id);
        if (!doc)
          throw IntegrityError("traingen: retrieved doc " +
                               std::to_string(doc_id) +
                               " is not in the collection");
        RankedList psi = q_index.topk(encoder.encode(doc->text), n_dq);
        TrainExample ex{doc_id, {}};
        ex.labels.reserve(psi.size());
        bool finite = false;
        for (const ScoredId& hit : psi) {
          uint32_t rank = kInfRank;
          auto qit = ranks.find(hit.id);
          if (qit != ranks.end()) {
            auto dit = qit->second.find(doc_id);
            if (dit != qit->second.end()) rank = dit->second;
          }
          finite |= rank != kInfRank;
          ex.labels.emplace_back(hit.id, rank);
        }
        block[b] = std::move(ex);
        ok[b] = finite ? 1 : 0;
      }
    });
    for (size_t b = 0; b < take && examples.size() < n_train_docs; ++b) {
      if (ok[b])
        examples.push_back(std::move(block[b]));
      else
        ++skipped;
    }
    cursor += take;
  }
  if (examples.size() < n_train_docs)
    throw SizeError("traingen: only " + std::to_string(examples.size()) +
                    " of " + std::to_string(n_train_docs) +
                    " candidate docs have an exposing query among their " +
                    std::to_string(n_dq) + " nearest training queries");

  TrainProvenance prov;
  prov.seed = seed;
  prov.n_qd = n_qd;
  prov.n_dq = n_dq;
  prov.n_train_queries = n_train_queries;
  prov.n_train_docs = n_train_docs;
  prov.querylog_size = queries.size();
  prov.collection_size = docs.size();
  prov.candidate_count = candidates.size();
  prov.skipped_no_finite = skipped;
  prov.retriever = retriever.name();
  prov.encoder_fingerprint = encoder.fingerprint();
  return TrainSet(std::move(examples), std::move(prov));
}

InstanceSampler::InstanceSampler(const TrainSet& train_set,
                                 SamplerConfig config)
    : config_(config) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
    throw UsageError("traingen: alpha must be in [0, 1]");
  entries_.reserve(train_set.size());
  for (const TrainExample& ex : train_set.examples()) {
    Entry e;
    e.doc_id = ex.doc_id;
    for (const auto& [qid, rank] : ex.labels) {
      if (rank == kInfRank)
        e.infinite.push_back(qid);
      else
        e.finite.emplace_back(rank, qid);
    }
    std::sort(e.finite.begin(), e.finite.end());
    // Valid Case 1 pairs require strictly different ranks.
    e.case1_pairs = 0;
    for (size_t i = 0; i < e.finite.size(); ++i) {
      size_t j = i;
      while (j < e.finite.size() && e.finite[j].first == e.finite[i].first) ++j;
      e.case1_pairs += (uint64_t)(e.finite.size() - j);
      i = j - 1;
    }
    any_case1_ |= e.case1_pairs > 0;
    any_case2_ |= !e.finite.empty() && !e.infinite.empty();
    entries_.push_back(std::move(e));
  }
  if (entries_.empty())
    throw SizeError("traingen: sampler needs a non-empty train set");
}

TrainInstance InstanceSampler::sample(Rng& rng) const {
  int which_case = rng.next_double() < config_.alpha ? 1 : 2;
  if ((which_case == 1 && !any_case1_) || (which_case == 2 && !any_case2_))
    throw DataError("traingen: no example admits a case " +
                    std::to_string(which_case) + " instance");
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Entry& e = entries_[rng.bounded(entries_.size())];
    if (which_case == 1) {
      if (e.case1_pairs == 0) continue;
      // Uniform over ordered pairs with rank(pos) < rank(neg): pick the
      // pair index directly, then locate the positive by prefix counts.
      uint64_t pick = rng.bounded(e.case1_pairs);
      size_t i = 0;
      while (true) {
        size_t j = i;
        while (j < e.finite.size() && e.finite[j].first == e.finite[i].first)
          ++j;
        uint64_t group = (uint64_t)(j - i) * (uint64_t)(e.finite.size() - j);
        if (pick < group) {
          size_t pos_idx = i + (size_t)(pick / (e.finite.size() - j));
          size_t neg_idx = j + (size_t)(pick % (e.finite.size() - j));
          return TrainInstance{e.doc_id,
                               e.finite[pos_idx].second,
                               e.finite[neg_idx].second,
                               e.finite[pos_idx].first,
                               e.finite[neg_idx].first,
                               1};
        }
        pick -= group;
        i = j;
      }
    } else {
      if (e.finite.empty() || e.infinite.empty()) continue;
      const auto& pos = e.finite[rng.bounded(e.finite.size())];
      uint64_t neg = e.infinite[rng.bounded(e.infinite.size())];
      return TrainInstance{e.doc_id, pos.second, neg, pos.first, kInfRank, 2};
    }
  }
  throw DataError("traingen: failed to draw a case " +
                  std::to_string(which_case) + " instance in 100 attempts");
}

}  // namespace eqi
