#include "eqi/experiments.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

#include <json.hpp>

namespace eqi {

using nlohmann::json;

// ---------------------------------------------------------------------------
// spec

static json schedule_to_json(const TrainSchedule& t) {
  return {{"iterations", t.iterations},
          {"batches_per_iteration", t.batches_per_iteration},
          {"samples_per_batch", t.samples_per_batch},
          {"learning_rate", t.learning_rate},
          {"dropout", t.dropout},
          {"alpha", t.alpha}};
}

static TrainSchedule schedule_from_json(const json& j, TrainSchedule base) {
  base.iterations = j.value("iterations", base.iterations);
  base.batches_per_iteration =
      j.value("batches_per_iteration", base.batches_per_iteration);
  base.samples_per_batch = j.value("samples_per_batch", base.samples_per_batch);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.dropout = j.value("dropout", base.dropout);
  base.alpha = j.value("alpha", base.alpha);
  return base;
}

static json world_to_json(const WorldConfig& w) {
  return {{"n_docs", w.n_docs},
          {"n_queries", w.n_queries},
          {"vocab_size", w.vocab_size},
          {"n_topics", w.n_topics},
          {"doc_len_min", w.doc_len_min},
          {"doc_len_max", w.doc_len_max},
          {"query_len_min", w.query_len_min},
          {"query_len_max", w.query_len_max},
          {"doc_topic_focus", w.doc_topic_focus},
          {"query_topic_focus", w.query_topic_focus},
          {"zipf_exponent", w.zipf_exponent}};
}

static WorldConfig world_from_json(const json& j, WorldConfig base) {
  base.n_docs = j.value("n_docs", base.n_docs);
  base.n_queries = j.value("n_queries", base.n_queries);
  base.vocab_size = j.value("vocab_size", base.vocab_size);
  base.n_topics = j.value("n_topics", base.n_topics);
  base.doc_len_min = j.value("doc_len_min", base.doc_len_min);
  base.doc_len_max = j.value("doc_len_max", base.doc_len_max);
  base.query_len_min = j.value("query_len_min", base.query_len_min);
  base.query_len_max = j.value("query_len_max", base.query_len_max);
  base.doc_topic_focus = j.value("doc_topic_focus", base.doc_topic_focus);
  base.query_topic_focus = j.value("query_topic_focus", base.query_topic_focus);
  base.zipf_exponent = j.value("zipf_exponent", base.zipf_exponent);
  return base;
}

std::string ExperimentSpec::to_json_text() const {
  json j = {{"name", name},
            {"out_dir", out_dir.string()},
            {"seed", seed},
            {"threads", threads},
            {"world", world_to_json(world)},
            {"docs_path", docs_path.string()},
            {"queries_path", queries_path.string()},
            {"dim", dim},
            {"n_qd", n_qd},
            {"n_dq", n_dq},
            {"n_train_queries", n_train_queries},
            {"n_train_docs", n_train_docs},
            {"n_test_docs", n_test_docs},
            {"n_validation_docs", n_validation_docs},
            {"train", schedule_to_json(train)},
            {"bm25_grid", {{"k1", bm25_k1_grid}, {"b", bm25_b_grid}}},
            {"sweep",
             {{"query_sizes", sweep_query_sizes},
              {"doc_sizes", sweep_doc_sizes}}},
            {"growth",
             {{"initial_sizes", growth_initial_sizes},
              {"log_sizes", growth_log_sizes}}},
            {"heatmap_gammas", heatmap_gammas}};
  return j.dump(2) + "\n";
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentSpec spec = default_spec(j.value("name", std::string("overall")));
  spec.out_dir = j.value("out_dir", spec.out_dir.string());
  spec.seed = j.value("seed", spec.seed);
  spec.threads = j.value("threads", spec.threads);
  if (j.contains("world")) spec.world = world_from_json(j["world"], spec.world);
  spec.docs_path = j.value("docs_path", spec.docs_path.string());
  spec.queries_path = j.value("queries_path", spec.queries_path.string());
  spec.dim = j.value("dim", spec.dim);
  spec.n_qd = j.value("n_qd", spec.n_qd);
  spec.n_dq = j.value("n_dq", spec.n_dq);
  spec.n_train_queries = j.value("n_train_queries", spec.n_train_queries);
  spec.n_train_docs = j.value("n_train_docs", spec.n_train_docs);
  spec.n_test_docs = j.value("n_test_docs", spec.n_test_docs);
  spec.n_validation_docs =
      j.value("n_validation_docs", spec.n_validation_docs);
  if (j.contains("train"))
    spec.train = schedule_from_json(j["train"], spec.train);
  if (j.contains("bm25_grid")) {
    spec.bm25_k1_grid =
        j["bm25_grid"].value("k1", spec.bm25_k1_grid);
    spec.bm25_b_grid = j["bm25_grid"].value("b", spec.bm25_b_grid);
  }
  if (j.contains("sweep")) {
    spec.sweep_query_sizes =
        j["sweep"].value("query_sizes", spec.sweep_query_sizes);
    spec.sweep_doc_sizes = j["sweep"].value("doc_sizes", spec.sweep_doc_sizes);
  }
  if (j.contains("growth")) {
    spec.growth_initial_sizes =
        j["growth"].value("initial_sizes", spec.growth_initial_sizes);
    spec.growth_log_sizes =
        j["growth"].value("log_sizes", spec.growth_log_sizes);
  }
  spec.heatmap_gammas = j.value("heatmap_gammas", spec.heatmap_gammas);
  return spec;
}

ExperimentSpec ExperimentSpec::from_json_file(
    const std::filesystem::path& path) {
  return from_json_text(read_text_file(path));
}

ExperimentSpec default_spec(const std::string& name) {
  ExperimentSpec spec;
  spec.name = name;
  spec.world.n_docs = 5000;
  spec.world.n_queries = 2000;
  spec.world.vocab_size = 2000;
  spec.world.n_topics = 20;
  for (double k1 = 0.4; k1 <= 2.01; k1 += 0.2)
    spec.bm25_k1_grid.push_back((double)(float)k1);
  for (double b = 0.0; b <= 1.001; b += 0.1)
    spec.bm25_b_grid.push_back((double)(float)b);
  spec.sweep_query_sizes = {250, 1000};
  spec.sweep_doc_sizes = {300, 1000};
  spec.growth_initial_sizes = {500, 1000};
  spec.growth_log_sizes = {500, 1000, 1500, 2000};
  for (int g = 1; g <= 10; ++g) spec.heatmap_gammas.push_back(0.1 * g);
  return spec;
}

// ---------------------------------------------------------------------------
// shared pipeline

namespace {

// The headline config: document-side rbp 0.5, EQI-side rbp 0.9.
RelqConfig headline_config(size_t n_dq) {
  return RelqConfig{UserModel::rbp(0.9), UserModel::rbp(0.5), n_dq,
                    ExhNdcgMode::consistent};
}

struct PipelineOptions {
  bool bm25 = false;
  bool train_residual = true;
  bool train_append = false;
};

struct Pipeline {
  Collection docs;
  QueryLog queries;
  SurrogateEncoder enc;
  std::vector<std::vector<float>> doc_vecs;    // by collection position
  std::vector<std::vector<float>> query_vecs;  // by query-log position
  DenseIndex doc_index;
  RunTable run_dense{1};
  GroundTruth gt_dense;
  std::vector<uint64_t> test_docs;
  TrainSet train_set;
  EqiModel residual;
  TrainReport residual_report;
  EqiModel append;
  TrainReport append_report;
  PipelineOptions options;

  InvertedIndex doc_lex;
  RunTable run_bm25{1};
  GroundTruth gt_bm25;
  InvertedIndex qlog_lex;
  Bm25Params bm25_default{};
  Bm25Params bm25_tuned{};
  std::vector<uint64_t> validation_docs;
};

std::vector<std::vector<float>> encode_all(const SurrogateEncoder& enc,
                                           const ItemSet& items, int threads) {
  std::vector<std::vector<float>> vecs(items.size());
  parallel_chunks(items.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) vecs[i] = enc.encode(items.at(i).text);
  });
  return vecs;
}

TrainConfig make_train_config(const ExperimentSpec& spec, uint64_t seed) {
  TrainConfig config;
  config.iterations = spec.train.iterations;
  config.batches_per_iteration = spec.train.batches_per_iteration;
  config.samples_per_batch = spec.train.samples_per_batch;
  config.learning_rate = spec.train.learning_rate;
  config.dropout = spec.train.dropout;
  config.alpha = spec.train.alpha;
  config.seed = seed;
  return config;
}

// Base vectors the trainer needs: train docs plus every labeled query.
std::pair<VecMap, VecMap> training_vec_maps(const Pipeline& p) {
  VecMap doc_map, query_map;
  for (const TrainExample& ex : p.train_set.examples()) {
    doc_map.emplace(ex.doc_id, p.doc_vecs[*p.docs.position(ex.doc_id)]);
    for (const auto& [qid, rank] : ex.labels)
      query_map.emplace(qid, p.query_vecs[*p.queries.position(qid)]);
  }
  return {std::move(doc_map), std::move(query_map)};
}

Pipeline build_pipeline(const ExperimentSpec& spec, PipelineOptions options) {
  Pipeline p;
  p.options = options;
  if (!spec.docs_path.empty()) {
    p.docs = Collection::load_tsv(spec.docs_path, Side::document);
    p.queries = QueryLog::load_tsv(spec.queries_path, Side::query);
  } else {
    WorldConfig wc = spec.world;
    wc.seed = derive_seed(spec.seed, "synth");
    SyntheticWorld world = generate_world(wc);
    p.docs = std::move(world.docs);
    p.queries = std::move(world.queries);
  }
  p.enc = SurrogateEncoder::build(p.docs, spec.dim,
                                  derive_seed(spec.seed, "encoder"));
  p.doc_vecs = encode_all(p.enc, p.docs, spec.threads);
  p.query_vecs = encode_all(p.enc, p.queries, spec.threads);
  p.doc_index =
      DenseIndex::build(p.docs.all_ids(), p.doc_vecs, p.enc.fingerprint());
  DenseDocRetriever dense_retriever(p.enc, p.doc_index);
  p.run_dense = run_all_queries(dense_retriever, p.queries, spec.n_qd,
                                spec.threads);
  p.gt_dense = GroundTruth::invert(p.run_dense);

  std::vector<uint64_t> exposed;
  exposed.reserve(p.gt_dense.docs().size());
  for (const auto& [doc, entries] : p.gt_dense.docs()) exposed.push_back(doc);
  if (exposed.size() < spec.n_test_docs)
    throw SizeError("experiments: only " + std::to_string(exposed.size()) +
                    " docs have exposing queries; cannot draw " +
                    std::to_string(spec.n_test_docs) + " test docs");
  p.test_docs =
      sample_ids(exposed, spec.n_test_docs, derive_seed(spec.seed, "testdocs"));

  if (options.train_residual || options.train_append) {
    p.train_set = generate_train_set(
        p.queries, p.docs, dense_retriever, p.enc, spec.n_qd, spec.n_dq,
        spec.n_train_queries, spec.n_train_docs,
        derive_seed(spec.seed, "traingen"), spec.threads, p.test_docs);
    auto [doc_map, query_map] = training_vec_maps(p);
    if (options.train_residual) {
      auto [model, report] = train_transform(
          p.train_set, doc_map, query_map, TransformKind::residual,
          make_train_config(spec, derive_seed(spec.seed, "learner.residual")),
          p.enc.fingerprint());
      p.residual = std::move(model);
      p.residual_report = std::move(report);
    }
    if (options.train_append) {
      auto [model, report] = train_transform(
          p.train_set, doc_map, query_map, TransformKind::append,
          make_train_config(spec, derive_seed(spec.seed, "learner.append")),
          p.enc.fingerprint());
      p.append = std::move(model);
      p.append_report = std::move(report);
    }
  }

  if (options.bm25) {
    p.doc_lex = InvertedIndex::build(p.docs);
    LexicalDocRetriever lex_retriever(p.doc_lex, p.bm25_default);
    p.run_bm25 = run_all_queries(lex_retriever, p.queries, spec.n_qd,
                                 spec.threads);
    p.gt_bm25 = GroundTruth::invert(p.run_bm25);
    p.qlog_lex = InvertedIndex::build(p.queries);

    std::unordered_set<uint64_t> test_set(p.test_docs.begin(),
                                          p.test_docs.end());
    std::vector<uint64_t> val_eligible;
    for (const auto& [doc, entries] : p.gt_bm25.docs())
      if (!test_set.count(doc)) val_eligible.push_back(doc);
    if (val_eligible.size() < spec.n_validation_docs)
      throw SizeError("experiments: not enough validation docs");
    p.validation_docs = sample_ids(val_eligible, spec.n_validation_docs,
                                   derive_seed(spec.seed, "valdocs"));
    std::vector<Item> val_items;
    val_items.reserve(p.validation_docs.size());
    for (uint64_t id : p.validation_docs) val_items.push_back(*p.docs.by_id(id));
    std::vector<Bm25Params> grid;
    for (double k1 : spec.bm25_k1_grid)
      for (double b : spec.bm25_b_grid) grid.push_back(Bm25Params{k1, b});
    p.bm25_tuned = tune_bm25(p.qlog_lex, val_items, p.gt_bm25, grid,
                             headline_config(spec.n_dq), spec.threads);
  }
  return p;
}

// ---------------------------------------------------------------------------
// EQI retrieval per model

std::vector<ExposureList> dense_eqi_lists(
    const std::vector<uint64_t>& query_ids,
    const std::vector<std::vector<float>>& query_vecs,
    const std::vector<uint64_t>& doc_ids, const Collection& docs,
    const std::vector<std::vector<float>>& doc_vecs, const EqiModel* model,
    size_t n_dq, int threads) {
  std::vector<std::vector<float>> transformed(query_vecs.size());
  parallel_chunks(query_vecs.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      transformed[i] = model ? transform_apply_f32(model->hq, query_vecs[i])
                             : query_vecs[i];
  });
  DenseIndex eqi_index = DenseIndex::build(query_ids, transformed);
  std::vector<ExposureList> lists(doc_ids.size());
  parallel_chunks(doc_ids.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      const std::vector<float>& base = doc_vecs[*docs.position(doc_ids[i])];
      std::vector<float> probe =
          model ? transform_apply_f32(model->hd, base) : base;
      RankedList hits = eqi_index.topk(probe, n_dq);
      lists[i].doc_id = doc_ids[i];
      lists[i].queries.reserve(hits.size());
      for (const ScoredId& hit : hits) lists[i].queries.push_back(hit.id);
    }
  });
  return lists;
}

std::vector<ExposureList> lexical_eqi_lists(const InvertedIndex& qlog_index,
                                            const Collection& docs,
                                            const std::vector<uint64_t>& doc_ids,
                                            const Bm25Params& params,
                                            size_t n_dq, int threads) {
  std::vector<ExposureList> lists(doc_ids.size());
  parallel_chunks(doc_ids.size(), threads, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      RankedList hits =
          qlog_index.topk(tokenize(docs.by_id(doc_ids[i])->text), params, n_dq);
      lists[i].doc_id = doc_ids[i];
      for (const ScoredId& hit : hits) lists[i].queries.push_back(hit.id);
    }
  });
  return lists;
}

// Exposing queries ordered by (document rank asc, qid asc); n_dq = 0 keeps
// the whole exposure set.
std::vector<ExposureList> brute_force_lists(const GroundTruth& gt,
                                            const std::vector<uint64_t>& doc_ids,
                                            size_t n_dq) {
  std::vector<ExposureList> lists(doc_ids.size());
  for (size_t i = 0; i < doc_ids.size(); ++i) {
    lists[i].doc_id = doc_ids[i];
    const GroundTruth::Exposure* exp = gt.exposing(doc_ids[i]);
    if (!exp) continue;
    std::vector<std::pair<uint32_t, uint64_t>> order;
    order.reserve(exp->size());
    for (const auto& [qid, rank] : *exp) order.emplace_back(rank, qid);
    std::sort(order.begin(), order.end());
    size_t take = n_dq ? std::min(n_dq, order.size()) : order.size();
    for (size_t j = 0; j < take; ++j)
      lists[i].queries.push_back(order[j].second);
  }
  return lists;
}

// Brute force scores 1 by construction: per config its list is the ideal.
RelqReport brute_force_report(const GroundTruth& gt,
                              const std::vector<uint64_t>& doc_ids,
                              const std::vector<RelqConfig>& configs) {
  RelqReport report;
  for (const RelqConfig& config : configs) {
    std::vector<ExposureList> lists;
    lists.reserve(doc_ids.size());
    for (uint64_t doc : doc_ids)
      lists.push_back(ideal_list_for_config(gt, doc, config));
    RelqReport one = evaluate_mean_relq(lists, gt, {config});
    report.columns.push_back(std::move(one.columns[0]));
  }
  return report;
}

// ---------------------------------------------------------------------------
// output helpers

void write_manifest(const ExperimentSpec& spec,
                    const std::filesystem::path& dir, json extra) {
  extra["experiment"] = spec.name;
  json echo = json::parse(spec.to_json_text());
  // Thread count and output location do not affect results and must not
  // break byte-level rerun comparisons.
  echo.erase("threads");
  echo.erase("out_dir");
  extra["spec"] = echo;
  write_text_file(dir / "manifest.json", extra.dump(2) + "\n");
}

void write_model_reports(const std::filesystem::path& dir,
                         const std::vector<std::pair<std::string, RelqReport>>&
                             model_reports) {
  std::string summary = "model,config,mean,n_docs,n_excluded\n";
  for (const auto& [model, report] : model_reports) {
    for (const RelqColumn& col : report.columns) {
      summary += model;
      summary += ',';
      summary += col.config.label();
      summary += ',';
      summary += col.n_docs ? format_double(col.mean) : "NA";
      summary += ',';
      summary += std::to_string(col.n_docs);
      summary += ',';
      summary += std::to_string(col.n_excluded);
      summary += '\n';
    }
    for (const RelqColumn& col : report.columns) {
      std::string csv = "docid,relq\n";
      for (const auto& [doc, value] : col.per_doc) {
        csv += std::to_string(doc);
        csv += ',';
        csv += format_double(value);
        csv += '\n';
      }
      write_text_file(dir / model / (col.config.label() + ".csv"), csv);
    }
  }
  write_text_file(dir / "summary.csv", summary);
}

std::string table2_csv(const std::vector<std::pair<std::string, RelqReport>>&
                           model_reports) {
  std::string out = "model";
  if (!model_reports.empty())
    for (const RelqColumn& col : model_reports[0].second.columns)
      out += "," + col.config.label();
  out += '\n';
  for (const auto& [model, report] : model_reports) {
    out += model;
    for (const RelqColumn& col : report.columns) {
      out += ',';
      out += col.n_docs ? format_double(col.mean) : "NA";
    }
    out += '\n';
  }
  return out;
}

// Per-doc values of one config keyed by doc id.
std::map<uint64_t, double> column_by_doc(const RelqReport& report,
                                         const std::string& label) {
  for (const RelqColumn& col : report.columns)
    if (col.config.label() == label)
      return std::map<uint64_t, double>(col.per_doc.begin(),
                                        col.per_doc.end());
  throw DataError("experiments: config " + label + " missing from report");
}

}  // namespace

// ---------------------------------------------------------------------------
// overall evaluation

void run_overall_eval(const ExperimentSpec& spec) {
  PipelineOptions options;
  options.bm25 = true;
  options.train_residual = true;
  options.train_append = true;
  Pipeline p = build_pipeline(spec, options);
  std::filesystem::path dir = spec.out_dir / "overall";
  std::filesystem::create_directories(dir);

  std::vector<RelqConfig> configs = default_relq_configs(spec.n_dq);
  std::vector<uint64_t> qids = p.queries.all_ids();

  auto reverse_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs, p.docs,
                                       p.doc_vecs, nullptr, spec.n_dq,
                                       spec.threads);
  auto append_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs, p.docs,
                                      p.doc_vecs, &p.append, spec.n_dq,
                                      spec.threads);
  auto residual_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs,
                                        p.docs, p.doc_vecs, &p.residual,
                                        spec.n_dq, spec.threads);
  auto bm25_reverse_lists = lexical_eqi_lists(p.qlog_lex, p.docs, p.test_docs,
                                              p.bm25_default, spec.n_dq,
                                              spec.threads);
  auto bm25_tuned_lists = lexical_eqi_lists(p.qlog_lex, p.docs, p.test_docs,
                                            p.bm25_tuned, spec.n_dq,
                                            spec.threads);

  std::vector<std::pair<std::string, RelqReport>> dense_rows;
  dense_rows.emplace_back(
      "dense-reverse", evaluate_mean_relq(reverse_lists, p.gt_dense, configs));
  dense_rows.emplace_back(
      "dense-append", evaluate_mean_relq(append_lists, p.gt_dense, configs));
  dense_rows.emplace_back("dense-residual", evaluate_mean_relq(
                                                residual_lists, p.gt_dense,
                                                configs));
  dense_rows.emplace_back("brute-force-dense",
                          brute_force_report(p.gt_dense, p.test_docs, configs));

  std::vector<std::pair<std::string, RelqReport>> bm25_rows;
  bm25_rows.emplace_back("bm25-reverse", evaluate_mean_relq(bm25_reverse_lists,
                                                            p.gt_bm25,
                                                            configs));
  bm25_rows.emplace_back(
      "bm25-tuned", evaluate_mean_relq(bm25_tuned_lists, p.gt_bm25, configs));
  bm25_rows.emplace_back("brute-force-bm25",
                         brute_force_report(p.gt_bm25, p.test_docs, configs));

  std::vector<std::pair<std::string, RelqReport>> all_rows = bm25_rows;
  all_rows.insert(all_rows.end(), dense_rows.begin(), dense_rows.end());
  write_model_reports(dir, all_rows);
  write_text_file(dir / "table2_bm25.csv", table2_csv(bm25_rows));
  write_text_file(dir / "table2_dense.csv", table2_csv(dense_rows));

  // Significance on the headline config, dense side.
  std::string label = headline_config(spec.n_dq).label();
  auto reverse_vals = column_by_doc(dense_rows[0].second, label);
  auto append_vals = column_by_doc(dense_rows[1].second, label);
  auto residual_vals = column_by_doc(dense_rows[2].second, label);
  auto run_pair = [&](const std::map<uint64_t, double>& a,
                      const std::map<uint64_t, double>& b) {
    std::vector<double> va, vb;
    for (const auto& [doc, value] : a) {
      auto it = b.find(doc);
      if (it != b.end()) {
        va.push_back(value);
        vb.push_back(it->second);
      }
    }
    return paired_one_tailed_ttest(va, vb);
  };
  struct Comparison {
    std::string name;
    TTestResult result;
  };
  std::vector<Comparison> comparisons = {
      {"dense-residual>dense-reverse", run_pair(residual_vals, reverse_vals)},
      {"dense-append>dense-reverse", run_pair(append_vals, reverse_vals)},
      {"dense-residual>dense-append", run_pair(residual_vals, append_vals)}};
  std::string sig = "comparison,config,n,tie,direction,t,p,p_bonferroni\n";
  for (const Comparison& c : comparisons) {
    sig += c.name + "," + label + "," + std::to_string(c.result.n) + ",";
    if (c.result.tie) {
      sig += "1," + std::to_string(c.result.direction) + ",NA,NA,NA\n";
    } else {
      sig += "0,NA," + format_double(c.result.t) + "," +
             format_double(c.result.p) + "," +
             format_double(bonferroni(c.result.p, comparisons.size())) + "\n";
    }
  }
  write_text_file(dir / "significance.csv", sig);

  // Artifacts for reruns and byte-level determinism checks.
  std::filesystem::path art = dir / "artifacts";
  std::filesystem::create_directories(art);
  p.run_dense.save_trec(art / "run_dense.trec", "dense");
  p.run_bm25.save_trec(art / "run_bm25.trec", "bm25");
  p.gt_dense.save_tsv(art / "gt_dense.tsv");
  p.gt_bm25.save_tsv(art / "gt_bm25.tsv");
  p.train_set.save(art / "train.tsv");
  p.enc.save(art / "encoder");
  p.residual.save(art / "model-residual");
  p.append.save(art / "model-append");
  p.residual_report.save_csv(art / "residual_loss.csv");
  p.append_report.save_csv(art / "append_loss.csv");
  p.doc_index.save(art / "doc_vectors.vec");

  write_manifest(spec, dir,
                 {{"encoder_fingerprint", p.enc.fingerprint()},
                  {"bm25_tuned", {{"k1", p.bm25_tuned.k1},
                                  {"b", p.bm25_tuned.b}}},
                  {"n_test_docs", p.test_docs.size()},
                  {"train_candidates", p.train_set.provenance().candidate_count},
                  {"train_skipped", p.train_set.provenance().skipped_no_finite}});
}

// ---------------------------------------------------------------------------
// training-size sweep

void run_training_size_sweep(const ExperimentSpec& spec) {
  if (spec.sweep_query_sizes.empty() || spec.sweep_doc_sizes.empty())
    throw SizeError("experiments: empty sweep grid");
  PipelineOptions options;
  options.train_residual = false;
  Pipeline p = build_pipeline(spec, options);
  std::filesystem::path dir = spec.out_dir / "sweep";
  std::filesystem::create_directories(dir);

  RelqConfig config = headline_config(spec.n_dq);
  std::vector<uint64_t> qids = p.queries.all_ids();
  DenseDocRetriever dense_retriever(p.enc, p.doc_index);

  struct Cell {
    size_t nq, nd;
    double mean;
    size_t n_docs, n_excluded;
    std::vector<std::pair<uint64_t, double>> per_doc;
  };
  std::vector<Cell> cells;
  for (size_t nq : spec.sweep_query_sizes) {
    for (size_t nd : spec.sweep_doc_sizes) {
      ExperimentSpec cell_spec = spec;
      cell_spec.n_train_queries = nq;
      cell_spec.n_train_docs = nd;
      TrainSet ts = generate_train_set(
          p.queries, p.docs, dense_retriever, p.enc, spec.n_qd, spec.n_dq, nq,
          nd, derive_seed(spec.seed, "traingen"), spec.threads, p.test_docs);
      VecMap doc_map, query_map;
      for (const TrainExample& ex : ts.examples()) {
        doc_map.emplace(ex.doc_id, p.doc_vecs[*p.docs.position(ex.doc_id)]);
        for (const auto& [qid, rank] : ex.labels)
          query_map.emplace(qid, p.query_vecs[*p.queries.position(qid)]);
      }
      auto [model, report] = train_transform(
          ts, doc_map, query_map, TransformKind::residual,
          make_train_config(cell_spec,
                            derive_seed(spec.seed, "learner.residual")),
          p.enc.fingerprint());
      auto lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs, p.docs,
                                   p.doc_vecs, &model, spec.n_dq, spec.threads);
      RelqReport rep = evaluate_mean_relq(lists, p.gt_dense, {config});
      const RelqColumn& col = rep.columns[0];
      cells.push_back(Cell{nq, nd, col.mean, col.n_docs, col.n_excluded,
                           col.per_doc});
      std::string csv = "docid,relq\n";
      for (const auto& [doc, value] : col.per_doc)
        csv += std::to_string(doc) + "," + format_double(value) + "\n";
      write_text_file(dir / ("per_doc_q" + std::to_string(nq) + "_d" +
                             std::to_string(nd) + ".csv"),
                      csv);
    }
  }

  std::string matrix = "n_train_queries,n_train_docs,mean_relq,n_docs,n_excluded\n";
  for (const Cell& c : cells)
    matrix += std::to_string(c.nq) + "," + std::to_string(c.nd) + "," +
              format_double(c.mean) + "," + std::to_string(c.n_docs) + "," +
              std::to_string(c.n_excluded) + "\n";
  write_text_file(dir / "matrix.csv", matrix);

  // Adjacent-cell direction along each axis, with paired significance.
  auto cell_at = [&](size_t nq, size_t nd) -> const Cell& {
    for (const Cell& c : cells)
      if (c.nq == nq && c.nd == nd) return c;
    throw DataError("experiments: missing sweep cell");
  };
  const double margin = 0.02;
  size_t n_comparisons =
      (spec.sweep_query_sizes.size() - 1) * spec.sweep_doc_sizes.size() +
      spec.sweep_query_sizes.size() * (spec.sweep_doc_sizes.size() - 1);
  std::string mono =
      "axis,fixed,from,to,delta,within_margin,tie,t,p,p_bonferroni\n";
  auto emit = [&](const char* axis, size_t fixed, size_t from_sz, size_t to_sz,
                  const Cell& from, const Cell& to) {
    double delta = to.mean - from.mean;
    std::map<uint64_t, double> fv(from.per_doc.begin(), from.per_doc.end());
    std::vector<double> va, vb;
    for (const auto& [doc, value] : to.per_doc) {
      auto it = fv.find(doc);
      if (it != fv.end()) {
        va.push_back(value);
        vb.push_back(it->second);
      }
    }
    TTestResult tt = paired_one_tailed_ttest(va, vb);
    mono += std::string(axis) + "," + std::to_string(fixed) + "," +
            std::to_string(from_sz) + "," + std::to_string(to_sz) + "," +
            format_double(delta) + "," +
            (delta >= -margin ? "1" : "0") + ",";
    if (tt.tie)
      mono += "1,NA,NA,NA\n";
    else
      mono += "0," + format_double(tt.t) + "," + format_double(tt.p) + "," +
              format_double(bonferroni(tt.p, n_comparisons)) + "\n";
  };
  for (size_t qi = 0; qi + 1 < spec.sweep_query_sizes.size(); ++qi)
    for (size_t nd : spec.sweep_doc_sizes)
      emit("queries", nd, spec.sweep_query_sizes[qi],
           spec.sweep_query_sizes[qi + 1],
           cell_at(spec.sweep_query_sizes[qi], nd),
           cell_at(spec.sweep_query_sizes[qi + 1], nd));
  for (size_t nq : spec.sweep_query_sizes)
    for (size_t di = 0; di + 1 < spec.sweep_doc_sizes.size(); ++di)
      emit("docs", nq, spec.sweep_doc_sizes[di], spec.sweep_doc_sizes[di + 1],
           cell_at(nq, spec.sweep_doc_sizes[di]),
           cell_at(nq, spec.sweep_doc_sizes[di + 1]));
  write_text_file(dir / "monotonicity.csv", mono);

  write_manifest(spec, dir, {{"encoder_fingerprint", p.enc.fingerprint()}});
}

// ---------------------------------------------------------------------------
// query-collection growth simulation

void run_query_growth_sim(const ExperimentSpec& spec) {
  if (spec.growth_initial_sizes.empty() || spec.growth_log_sizes.empty())
    throw SizeError("experiments: empty growth plan");
  for (size_t s : spec.growth_log_sizes)
    if (s > spec.world.n_queries && spec.docs_path.empty())
      throw SizeError("experiments: growth step exceeds the query log");

  PipelineOptions options;
  options.train_residual = false;
  Pipeline p = build_pipeline(spec, options);
  std::filesystem::path dir = spec.out_dir / "growth";
  std::filesystem::create_directories(dir);
  RelqConfig config = headline_config(spec.n_dq);
  DenseDocRetriever dense_retriever(p.enc, p.doc_index);

  // One nested growth order serves every curve.
  std::vector<size_t> order(p.queries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(spec.seed, "growth.perm"));
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    size_t j = i + (size_t)rng.bounded(order.size() - i);
    std::swap(order[i], order[j]);
  }
  auto prefix_log = [&](size_t n) {
    std::vector<Item> items;
    items.reserve(n);
    for (size_t i = 0; i < n; ++i) items.push_back(p.queries.at(order[i]));
    return QueryLog::from_items(std::move(items), Side::query);
  };
  auto prefix_gt = [&](const QueryLog& sub) {
    RunTable run(spec.n_qd);
    for (const Item& q : sub.items()) run.add_row(q.id, *p.run_dense.row(q.id));
    return GroundTruth::invert(run);
  };

  // Test docs must be exposed under the smallest starting log so every
  // curve point evaluates the same doc set.
  size_t min_initial = *std::min_element(spec.growth_initial_sizes.begin(),
                                         spec.growth_initial_sizes.end());
  if (min_initial > p.queries.size())
    throw SizeError("experiments: initial growth size exceeds query log");
  QueryLog smallest = prefix_log(min_initial);
  GroundTruth gt_smallest = prefix_gt(smallest);
  std::vector<uint64_t> exposed;
  for (const auto& [doc, entries] : gt_smallest.docs()) exposed.push_back(doc);
  if (exposed.size() < spec.n_test_docs)
    throw SizeError("experiments: only " + std::to_string(exposed.size()) +
                    " docs exposed under the smallest starting log");
  std::vector<uint64_t> test_docs = sample_ids(
      exposed, spec.n_test_docs, derive_seed(spec.seed, "testdocs"));

  std::string curves = "initial_size,log_size,mean_relq,n_docs,n_excluded\n";
  for (size_t initial : spec.growth_initial_sizes) {
    QueryLog start_log = prefix_log(initial);
    // Training uses the whole starting collection as its query budget.
    TrainSet ts = generate_train_set(
        start_log, p.docs, dense_retriever, p.enc, spec.n_qd, spec.n_dq,
        initial, spec.n_train_docs, derive_seed(spec.seed, "traingen"),
        spec.threads, test_docs);
    VecMap doc_map, query_map;
    for (const TrainExample& ex : ts.examples()) {
      doc_map.emplace(ex.doc_id, p.doc_vecs[*p.docs.position(ex.doc_id)]);
      for (const auto& [qid, rank] : ex.labels)
        query_map.emplace(qid, p.query_vecs[*p.queries.position(qid)]);
    }
    auto [model, report] = train_transform(
        ts, doc_map, query_map, TransformKind::residual,
        make_train_config(spec, derive_seed(spec.seed, "learner.residual")),
        p.enc.fingerprint());

    std::vector<size_t> steps;
    steps.push_back(initial);
    for (size_t s : spec.growth_log_sizes)
      if (s > initial) steps.push_back(s);
    std::sort(steps.begin(), steps.end());
    for (size_t log_size : steps) {
      QueryLog sub = prefix_log(log_size);
      GroundTruth gt_sub = prefix_gt(sub);
      std::vector<std::vector<float>> sub_vecs(sub.size());
      for (size_t i = 0; i < sub.size(); ++i)
        sub_vecs[i] = p.query_vecs[*p.queries.position(sub.at(i).id)];
      auto lists = dense_eqi_lists(sub.all_ids(), sub_vecs, test_docs, p.docs,
                                   p.doc_vecs, &model, spec.n_dq,
                                   spec.threads);
      RelqReport rep = evaluate_mean_relq(lists, gt_sub, {config});
      const RelqColumn& col = rep.columns[0];
      curves += std::to_string(initial) + "," + std::to_string(log_size) +
                "," + (col.n_docs ? format_double(col.mean) : "NA") + "," +
                std::to_string(col.n_docs) + "," +
                std::to_string(col.n_excluded) + "\n";
    }
  }
  write_text_file(dir / "curves.csv", curves);
  write_manifest(spec, dir, {{"encoder_fingerprint", p.enc.fingerprint()}});
}

// ---------------------------------------------------------------------------
// query-characteristic analysis

namespace {

struct BucketSpec {
  std::string label;
  size_t lo, hi;  // inclusive range
};

const std::vector<BucketSpec>& length_buckets() {
  static const std::vector<BucketSpec> buckets = {
      {"1-3", 0, 3}, {"4-6", 4, 6}, {"7-9", 7, 9}, {"10+", 10, SIZE_MAX}};
  return buckets;
}

const std::vector<BucketSpec>& mindf_buckets() {
  static const std::vector<BucketSpec> buckets = {{"0", 0, 0},
                                                  {"1", 1, 1},
                                                  {"2-3", 2, 3},
                                                  {"4-7", 4, 7},
                                                  {"8-15", 8, 15},
                                                  {"16+", 16, SIZE_MAX}};
  return buckets;
}

size_t bucket_of(const std::vector<BucketSpec>& buckets, size_t value) {
  for (size_t i = 0; i < buckets.size(); ++i)
    if (value >= buckets[i].lo && value <= buckets[i].hi) return i;
  return buckets.size() - 1;
}

struct ModelSets {
  std::string name;
  std::unordered_set<uint64_t> in_list;
  std::unordered_set<uint64_t> top10;
  std::unordered_set<uint64_t> top100;
};

ModelSets collect_sets(const std::string& name,
                       const std::vector<ExposureList>& lists) {
  ModelSets sets;
  sets.name = name;
  for (const ExposureList& psi : lists) {
    for (size_t i = 0; i < psi.queries.size(); ++i) {
      sets.in_list.insert(psi.queries[i]);
      if (i < 10) sets.top10.insert(psi.queries[i]);
      if (i < 100) sets.top100.insert(psi.queries[i]);
    }
  }
  return sets;
}

std::string bucket_table(const std::vector<BucketSpec>& buckets,
                         const std::vector<size_t>& query_bucket,
                         const QueryLog& queries,
                         const std::unordered_set<uint64_t>& exposing,
                         const std::vector<ModelSets>& models) {
  std::string out = "bucket,n_queries,n_exposing,p_exposing";
  for (const ModelSets& m : models)
    out += ",n_inlist_" + m.name + ",p_inlist_" + m.name + ",p_top10_" +
           m.name + ",p_top100_" + m.name;
  out += '\n';
  for (size_t b = 0; b < buckets.size(); ++b) {
    size_t n = 0, n_exp = 0;
    std::vector<size_t> n_in(models.size(), 0), n_10(models.size(), 0),
        n_100(models.size(), 0);
    for (size_t qi = 0; qi < queries.size(); ++qi) {
      if (query_bucket[qi] != b) continue;
      ++n;
      uint64_t qid = queries.at(qi).id;
      if (exposing.count(qid)) ++n_exp;
      for (size_t m = 0; m < models.size(); ++m) {
        if (models[m].in_list.count(qid)) ++n_in[m];
        if (models[m].top10.count(qid)) ++n_10[m];
        if (models[m].top100.count(qid)) ++n_100[m];
      }
    }
    out += buckets[b].label + "," + std::to_string(n) + "," +
           std::to_string(n_exp) + ",";
    out += n ? format_double((double)n_exp / (double)n) : "NA";
    for (size_t m = 0; m < models.size(); ++m) {
      out += "," + std::to_string(n_in[m]) + ",";
      out += n ? format_double((double)n_in[m] / (double)n) : "NA";
      out += ",";
      out += n ? format_double((double)n_10[m] / (double)n) : "NA";
      out += ",";
      out += n ? format_double((double)n_100[m] / (double)n) : "NA";
    }
    out += '\n';
  }
  return out;
}

std::string ranksize_table(const GroundTruth& gt,
                           const std::vector<uint64_t>& test_docs,
                           const std::vector<std::pair<
                               std::string, const std::vector<ExposureList>*>>&
                               models) {
  std::vector<size_t> gt_counts;
  gt_counts.reserve(test_docs.size());
  for (uint64_t doc : test_docs) {
    const GroundTruth::Exposure* exp = gt.exposing(doc);
    gt_counts.push_back(exp ? exp->size() : 0);
  }
  std::sort(gt_counts.rbegin(), gt_counts.rend());
  std::vector<std::vector<size_t>> model_counts;
  for (const auto& [name, lists] : models) {
    std::vector<size_t> counts;
    counts.reserve(lists->size());
    for (const ExposureList& psi : *lists) {
      size_t hit = 0;
      for (uint64_t qid : psi.queries)
        if (gt.rank_of(psi.doc_id, qid)) ++hit;
      counts.push_back(hit);
    }
    std::sort(counts.rbegin(), counts.rend());
    model_counts.push_back(std::move(counts));
  }
  std::string out = "rank,ground_truth";
  for (const auto& [name, lists] : models) out += "," + name;
  out += '\n';
  for (size_t r = 0; r < gt_counts.size(); ++r) {
    out += std::to_string(r + 1) + "," + std::to_string(gt_counts[r]);
    for (const auto& counts : model_counts)
      out += "," + std::to_string(counts[r]);
    out += '\n';
  }
  return out;
}

}  // namespace

void run_query_characteristic_analysis(const ExperimentSpec& spec) {
  PipelineOptions options;
  options.bm25 = true;
  options.train_residual = true;
  Pipeline p = build_pipeline(spec, options);
  std::filesystem::path dir = spec.out_dir / "analysis";
  std::filesystem::create_directories(dir);

  std::vector<uint64_t> qids = p.queries.all_ids();
  auto reverse_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs, p.docs,
                                       p.doc_vecs, nullptr, spec.n_dq,
                                       spec.threads);
  auto residual_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs,
                                        p.docs, p.doc_vecs, &p.residual,
                                        spec.n_dq, spec.threads);
  auto bm25_lists = lexical_eqi_lists(p.qlog_lex, p.docs, p.test_docs,
                                      p.bm25_default, spec.n_dq, spec.threads);
  // Brute force keeps the full exposure set so its retrieval set is exactly
  // the exposing set.
  auto brute_dense = brute_force_lists(p.gt_dense, p.test_docs, 0);
  auto brute_bm25 = brute_force_lists(p.gt_bm25, p.test_docs, 0);

  auto exposing_set = [&](const GroundTruth& gt) {
    std::unordered_set<uint64_t> exposing;
    for (uint64_t doc : p.test_docs) {
      const GroundTruth::Exposure* exp = gt.exposing(doc);
      if (!exp) continue;
      for (const auto& [qid, rank] : *exp) exposing.insert(qid);
    }
    return exposing;
  };
  std::unordered_set<uint64_t> exposing_dense = exposing_set(p.gt_dense);
  std::unordered_set<uint64_t> exposing_bm25 = exposing_set(p.gt_bm25);

  std::vector<size_t> by_length(p.queries.size());
  std::vector<size_t> by_mindf(p.queries.size());
  for (size_t qi = 0; qi < p.queries.size(); ++qi) {
    std::vector<std::string> toks = tokenize(p.queries.at(qi).text);
    by_length[qi] = bucket_of(length_buckets(), toks.size());
    size_t min_df = SIZE_MAX;
    for (const std::string& t : toks)
      min_df = std::min(min_df, p.doc_lex.df(t));
    by_mindf[qi] = bucket_of(mindf_buckets(), min_df == SIZE_MAX ? 0 : min_df);
  }

  std::vector<ModelSets> dense_models = {
      collect_sets("brute-force", brute_dense),
      collect_sets("dense-reverse", reverse_lists),
      collect_sets("dense-residual", residual_lists)};
  std::vector<ModelSets> bm25_models = {collect_sets("brute-force", brute_bm25),
                                        collect_sets("bm25-reverse",
                                                     bm25_lists)};

  write_text_file(dir / "length_dense.csv",
                  bucket_table(length_buckets(), by_length, p.queries,
                               exposing_dense, dense_models));
  write_text_file(dir / "length_bm25.csv",
                  bucket_table(length_buckets(), by_length, p.queries,
                               exposing_bm25, bm25_models));
  write_text_file(dir / "mindf_dense.csv",
                  bucket_table(mindf_buckets(), by_mindf, p.queries,
                               exposing_dense, dense_models));
  write_text_file(dir / "mindf_bm25.csv",
                  bucket_table(mindf_buckets(), by_mindf, p.queries,
                               exposing_bm25, bm25_models));

  write_text_file(
      dir / "ranksize_dense.csv",
      ranksize_table(p.gt_dense, p.test_docs,
                     {{"brute-force", &brute_dense},
                      {"dense-reverse", &reverse_lists},
                      {"dense-residual", &residual_lists}}));
  write_text_file(dir / "ranksize_bm25.csv",
                  ranksize_table(p.gt_bm25, p.test_docs,
                                 {{"brute-force", &brute_bm25},
                                  {"bm25-reverse", &bm25_lists}}));

  write_manifest(spec, dir, {{"encoder_fingerprint", p.enc.fingerprint()}});
}

// ---------------------------------------------------------------------------
// gamma heatmap

void run_relq_heatmap(const ExperimentSpec& spec) {
  if (spec.heatmap_gammas.empty())
    throw SizeError("experiments: empty heatmap grid");
  for (double g : spec.heatmap_gammas)
    if (!(g > 0.0 && g <= 1.0))
      throw UsageError("experiments: heatmap gammas must be in (0, 1]");
  PipelineOptions options;
  options.train_residual = true;
  Pipeline p = build_pipeline(spec, options);
  std::filesystem::path dir = spec.out_dir / "heatmap";
  std::filesystem::create_directories(dir);

  std::vector<uint64_t> qids = p.queries.all_ids();
  auto reverse_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs, p.docs,
                                       p.doc_vecs, nullptr, spec.n_dq,
                                       spec.threads);
  auto residual_lists = dense_eqi_lists(qids, p.query_vecs, p.test_docs,
                                        p.docs, p.doc_vecs, &p.residual,
                                        spec.n_dq, spec.threads);

  std::vector<RelqConfig> configs;
  for (double g_dq : spec.heatmap_gammas)
    for (double g_qd : spec.heatmap_gammas)
      configs.push_back(RelqConfig{UserModel::rbp(g_dq), UserModel::rbp(g_qd),
                                   spec.n_dq, ExhNdcgMode::consistent});
  auto emit = [&](const std::string& name,
                  const std::vector<ExposureList>& lists) {
    RelqReport report = evaluate_mean_relq(lists, p.gt_dense, configs);
    std::string csv = "gamma_dq,gamma_qd,mean_relq,n_docs,n_excluded\n";
    size_t idx = 0;
    for (double g_dq : spec.heatmap_gammas)
      for (double g_qd : spec.heatmap_gammas) {
        const RelqColumn& col = report.columns[idx++];
        csv += format_double(g_dq) + "," + format_double(g_qd) + "," +
               (col.n_docs ? format_double(col.mean) : "NA") + "," +
               std::to_string(col.n_docs) + "," +
               std::to_string(col.n_excluded) + "\n";
      }
    write_text_file(dir / (name + ".csv"), csv);
  };
  emit("dense-reverse", reverse_lists);
  emit("dense-residual", residual_lists);
  write_manifest(spec, dir, {{"encoder_fingerprint", p.enc.fingerprint()}});
}

void run_experiment(const ExperimentSpec& spec) {
  if (spec.name == "overall")
    run_overall_eval(spec);
  else if (spec.name == "sweep")
    run_training_size_sweep(spec);
  else if (spec.name == "growth")
    run_query_growth_sim(spec);
  else if (spec.name == "analysis")
    run_query_characteristic_analysis(spec);
  else if (spec.name == "heatmap")
    run_relq_heatmap(spec);
  else
    throw UsageError("experiments: unknown experiment '" + spec.name + "'");
}

}  // namespace eqi
