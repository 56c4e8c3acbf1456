#include "eqi/cli.hpp"

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "eqi/experiments.hpp"

namespace eqi {

using nlohmann::json;

namespace {

// Every run states its resolved inputs (seeds included) before executing.
void print_resolved(const std::string& cmd, const json& flags) {
  json line = {{"cmd", cmd}, {"flags", flags}};
  std::cerr << "eqi: " << line.dump() << "\n";
}

Side parse_side(const std::string& s) {
  if (s == "document") return Side::document;
  if (s == "query") return Side::query;
  throw UsageError("cli: side must be 'document' or 'query'");
}

VecMap vec_map_from_index(const DenseIndex& index) {
  VecMap map;
  map.reserve(index.size());
  for (size_t i = 0; i < index.size(); ++i) {
    std::span<const float> row = index.row(i);
    map.emplace(index.ids()[i], std::vector<float>(row.begin(), row.end()));
  }
  return map;
}

SurrogateEncoder obtain_encoder(const std::string& encoder_dir,
                                const std::string& docs_path, uint32_t dim,
                                uint64_t seed) {
  if (!encoder_dir.empty()) return SurrogateEncoder::load(encoder_dir);
  if (docs_path.empty())
    throw UsageError("cli: need --encoder or --docs to build one");
  std::cerr << "eqi: building surrogate encoder from " << docs_path
            << " (dim " << dim << ", seed " << seed << ")\n";
  return SurrogateEncoder::build(Collection::load_tsv(docs_path, Side::document),
                                 dim, derive_seed(seed, "encoder"));
}

void save_lists_tsv(const std::vector<ExposureList>& lists,
                    const std::filesystem::path& path) {
  std::string out;
  for (const ExposureList& psi : lists)
    for (size_t r = 0; r < psi.queries.size(); ++r) {
      out += std::to_string(psi.doc_id);
      out += '\t';
      out += std::to_string(psi.queries[r]);
      out += '\t';
      out += std::to_string(r);
      out += '\n';
    }
  write_text_file(path, out);
}

std::vector<ExposureList> load_lists_tsv(const std::filesystem::path& path) {
  std::string raw = read_text_file(path);
  std::map<uint64_t, std::vector<std::pair<uint64_t, uint64_t>>> grouped;
  size_t line_no = 0;
  for (std::string_view line : split_lines(raw)) {
    ++line_no;
    std::string ctx = "cli: " + path.string() + ":" + std::to_string(line_no);
    auto fields = split_on(line, '\t');
    if (fields.size() != 3) throw ParseError(ctx + ": expected 3 fields");
    grouped[parse_u64(fields[0], ctx)].emplace_back(
        parse_u64(fields[2], ctx), parse_u64(fields[1], ctx));
  }
  std::vector<ExposureList> lists;
  for (auto& [doc, entries] : grouped) {
    std::sort(entries.begin(), entries.end());
    ExposureList psi{doc, {}};
    for (size_t r = 0; r < entries.size(); ++r) {
      if (entries[r].first != r)
        throw IntegrityError("cli: " + path.string() + ": doc " +
                             std::to_string(doc) +
                             " has non-contiguous list ranks");
      psi.queries.push_back(entries[r].second);
    }
    lists.push_back(std::move(psi));
  }
  return lists;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Exposing-query identification toolkit"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "parallelism cap (output-invariant)")
      ->capture_default_str();

  // --- synth-world ---
  auto* synth = app.add_subcommand("synth-world",
                                   "generate a synthetic corpus and query log");
  WorldConfig wc;
  uint64_t synth_seed = 1;
  std::string docs_out, queries_out;
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--n-docs", wc.n_docs)->capture_default_str();
  synth->add_option("--n-queries", wc.n_queries)->capture_default_str();
  synth->add_option("--vocab", wc.vocab_size)->capture_default_str();
  synth->add_option("--topics", wc.n_topics)->capture_default_str();
  synth->add_option("--doc-len-min", wc.doc_len_min)->capture_default_str();
  synth->add_option("--doc-len-max", wc.doc_len_max)->capture_default_str();
  synth->add_option("--query-len-min", wc.query_len_min)->capture_default_str();
  synth->add_option("--query-len-max", wc.query_len_max)->capture_default_str();
  synth->add_option("--doc-focus", wc.doc_topic_focus)->capture_default_str();
  synth->add_option("--query-focus", wc.query_topic_focus)
      ->capture_default_str();
  synth->add_option("--zipf", wc.zipf_exponent)->capture_default_str();
  synth->add_option("--docs-out", docs_out)->required();
  synth->add_option("--queries-out", queries_out)->required();

  // --- ingest ---
  auto* ingest = app.add_subcommand("ingest", "validate and canonicalize TSV");
  std::string ingest_in, ingest_out, ingest_side = "document";
  ingest->add_option("--in", ingest_in)->required();
  ingest->add_option("--side", ingest_side, "document|query")
      ->capture_default_str();
  ingest->add_option("--out", ingest_out)->required();

  // --- build-encoder ---
  auto* benc = app.add_subcommand("build-encoder",
                                  "build the surrogate dual encoder");
  std::string benc_docs, benc_out;
  uint32_t benc_dim = 128;
  uint64_t benc_seed = 1;
  benc->add_option("--docs", benc_docs)->required();
  benc->add_option("--dim", benc_dim)->capture_default_str();
  benc->add_option("--seed", benc_seed)->capture_default_str();
  benc->add_option("--out", benc_out)->required();

  // --- encode ---
  auto* enc_cmd = app.add_subcommand("encode", "encode one text to a vector");
  std::string enc_dir, enc_text;
  enc_cmd->add_option("--encoder", enc_dir)->required();
  enc_cmd->add_option("--text", enc_text)->required();

  // --- index-dense ---
  auto* idense = app.add_subcommand("index-dense",
                                    "encode an item file into a vector store");
  std::string idense_enc, idense_items, idense_out, idense_side = "document";
  idense->add_option("--encoder", idense_enc)->required();
  idense->add_option("--items", idense_items)->required();
  idense->add_option("--side", idense_side)->capture_default_str();
  idense->add_option("--out", idense_out)->required();

  // --- index-lexical ---
  auto* ilex = app.add_subcommand("index-lexical", "build a BM25 index");
  std::string ilex_items, ilex_out, ilex_side = "query";
  ilex->add_option("--items", ilex_items)->required();
  ilex->add_option("--side", ilex_side)->capture_default_str();
  ilex->add_option("--out", ilex_out)->required();

  // --- ground-truth ---
  auto* gtc = app.add_subcommand(
      "ground-truth", "run every query and invert into per-doc exposure");
  std::string gt_retriever = "dense", gt_docs, gt_queries, gt_encoder;
  std::string gt_out, gt_gt_out, gt_tag, gt_encoder_out;
  size_t gt_nqd = 100;
  uint32_t gt_dim = 128;
  uint64_t gt_seed = 1;
  double gt_k1 = 0.9, gt_b = 0.4;
  gtc->add_option("--retriever", gt_retriever, "dense|lexical")
      ->capture_default_str();
  gtc->add_option("--docs", gt_docs)->required();
  gtc->add_option("--queries", gt_queries)->required();
  gtc->add_option("--n-qd", gt_nqd)->capture_default_str();
  gtc->add_option("--encoder", gt_encoder, "encoder dir (dense retriever)");
  gtc->add_option("--encoder-out", gt_encoder_out,
                  "save the auto-built encoder here");
  gtc->add_option("--dim", gt_dim, "auto-built encoder dim")
      ->capture_default_str();
  gtc->add_option("--seed", gt_seed)->capture_default_str();
  gtc->add_option("--k1", gt_k1)->capture_default_str();
  gtc->add_option("--b", gt_b)->capture_default_str();
  gtc->add_option("--out", gt_out, "TREC run file")->required();
  gtc->add_option("--gt-out", gt_gt_out, "ground-truth TSV");
  gtc->add_option("--tag", gt_tag, "TREC run tag (defaults to retriever)");

  // --- gen-train ---
  auto* gen = app.add_subcommand("gen-train", "generate the training set");
  std::string gen_docs, gen_queries, gen_retriever = "dense", gen_encoder;
  std::string gen_out;
  size_t gen_nqd = 100, gen_ndq = 100, gen_ntq = 0, gen_ntd = 0;
  uint32_t gen_dim = 128;
  uint64_t gen_seed = 1;
  double gen_k1 = 0.9, gen_b = 0.4;
  gen->add_option("--docs", gen_docs)->required();
  gen->add_option("--queries", gen_queries)->required();
  gen->add_option("--retriever", gen_retriever, "dense|lexical")
      ->capture_default_str();
  gen->add_option("--encoder", gen_encoder);
  gen->add_option("--dim", gen_dim)->capture_default_str();
  gen->add_option("--n-qd", gen_nqd)->capture_default_str();
  gen->add_option("--n-dq", gen_ndq)->capture_default_str();
  gen->add_option("--n-train-queries", gen_ntq)->required();
  gen->add_option("--n-train-docs", gen_ntd)->required();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--k1", gen_k1)->capture_default_str();
  gen->add_option("--b", gen_b)->capture_default_str();
  gen->add_option("--out", gen_out)->required();

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "train an EQI transform");
  std::string tr_set, tr_doc_vecs, tr_query_vecs, tr_kind = "residual";
  std::string tr_out, tr_report;
  TrainConfig tr_config;
  tr_config.iterations = 50;
  tr_config.batches_per_iteration = 10;
  tr_config.samples_per_batch = 64;
  tr_config.learning_rate = 5e-3;
  bool tr_share = false;
  train_cmd->add_option("--train-set", tr_set)->required();
  train_cmd->add_option("--doc-vecs", tr_doc_vecs)->required();
  train_cmd->add_option("--query-vecs", tr_query_vecs)->required();
  train_cmd->add_option("--kind", tr_kind, "append|residual")
      ->capture_default_str();
  train_cmd->add_option("--iterations", tr_config.iterations)
      ->capture_default_str();
  train_cmd->add_option("--batches", tr_config.batches_per_iteration)
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tr_config.samples_per_batch)
      ->capture_default_str();
  train_cmd->add_option("--lr", tr_config.learning_rate)->capture_default_str();
  train_cmd->add_option("--dropout", tr_config.dropout)->capture_default_str();
  train_cmd->add_option("--alpha", tr_config.alpha)->capture_default_str();
  train_cmd->add_option("--seed", tr_config.seed)->capture_default_str();
  train_cmd->add_flag("--share-weights", tr_share);
  train_cmd->add_option("--out", tr_out)->required();
  train_cmd->add_option("--report", tr_report, "loss-curve CSV");

  // --- retrieve-eqi ---
  auto* ret = app.add_subcommand("retrieve-eqi",
                                 "rank exposing queries for documents");
  std::string ret_model, ret_docs, ret_queries, ret_encoder, ret_model_dir;
  std::string ret_run, ret_out, ret_doc_ids_file;
  size_t ret_ndq = 100;
  int64_t ret_doc_id = -1;
  double ret_k1 = 0.9, ret_b = 0.4;
  ret->add_option("--model", ret_model,
                  "bm25-reverse|bm25-tuned|dense-reverse|dense-append|"
                  "dense-residual|brute-force")
      ->required();
  ret->add_option("--n-dq", ret_ndq)->capture_default_str();
  ret->add_option("--doc-id", ret_doc_id, "single doc to stdout");
  ret->add_option("--doc-ids-file", ret_doc_ids_file,
                  "one doc id per line (doc-set mode)");
  ret->add_option("--docs", ret_docs);
  ret->add_option("--queries", ret_queries);
  ret->add_option("--encoder", ret_encoder);
  ret->add_option("--model-dir", ret_model_dir);
  ret->add_option("--run", ret_run, "TREC run file (brute-force)");
  ret->add_option("--k1", ret_k1)->capture_default_str();
  ret->add_option("--b", ret_b)->capture_default_str();
  ret->add_option("--out", ret_out, "lists TSV (doc-set mode)");

  // --- eval-relq ---
  auto* ev = app.add_subcommand("eval-relq", "score exposure lists");
  std::string ev_gt, ev_lists, ev_mu_dq = "rbp:0.9", ev_mu_qd = "rbp:0.5";
  std::string ev_out, ev_per_doc;
  size_t ev_ndq = 100;
  bool ev_literal = false;
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--lists", ev_lists)->required();
  ev->add_option("--mu-dq", ev_mu_dq, "EQI-side user model")
      ->capture_default_str();
  ev->add_option("--mu-qd", ev_mu_qd, "document-side user model")
      ->capture_default_str();
  ev->add_option("--n-dq", ev_ndq)->capture_default_str();
  ev->add_flag("--literal-exh-ndcg", ev_literal,
               "evaluate exh-ndcg exactly as printed");
  ev->add_option("--per-doc", ev_per_doc, "per-doc CSV");
  ev->add_option("--out", ev_out, "summary CSV (stdout when omitted)");

  // --- experiment ---
  auto* exp = app.add_subcommand("experiment", "run a full protocol");
  std::string exp_name, exp_spec, exp_out;
  uint64_t exp_seed = 0;
  bool exp_seed_set = false;
  exp->add_option("name", exp_name,
                  "overall|sweep|growth|analysis|heatmap")
      ->required();
  exp->add_option("--spec", exp_spec, "JSON spec (defaults when omitted)");
  exp->add_option("--out", exp_out, "output directory override");
  exp->add_option("--seed", exp_seed)->each([&](const std::string&) {
    exp_seed_set = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      wc.seed = synth_seed;
      print_resolved("synth-world",
                     {{"seed", synth_seed},
                      {"n_docs", wc.n_docs},
                      {"n_queries", wc.n_queries},
                      {"docs_out", docs_out},
                      {"queries_out", queries_out}});
      SyntheticWorld world = generate_world(wc);
      world.docs.save_tsv(docs_out);
      world.queries.save_tsv(queries_out);
    } else if (*ingest) {
      print_resolved("ingest", {{"in", ingest_in},
                                {"side", ingest_side},
                                {"out", ingest_out}});
      ItemSet::load_tsv(ingest_in, parse_side(ingest_side)).save_tsv(ingest_out);
    } else if (*benc) {
      print_resolved("build-encoder", {{"docs", benc_docs},
                                       {"dim", benc_dim},
                                       {"seed", benc_seed},
                                       {"out", benc_out}});
      SurrogateEncoder::build(Collection::load_tsv(benc_docs, Side::document),
                              benc_dim, derive_seed(benc_seed, "encoder"))
          .save(benc_out);
    } else if (*enc_cmd) {
      print_resolved("encode", {{"encoder", enc_dir}});
      SurrogateEncoder enc = SurrogateEncoder::load(enc_dir);
      std::vector<float> vec = enc.encode(enc_text);
      std::string line;
      for (size_t i = 0; i < vec.size(); ++i) {
        if (i) line += ' ';
        line += format_float(vec[i]);
      }
      std::cout << line << "\n";
    } else if (*idense) {
      print_resolved("index-dense", {{"encoder", idense_enc},
                                     {"items", idense_items},
                                     {"side", idense_side},
                                     {"out", idense_out}});
      SurrogateEncoder enc = SurrogateEncoder::load(idense_enc);
      ItemSet items = ItemSet::load_tsv(idense_items, parse_side(idense_side));
      std::vector<std::vector<float>> vecs(items.size());
      parallel_chunks(items.size(), threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) vecs[i] = enc.encode(items.at(i).text);
      });
      DenseIndex::build(items.all_ids(), vecs, enc.fingerprint())
          .save(idense_out);
    } else if (*ilex) {
      print_resolved("index-lexical", {{"items", ilex_items},
                                       {"side", ilex_side},
                                       {"out", ilex_out}});
      InvertedIndex::build(ItemSet::load_tsv(ilex_items, parse_side(ilex_side)))
          .save(ilex_out);
    } else if (*gtc) {
      print_resolved("ground-truth", {{"retriever", gt_retriever},
                                      {"docs", gt_docs},
                                      {"queries", gt_queries},
                                      {"n_qd", gt_nqd},
                                      {"seed", gt_seed},
                                      {"out", gt_out}});
      Collection docs = Collection::load_tsv(gt_docs, Side::document);
      QueryLog queries = QueryLog::load_tsv(gt_queries, Side::query);
      std::unique_ptr<DocRetriever> retriever;
      SurrogateEncoder enc;
      DenseIndex index;
      InvertedIndex lex;
      if (gt_retriever == "dense") {
        enc = obtain_encoder(gt_encoder, gt_docs, gt_dim, gt_seed);
        if (!gt_encoder_out.empty()) enc.save(gt_encoder_out);
        std::vector<std::vector<float>> vecs(docs.size());
        parallel_chunks(docs.size(), threads, [&](size_t lo, size_t hi) {
          for (size_t i = lo; i < hi; ++i) vecs[i] = enc.encode(docs.at(i).text);
        });
        index = DenseIndex::build(docs.all_ids(), vecs, enc.fingerprint());
        retriever = std::make_unique<DenseDocRetriever>(enc, index);
      } else if (gt_retriever == "lexical") {
        lex = InvertedIndex::build(docs);
        retriever =
            std::make_unique<LexicalDocRetriever>(lex, Bm25Params{gt_k1, gt_b});
      } else {
        throw UsageError("cli: --retriever must be dense or lexical");
      }
      RunTable run = run_all_queries(*retriever, queries, gt_nqd, threads);
      run.save_trec(gt_out, gt_tag.empty() ? retriever->name() : gt_tag);
      if (!gt_gt_out.empty()) GroundTruth::invert(run).save_tsv(gt_gt_out);
    } else if (*gen) {
      print_resolved("gen-train", {{"docs", gen_docs},
                                   {"queries", gen_queries},
                                   {"retriever", gen_retriever},
                                   {"n_qd", gen_nqd},
                                   {"n_dq", gen_ndq},
                                   {"n_train_queries", gen_ntq},
                                   {"n_train_docs", gen_ntd},
                                   {"seed", gen_seed},
                                   {"out", gen_out}});
      Collection docs = Collection::load_tsv(gen_docs, Side::document);
      QueryLog queries = QueryLog::load_tsv(gen_queries, Side::query);
      SurrogateEncoder enc =
          obtain_encoder(gen_encoder, gen_docs, gen_dim, gen_seed);
      std::unique_ptr<DocRetriever> retriever;
      DenseIndex index;
      InvertedIndex lex;
      if (gen_retriever == "dense") {
        std::vector<std::vector<float>> vecs(docs.size());
        parallel_chunks(docs.size(), threads, [&](size_t lo, size_t hi) {
          for (size_t i = lo; i < hi; ++i) vecs[i] = enc.encode(docs.at(i).text);
        });
        index = DenseIndex::build(docs.all_ids(), vecs, enc.fingerprint());
        retriever = std::make_unique<DenseDocRetriever>(enc, index);
      } else if (gen_retriever == "lexical") {
        lex = InvertedIndex::build(docs);
        retriever = std::make_unique<LexicalDocRetriever>(
            lex, Bm25Params{gen_k1, gen_b});
      } else {
        throw UsageError("cli: --retriever must be dense or lexical");
      }
      generate_train_set(queries, docs, *retriever, enc, gen_nqd, gen_ndq,
                         gen_ntq, gen_ntd, gen_seed, threads)
          .save(gen_out);
    } else if (*train_cmd) {
      print_resolved("train", {{"train_set", tr_set},
                               {"kind", tr_kind},
                               {"iterations", tr_config.iterations},
                               {"batches", tr_config.batches_per_iteration},
                               {"batch_size", tr_config.samples_per_batch},
                               {"lr", tr_config.learning_rate},
                               {"dropout", tr_config.dropout},
                               {"alpha", tr_config.alpha},
                               {"seed", tr_config.seed},
                               {"out", tr_out}});
      TrainSet ts = TrainSet::load(tr_set);
      DenseIndex doc_index = DenseIndex::load(tr_doc_vecs);
      DenseIndex query_index = DenseIndex::load(tr_query_vecs);
      tr_config.share_weights = tr_share;
      auto [model, report] = train_transform(
          ts, vec_map_from_index(doc_index), vec_map_from_index(query_index),
          transform_kind_from_string(tr_kind), tr_config,
          doc_index.fingerprint());
      model.save(tr_out);
      if (!tr_report.empty()) report.save_csv(tr_report);
      std::cerr << "eqi: trained " << tr_kind << " in "
                << format_double(report.wall_seconds) << "s\n";
    } else if (*ret) {
      print_resolved("retrieve-eqi", {{"model", ret_model},
                                      {"n_dq", ret_ndq},
                                      {"doc_id", ret_doc_id},
                                      {"out", ret_out}});
      bool single = ret_doc_id >= 0;
      if (!single && ret_out.empty())
        throw UsageError("cli: need --doc-id or --out");

      std::vector<ExposureList> lists;
      bool brute = ret_model == "brute-force";
      if (brute) {
        if (ret_run.empty())
          throw UsageError("cli: brute-force needs --run");
        GroundTruth gt = GroundTruth::invert(RunTable::load_trec(ret_run));
        std::vector<uint64_t> doc_ids;
        if (single) {
          doc_ids.push_back((uint64_t)ret_doc_id);
        } else if (!ret_doc_ids_file.empty()) {
          std::string id_text = read_text_file(ret_doc_ids_file);
          for (std::string_view line : split_lines(id_text))
            doc_ids.push_back(parse_u64(line, "cli: doc ids file"));
        } else {
          for (const auto& [doc, entries] : gt.docs()) doc_ids.push_back(doc);
        }
        for (uint64_t doc : doc_ids) {
          ExposureList psi{doc, {}};
          const GroundTruth::Exposure* exp = gt.exposing(doc);
          std::vector<std::pair<uint32_t, uint64_t>> order;
          if (exp)
            for (const auto& [qid, rank] : *exp) order.emplace_back(rank, qid);
          std::sort(order.begin(), order.end());
          size_t take = std::min(ret_ndq, order.size());
          for (size_t r = 0; r < take; ++r)
            psi.queries.push_back(order[r].second);
          lists.push_back(std::move(psi));
          if (single) {
            for (size_t r = 0; r < take; ++r)
              std::cout << r << '\t' << order[r].second << '\t' << order[r].first
                        << "\n";
          }
        }
      } else {
        if (ret_docs.empty() || ret_queries.empty())
          throw UsageError("cli: " + ret_model + " needs --docs and --queries");
        Collection docs = Collection::load_tsv(ret_docs, Side::document);
        QueryLog queries = QueryLog::load_tsv(ret_queries, Side::query);
        std::vector<uint64_t> doc_ids;
        if (single) {
          doc_ids.push_back((uint64_t)ret_doc_id);
        } else if (!ret_doc_ids_file.empty()) {
          std::string id_text = read_text_file(ret_doc_ids_file);
          for (std::string_view line : split_lines(id_text))
            doc_ids.push_back(parse_u64(line, "cli: doc ids file"));
        } else {
          doc_ids = docs.all_ids();
        }
        auto emit_single = [&](const RankedList& hits) {
          for (size_t r = 0; r < hits.size(); ++r)
            std::cout << r << '\t' << hits[r].id << '\t'
                      << format_double(hits[r].score) << "\n";
        };
        if (ret_model == "bm25-reverse" || ret_model == "bm25-tuned") {
          InvertedIndex qlog = InvertedIndex::build(queries);
          Bm25Params params{ret_k1, ret_b};
          for (uint64_t doc_id : doc_ids) {
            const Item* doc = docs.by_id(doc_id);
            if (!doc)
              throw DataError("cli: doc " + std::to_string(doc_id) +
                              " not in collection");
            RankedList hits = qlog.topk(tokenize(doc->text), params, ret_ndq);
            ExposureList psi{doc_id, {}};
            for (const ScoredId& hit : hits) psi.queries.push_back(hit.id);
            lists.push_back(std::move(psi));
            if (single) emit_single(hits);
          }
        } else if (ret_model == "dense-reverse" ||
                   ret_model == "dense-append" ||
                   ret_model == "dense-residual") {
          SurrogateEncoder enc = obtain_encoder(ret_encoder, ret_docs, 128, 1);
          EqiModel model;
          bool transformed = ret_model != "dense-reverse";
          if (transformed) {
            if (ret_model_dir.empty())
              throw UsageError("cli: " + ret_model + " needs --model-dir");
            model = EqiModel::load(ret_model_dir);
            if (!model.base_fingerprint.empty() &&
                model.base_fingerprint != enc.fingerprint())
              throw IntegrityError(
                  "cli: model was trained over a different encoder");
          }
          std::vector<std::vector<float>> qvecs(queries.size());
          parallel_chunks(queries.size(), threads, [&](size_t lo, size_t hi) {
            for (size_t i = lo; i < hi; ++i) {
              std::vector<float> base = enc.encode(queries.at(i).text);
              qvecs[i] = transformed ? transform_apply_f32(model.hq, base)
                                     : std::move(base);
            }
          });
          DenseIndex eqi_index = DenseIndex::build(queries.all_ids(), qvecs);
          for (uint64_t doc_id : doc_ids) {
            const Item* doc = docs.by_id(doc_id);
            if (!doc)
              throw DataError("cli: doc " + std::to_string(doc_id) +
                              " not in collection");
            std::vector<float> probe = enc.encode(doc->text);
            if (transformed) probe = transform_apply_f32(model.hd, probe);
            RankedList hits = eqi_index.topk(probe, ret_ndq);
            ExposureList psi{doc_id, {}};
            for (const ScoredId& hit : hits) psi.queries.push_back(hit.id);
            lists.push_back(std::move(psi));
            if (single) emit_single(hits);
          }
        } else {
          throw UsageError("cli: unknown model '" + ret_model + "'");
        }
      }
      if (!ret_out.empty()) save_lists_tsv(lists, ret_out);
    } else if (*ev) {
      print_resolved("eval-relq", {{"gt", ev_gt},
                                   {"lists", ev_lists},
                                   {"mu_dq", ev_mu_dq},
                                   {"mu_qd", ev_mu_qd},
                                   {"n_dq", ev_ndq}});
      GroundTruth gt = GroundTruth::load_tsv(ev_gt);
      std::vector<ExposureList> lists = load_lists_tsv(ev_lists);
      RelqConfig config{UserModel::parse(ev_mu_dq), UserModel::parse(ev_mu_qd),
                        ev_ndq,
                        ev_literal ? ExhNdcgMode::literal
                                   : ExhNdcgMode::consistent};
      RelqReport report = evaluate_mean_relq(lists, gt, {config});
      if (!ev_per_doc.empty()) report.save_per_doc_csv(ev_per_doc);
      if (!ev_out.empty())
        report.save_summary_csv(ev_out);
      else
        std::cout << report.summary_csv();
    } else if (*exp) {
      ExperimentSpec spec = exp_spec.empty()
                                ? default_spec(exp_name)
                                : ExperimentSpec::from_json_file(exp_spec);
      spec.name = exp_name;
      if (!exp_out.empty()) spec.out_dir = exp_out;
      if (exp_seed_set) spec.seed = exp_seed;
      spec.threads = threads;
      if (spec.out_dir.empty())
        throw UsageError("cli: experiment needs --out or a spec out_dir");
      print_resolved("experiment", json::parse(spec.to_json_text()));
      run_experiment(spec);
    }
  } catch (const UsageError& e) {
    std::cerr << "eqi: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "eqi: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "eqi: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace eqi
