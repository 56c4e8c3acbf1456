#include <doctest.h>

#include <map>

#include "eqi/experiments.hpp"
#include "test_util.hpp"

using namespace eqi;

namespace {

ExperimentSpec small_spec(const std::string& name,
                          const std::filesystem::path& out) {
  ExperimentSpec spec = default_spec(name);
  spec.out_dir = out;
  spec.seed = 99;
  spec.world.n_docs = 400;
  spec.world.n_queries = 250;
  spec.world.vocab_size = 500;
  spec.world.n_topics = 8;
  spec.dim = 32;
  spec.n_qd = 10;
  spec.n_dq = 50;
  spec.n_train_queries = 120;
  spec.n_train_docs = 60;
  spec.n_test_docs = 60;
  spec.n_validation_docs = 30;
  spec.train.iterations = 5;
  spec.train.batches_per_iteration = 4;
  spec.train.samples_per_batch = 16;
  spec.train.learning_rate = 5e-3;
  spec.bm25_k1_grid = {0.9, 1.2};
  spec.bm25_b_grid = {0.0, 0.4};
  spec.sweep_query_sizes = {60, 120};
  spec.sweep_doc_sizes = {30, 60};
  spec.growth_initial_sizes = {120};
  spec.growth_log_sizes = {120, 180, 250};
  spec.heatmap_gammas = {0.5, 1.0};
  return spec;
}

std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::string text = read_text_file(path);
  for (std::string_view line : split_lines(text)) {
    std::vector<std::string> row;
    for (std::string_view field : split_on(line, ','))
      row.emplace_back(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

// summary.csv lookup: (model, config) -> mean.
std::map<std::pair<std::string, std::string>, std::string> summary_means(
    const std::filesystem::path& path) {
  std::map<std::pair<std::string, std::string>, std::string> means;
  auto rows = read_csv(path);
  for (size_t i = 1; i < rows.size(); ++i)
    means[{rows[i][0], rows[i][1]}] = rows[i][2];
  return means;
}

}  // namespace

TEST_CASE("synthetic world is deterministic and respects bounds") {
  WorldConfig wc;
  wc.seed = 4;
  wc.n_docs = 50;
  wc.n_queries = 30;
  wc.vocab_size = 200;
  wc.n_topics = 5;
  SyntheticWorld a = generate_world(wc);
  SyntheticWorld b = generate_world(wc);
  REQUIRE(a.docs.size() == 50);
  REQUIRE(a.queries.size() == 30);
  for (size_t i = 0; i < a.docs.size(); ++i)
    CHECK(a.docs.at(i).text == b.docs.at(i).text);
  for (size_t i = 0; i < a.queries.size(); ++i)
    CHECK(a.queries.at(i).text == b.queries.at(i).text);
  for (const Item& d : a.docs.items()) {
    size_t len = tokenize(d.text).size();
    CHECK(len >= wc.doc_len_min);
    CHECK(len <= wc.doc_len_max);
  }
  for (const Item& q : a.queries.items()) {
    size_t len = tokenize(q.text).size();
    CHECK(len >= wc.query_len_min);
    CHECK(len <= wc.query_len_max);
  }
  WorldConfig other = wc;
  other.seed = 5;
  SyntheticWorld c = generate_world(other);
  CHECK(c.docs.at(0).text != a.docs.at(0).text);
}

TEST_CASE("experiment spec round-trips through JSON") {
  ExperimentSpec spec = small_spec("overall", "/tmp/x");
  ExperimentSpec back = ExperimentSpec::from_json_text(spec.to_json_text());
  CHECK(back.seed == spec.seed);
  CHECK(back.world.n_docs == spec.world.n_docs);
  CHECK(back.n_dq == spec.n_dq);
  CHECK(back.train.learning_rate == spec.train.learning_rate);
  CHECK(back.sweep_query_sizes == spec.sweep_query_sizes);
  CHECK(back.heatmap_gammas == spec.heatmap_gammas);
  CHECK(back.bm25_k1_grid == spec.bm25_k1_grid);
}

TEST_CASE("overall eval: brute force scores 1, outputs are deterministic") {
  auto dir = test_tmp_dir("exp_overall");
  ExperimentSpec spec = small_spec("overall", dir / "run1");
  run_overall_eval(spec);

  auto means = summary_means(dir / "run1" / "overall" / "summary.csv");
  for (const char* config :
       {"rbp0.5-rbp0.5", "rbp0.9-rbp0.5", "rbp1-rbp1", "exh-ndcg"}) {
    CHECK(means.at({"brute-force-dense", config}) == "1");
    CHECK(means.at({"brute-force-bm25", config}) == "1");
  }
  // Every mean is within [0, 1].
  for (const auto& [key, value] : means) {
    if (value == "NA") continue;
    double v = parse_double(value, "test");
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-9);
  }

  ExperimentSpec again = spec;
  again.out_dir = dir / "run2";
  run_overall_eval(again);
  for (const char* rel :
       {"overall/table2_dense.csv", "overall/table2_bm25.csv",
        "overall/summary.csv", "overall/significance.csv",
        "overall/artifacts/train.tsv", "overall/artifacts/run_dense.trec"}) {
    CHECK(read_text_file(dir / "run1" / rel) ==
          read_text_file(dir / "run2" / rel));
  }
}

TEST_CASE("sweep single cell reproduces the overall residual value") {
  auto dir = test_tmp_dir("exp_sweep");
  ExperimentSpec spec = small_spec("overall", dir / "overall");
  run_overall_eval(spec);
  ExperimentSpec sweep = small_spec("sweep", dir / "sweep");
  sweep.sweep_query_sizes = {spec.n_train_queries};
  sweep.sweep_doc_sizes = {spec.n_train_docs};
  run_training_size_sweep(sweep);

  auto means = summary_means(dir / "overall" / "overall" / "summary.csv");
  std::string overall_mean = means.at({"dense-residual", "rbp0.9-rbp0.5"});
  auto matrix = read_csv(dir / "sweep" / "sweep" / "matrix.csv");
  REQUIRE(matrix.size() == 2);
  CHECK(matrix[1][2] == overall_mean);
}

TEST_CASE("growth at the full log equals the overall eval") {
  auto dir = test_tmp_dir("exp_growth");
  ExperimentSpec spec = small_spec("overall", dir / "overall");
  spec.n_train_queries = spec.world.n_queries;  // train on the whole log
  run_overall_eval(spec);
  ExperimentSpec growth = small_spec("growth", dir / "growth");
  growth.growth_initial_sizes = {spec.world.n_queries};
  growth.growth_log_sizes = {spec.world.n_queries};
  run_query_growth_sim(growth);

  auto means = summary_means(dir / "overall" / "overall" / "summary.csv");
  std::string overall_mean = means.at({"dense-residual", "rbp0.9-rbp0.5"});
  auto curves = read_csv(dir / "growth" / "growth" / "curves.csv");
  REQUIRE(curves.size() == 2);
  CHECK(curves[1][0] == std::to_string(spec.world.n_queries));
  CHECK(curves[1][2] == overall_mean);
}

TEST_CASE("heatmap cell (1,1) matches the overall rbp1-rbp1 column") {
  auto dir = test_tmp_dir("exp_heatmap");
  ExperimentSpec spec = small_spec("overall", dir / "overall");
  run_overall_eval(spec);
  ExperimentSpec heat = small_spec("heatmap", dir / "heat");
  run_relq_heatmap(heat);

  auto means = summary_means(dir / "overall" / "overall" / "summary.csv");
  for (const char* model : {"dense-reverse", "dense-residual"}) {
    auto rows = read_csv(dir / "heat" / "heatmap" / (std::string(model) + ".csv"));
    bool found = false;
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i][0] == "1" && rows[i][1] == "1") {
        CHECK(rows[i][2] == means.at({model, "rbp1-rbp1"}));
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("analysis: brute-force retrieval equals exposure in every bucket") {
  auto dir = test_tmp_dir("exp_analysis");
  ExperimentSpec spec = small_spec("analysis", dir / "run");
  run_query_characteristic_analysis(spec);
  for (const char* rel :
       {"analysis/length_dense.csv", "analysis/length_bm25.csv",
        "analysis/mindf_dense.csv", "analysis/mindf_bm25.csv"}) {
    auto rows = read_csv(dir / "run" / rel);
    REQUIRE(rows.size() >= 2);
    const auto& header = rows[0];
    size_t n_exp_col = SIZE_MAX, n_in_col = SIZE_MAX;
    for (size_t c = 0; c < header.size(); ++c) {
      if (header[c] == "n_exposing") n_exp_col = c;
      if (header[c] == "n_inlist_brute-force") n_in_col = c;
    }
    REQUIRE(n_exp_col != SIZE_MAX);
    REQUIRE(n_in_col != SIZE_MAX);
    for (size_t i = 1; i < rows.size(); ++i)
      CHECK(rows[i][n_exp_col] == rows[i][n_in_col]);
  }
  // Ground-truth rank-size series is non-increasing.
  auto rs = read_csv(dir / "run" / "analysis" / "ranksize_dense.csv");
  for (size_t i = 2; i < rs.size(); ++i)
    CHECK(parse_u64(rs[i][1], "t") <= parse_u64(rs[i - 1][1], "t"));
}
