#include <doctest.h>

#include <cmath>

#include "eqi/lexical.hpp"
#include "eqi/relq.hpp"
#include "test_util.hpp"

using namespace eqi;

TEST_CASE("build counts postings, lengths and avgdl") {
  ItemSet one = ItemSet::from_items({{4, "a a b"}}, Side::document);
  InvertedIndex index = InvertedIndex::build(one);
  CHECK(index.n_items() == 1);
  CHECK(index.length_at(0) == 3);
  CHECK(index.avgdl() == 3.0);
  CHECK(index.df("a") == 1);
  CHECK(index.df("b") == 1);
  CHECK(index.df("c") == 0);

  ItemSet two =
      ItemSet::from_items({{0, "x y"}, {1, "x y z w"}}, Side::document);
  CHECK(InvertedIndex::build(two).avgdl() == 3.0);

  CHECK_THROWS_AS(InvertedIndex::build(ItemSet()), SizeError);
}

TEST_CASE("bm25_term_score matches the hand-evaluated formula") {
  Bm25Params params{0.9, 0.4};
  double v = bm25_term_score(params, 1.0, 2, 10, 10.0);
  CHECK(v == doctest::Approx(3.8 / 2.9).epsilon(1e-9));

  // b = 0 removes length dependence.
  Bm25Params b0{1.2, 0.0};
  CHECK(bm25_term_score(b0, 2.0, 3, 10, 50.0) ==
        bm25_term_score(b0, 2.0, 3, 1000, 50.0));

  // tf -> infinity approaches idf * (k1 + 1).
  double limit = bm25_term_score(params, 1.0, 1e6, 10, 10.0);
  CHECK(std::abs(limit - 1.9) < 1e-3);
}

TEST_CASE("topk scores a toy corpus exactly like a hand oracle") {
  ItemSet items = ItemSet::from_items({{0, "cat dog"},
                                       {1, "cat cat fish"},
                                       {2, "dog dog dog bird"},
                                       {3, "fish"},
                                       {4, "bird cat dog fish moose"}},
                                      Side::document);
  InvertedIndex index = InvertedIndex::build(items);
  Bm25Params params{0.9, 0.4};
  // Probe terms deduplicated: "cat" counts once.
  RankedList got = index.topk({"cat", "cat", "dog"}, params, 10);

  double avgdl = index.avgdl();
  auto idf = [&](const char* t) { return index.idf(t); };
  auto term = [&](const char* t, double tf, double len) {
    return bm25_term_score(params, idf(t), tf, len, avgdl);
  };
  std::vector<std::pair<uint64_t, double>> expected = {
      {0, term("cat", 1, 2) + term("dog", 1, 2)},
      {1, term("cat", 2, 3)},
      {2, term("dog", 3, 4)},
      {4, term("cat", 1, 5) + term("dog", 1, 5)}};
  std::sort(expected.begin(), expected.end(), [](auto& a, auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  REQUIRE(got.size() == expected.size());  // doc 3 shares no term
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].id == expected[i].first);
    CHECK(got[i].score == expected[i].second);
  }

  CHECK(index.topk({"unseen"}, params, 5).empty());
  RankedList self = index.topk({"fish"}, params, 5);
  CHECK(!self.empty());
  CHECK(self[0].score > 0.0);
}

TEST_CASE("reversed retrieval ranks an identical query first") {
  // Query log where one query equals a document's text exactly.
  ItemSet queries = ItemSet::from_items({{0, "red fox jumps"},
                                         {1, "lazy brown dog"},
                                         {2, "quick red fox"}},
                                        Side::query);
  InvertedIndex qlog = InvertedIndex::build(queries);
  RankedList hits = qlog.topk(tokenize("lazy brown dog"), Bm25Params{}, 3);
  REQUIRE(!hits.empty());
  CHECK(hits[0].id == 1);
}

TEST_CASE("df and tf components survive adding an item") {
  std::vector<Item> base = {{0, "a b c"}, {1, "a a d"}};
  ItemSet small = ItemSet::from_items(base, Side::document);
  std::vector<Item> bigger = base;
  bigger.push_back({2, "a e"});
  ItemSet big = ItemSet::from_items(bigger, Side::document);
  InvertedIndex is = InvertedIndex::build(small);
  InvertedIndex ib = InvertedIndex::build(big);
  // tf/length inputs for existing items unchanged.
  CHECK(is.length_at(0) == ib.length_at(0));
  CHECK(is.length_at(1) == ib.length_at(1));
  // df and avgdl recomputed exactly.
  CHECK(ib.df("a") == 3);
  CHECK(is.df("a") == 2);
  CHECK(ib.avgdl() == doctest::Approx((3.0 + 3.0 + 2.0) / 3.0).epsilon(1e-15));
}

TEST_CASE("df totals equal an independent recount") {
  std::vector<Item> items;
  Rng rng(13);
  for (uint64_t i = 0; i < 500; ++i) {
    std::string text;
    size_t len = 2 + rng.bounded(6);
    for (size_t j = 0; j < len; ++j) {
      if (j) text += ' ';
      text += "t" + std::to_string(rng.bounded(40));
    }
    items.push_back({i, text});
  }
  ItemSet set = ItemSet::from_items(items, Side::query);
  InvertedIndex index = InvertedIndex::build(set);
  for (int t = 0; t < 40; ++t) {
    std::string term = "t" + std::to_string(t);
    size_t count = 0;
    for (const Item& item : set.items()) {
      auto toks = tokenize(item.text);
      if (std::find(toks.begin(), toks.end(), term) != toks.end()) ++count;
    }
    CHECK(index.df(term) == count);
  }
}

TEST_CASE("lexical index serialization round-trips") {
  auto dir = test_tmp_dir("lex_io");
  ItemSet items = ItemSet::from_items(
      {{0, "cat dog"}, {1, "cat cat fish"}, {2, "bird"}}, Side::query);
  InvertedIndex index = InvertedIndex::build(items);
  index.save(dir / "lex");
  InvertedIndex back = InvertedIndex::load(dir / "lex");
  CHECK(back.n_items() == index.n_items());
  CHECK(back.avgdl() == index.avgdl());
  CHECK(back.df("cat") == index.df("cat"));
  RankedList a = index.topk({"cat", "fish"}, Bm25Params{}, 3);
  RankedList b = back.topk({"cat", "fish"}, Bm25Params{}, 3);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].score == b[i].score);
  }
  back.save(dir / "lex2");
  CHECK(read_text_file(dir / "lex" / "postings.tsv") ==
        read_text_file(dir / "lex2" / "postings.tsv"));
}

TEST_CASE("tune_bm25 basics") {
  // Queries of identical length: b has no effect, so the tie rule picks the
  // smallest (k1, b).
  std::vector<Item> queries;
  for (uint64_t i = 0; i < 6; ++i)
    queries.push_back({i, "w" + std::to_string(i) + " w" +
                              std::to_string((i + 1) % 6)});
  ItemSet qlog = ItemSet::from_items(queries, Side::query);
  InvertedIndex qidx = InvertedIndex::build(qlog);

  // Hand-built ground truth: doc 100 exposed by queries 0 and 1.
  RunTable run(3);
  run.add_row(0, {{100, 2.0}, {101, 1.0}});
  run.add_row(1, {{100, 1.5}});
  run.add_row(2, {{102, 1.0}});
  GroundTruth gt = GroundTruth::invert(run);

  std::vector<Item> val_docs = {{100, "w0 w1 w2"}};
  RelqConfig cfg{UserModel::rbp(0.9), UserModel::rbp(0.5), 10,
                 ExhNdcgMode::consistent};

  std::vector<Bm25Params> one = {{1.2, 0.3}};
  Bm25Params got = tune_bm25(qidx, val_docs, gt, one, cfg, 1);
  CHECK(got.k1 == 1.2);
  CHECK(got.b == 0.3);

  std::vector<Bm25Params> grid;
  for (double k1 : {0.4, 0.9, 1.4})
    for (double b : {0.0, 0.5, 1.0}) grid.push_back({k1, b});
  Bm25Params tuned = tune_bm25(qidx, val_docs, gt, grid, cfg, 1);
  bool in_grid = false;
  for (const Bm25Params& p : grid)
    in_grid |= p.k1 == tuned.k1 && p.b == tuned.b;
  CHECK(in_grid);
  // Equal-length queries: every b ties, so the winner carries b = 0.
  CHECK(tuned.b == 0.0);

  std::vector<Item> hopeless = {{999, "zz yy"}};
  CHECK_THROWS_AS(tune_bm25(qidx, hopeless, gt, grid, cfg, 1), DataError);
  CHECK_THROWS_AS(tune_bm25(qidx, {}, gt, grid, cfg, 1), SizeError);
}
