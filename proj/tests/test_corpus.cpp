#include <doctest.h>

#include <set>

#include "eqi/corpus.hpp"
#include "test_util.hpp"

using namespace eqi;

TEST_CASE("load_tsv parses id-tab-text lines") {
  auto dir = test_tmp_dir("corpus_load");
  write_text_file(dir / "c.tsv", "0\thello world\n1\tfoo\n");
  Collection c = Collection::load_tsv(dir / "c.tsv", Side::document);
  CHECK(c.size() == 2);
  CHECK(c.by_id(0)->text == "hello world");
  CHECK(c.by_id(1)->text == "foo");
}

TEST_CASE("load_tsv rejects duplicates and malformed lines") {
  auto dir = test_tmp_dir("corpus_bad");
  write_text_file(dir / "dup.tsv", "0\ta\n0\tb\n");
  CHECK_THROWS_AS(Collection::load_tsv(dir / "dup.tsv", Side::document),
                  IntegrityError);
  write_text_file(dir / "notab.tsv", "0 a\n");
  CHECK_THROWS_AS(Collection::load_tsv(dir / "notab.tsv", Side::document),
                  ParseError);
  write_text_file(dir / "badid.tsv", "x\ta\n");
  CHECK_THROWS_AS(Collection::load_tsv(dir / "badid.tsv", Side::document),
                  ParseError);
  write_text_file(dir / "negid.tsv", "-1\ta\n");
  CHECK_THROWS_AS(Collection::load_tsv(dir / "negid.tsv", Side::document),
                  ParseError);
  write_text_file(dir / "blank.tsv", "0\t  \n");
  CHECK_THROWS_AS(Collection::load_tsv(dir / "blank.tsv", Side::document),
                  IntegrityError);
}

TEST_CASE("save/load round-trips the collection") {
  auto dir = test_tmp_dir("corpus_rt");
  std::vector<Item> items = {{5, "five five"}, {2, "two words here"},
                             {9, "tab\tinside"}};
  Collection c = Collection::from_items(items, Side::document);
  c.save_tsv(dir / "c.tsv");
  Collection back = Collection::load_tsv(dir / "c.tsv", Side::document);
  REQUIRE(back.size() == c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK(back.at(i).id == c.at(i).id);
    CHECK(back.at(i).text == c.at(i).text);
  }
  // Iteration is ascending by id.
  CHECK(c.at(0).id == 2);
  CHECK(c.at(2).id == 9);
}

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  CHECK(tokenize("What is BM25?") ==
        std::vector<std::string>{"what", "is", "bm25"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("state-of-the-art") ==
        std::vector<std::string>{"state", "of", "the", "art"});
  CHECK(tokenize("  !!  ") == std::vector<std::string>{});
}

TEST_CASE("tokenize is idempotent over its own joined output") {
  const char* texts[] = {"What is BM25?", "state-of-the-art", "a  b\tc",
                         "Mixed CASE 42 tokens!"};
  for (const char* text : texts) {
    auto once = tokenize(text);
    std::string joined;
    for (const auto& t : once) {
      if (!joined.empty()) joined += ' ';
      joined += t;
    }
    CHECK(tokenize(joined) == once);
  }
}

TEST_CASE("sample_subset basics") {
  std::vector<Item> items;
  for (uint64_t i = 0; i < 10; ++i)
    items.push_back({i, "text " + std::to_string(i)});
  QueryLog log = QueryLog::from_items(items, Side::query);

  QueryLog all = sample_subset(log, 10, 123);
  CHECK(all.size() == 10);
  for (size_t i = 0; i < 10; ++i) CHECK(all.at(i).id == i);

  QueryLog a = sample_subset(log, 3, 7);
  QueryLog b = sample_subset(log, 3, 7);
  REQUIRE(a.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(a.at(i).id == b.at(i).id);

  CHECK_THROWS_AS(sample_subset(log, 11, 1), SizeError);
}

TEST_CASE("sample_subset is a subset, sorted, and seed-sensitive") {
  std::vector<Item> items;
  for (uint64_t i = 0; i < 1000; ++i)
    items.push_back({i, "q" + std::to_string(i)});
  QueryLog log = QueryLog::from_items(items, Side::query);

  QueryLog s1 = sample_subset(log, 50, 1);
  QueryLog s2 = sample_subset(log, 50, 2);
  CHECK(s1.size() == 50);
  std::set<uint64_t> ids1, ids2;
  uint64_t prev = 0;
  for (size_t i = 0; i < 50; ++i) {
    uint64_t id = s1.at(i).id;
    CHECK(log.by_id(id) != nullptr);
    if (i) CHECK(id > prev);
    prev = id;
    ids1.insert(id);
    ids2.insert(s2.at(i).id);
  }
  CHECK(ids1 != ids2);  // overwhelming probability for distinct seeds
}
