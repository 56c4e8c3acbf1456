#pragma once

#include <optional>
#include <unordered_map>

#include "eqi/common.hpp"

namespace eqi {

// One identified text item. Documents and queries share the shape; Side
// tags which role a set plays (and the error messages it produces).
struct Item {
  uint64_t id = 0;
  std::string text;
};

enum class Side { document, query };
const char* side_name(Side side);

// Immutable id-sorted set of items with O(1) id lookup.
class ItemSet {
 public:
  ItemSet() = default;

  // Sorts ascending by id; rejects duplicate ids and blank text.
  static ItemSet from_items(std::vector<Item> items, Side side);

  // TSV lines `<id>\t<text>`, UTF-8, LF endings.
  static ItemSet load_tsv(const std::filesystem::path& path, Side side);
  void save_tsv(const std::filesystem::path& path) const;

  size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Item& at(size_t pos) const { return items_[pos]; }
  const std::vector<Item>& items() const { return items_; }
  const Item* by_id(uint64_t id) const;
  std::optional<size_t> position(uint64_t id) const;
  std::vector<uint64_t> all_ids() const;
  Side side() const { return side_; }

 private:
  std::vector<Item> items_;
  std::unordered_map<uint64_t, size_t> pos_;
  Side side_ = Side::document;
};

using Collection = ItemSet;
using QueryLog = ItemSet;

// Lowercase ASCII letters, split on every non-ASCII-alphanumeric codepoint,
// drop empties. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

// Uniform sample without replacement, re-sorted ascending by id.
ItemSet sample_subset(const ItemSet& items, size_t n, uint64_t seed);

}  // namespace eqi
