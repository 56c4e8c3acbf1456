#include "eqi/corpus.hpp"

#include <algorithm>

namespace eqi {

const char* side_name(Side side) {
  return side == Side::document ? "document" : "query";
}

static bool blank_text(std::string_view text) {
  for (unsigned char c : text)
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n' && c != '\f' &&
        c != '\v')
      return false;
  return true;
}

ItemSet ItemSet::from_items(std::vector<Item> items, Side side) {
  ItemSet set;
  set.side_ = side;
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.id < b.id; });
  set.items_ = std::move(items);
  set.pos_.reserve(set.items_.size());
  for (size_t i = 0; i < set.items_.size(); ++i) {
    const Item& it = set.items_[i];
    if (blank_text(it.text))
      throw IntegrityError("corpus: " + std::string(side_name(side)) + " id " +
                           std::to_string(it.id) + " has empty text");
    if (!set.pos_.emplace(it.id, i).second)
      throw IntegrityError("corpus: duplicate " + std::string(side_name(side)) +
                           " id " + std::to_string(it.id));
  }
  return set;
}

ItemSet ItemSet::load_tsv(const std::filesystem::path& path, Side side) {
  std::string raw = read_text_file(path);
  std::vector<Item> items;
  size_t line_no = 0;
  for (std::string_view line : split_lines(raw)) {
    ++line_no;
    size_t tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw ParseError("corpus: " + path.string() + ":" +
                       std::to_string(line_no) + ": missing tab separator");
    uint64_t id = parse_u64(line.substr(0, tab),
                            "corpus: " + path.string() + ":" +
                                std::to_string(line_no));
    items.push_back(Item{id, std::string(line.substr(tab + 1))});
  }
  return from_items(std::move(items), side);
}

void ItemSet::save_tsv(const std::filesystem::path& path) const {
  std::string out;
  for (const Item& it : items_) {
    out += std::to_string(it.id);
    out += '\t';
    out += it.text;
    out += '\n';
  }
  write_text_file(path, out);
}

const Item* ItemSet::by_id(uint64_t id) const {
  auto it = pos_.find(id);
  return it == pos_.end() ? nullptr : &items_[it->second];
}

std::optional<size_t> ItemSet::position(uint64_t id) const {
  auto it = pos_.find(id);
  if (it == pos_.end()) return std::nullopt;
  return it->second;
}

std::vector<uint64_t> ItemSet::all_ids() const {
  std::vector<uint64_t> ids;
  ids.reserve(items_.size());
  for (const Item& it : items_) ids.push_back(it.id);
  return ids;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c >= 'A' && c <= 'Z') c = (unsigned char)(c - 'A' + 'a');
    bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (alnum) {
      cur.push_back((char)c);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

ItemSet sample_subset(const ItemSet& items, size_t n, uint64_t seed) {
  if (n > items.size())
    throw SizeError("corpus: sample of " + std::to_string(n) + " from " +
                    std::to_string(items.size()) + " items");
  std::vector<uint64_t> picked = sample_ids(items.all_ids(), n, seed);
  std::vector<Item> subset;
  subset.reserve(n);
  for (uint64_t id : picked) subset.push_back(*items.by_id(id));
  return ItemSet::from_items(std::move(subset), items.side());
}

}  // namespace eqi
