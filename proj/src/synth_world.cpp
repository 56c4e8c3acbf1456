#include "eqi/synth_world.hpp"

#include <algorithm>
#include <cmath>

namespace eqi {

namespace {

// Inverse-CDF draw over fixed cumulative weights.
size_t draw_cdf(const std::vector<double>& cdf, Rng& rng) {
  double u = rng.next_double() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  size_t idx = (size_t)(it - cdf.begin());
  return std::min(idx, cdf.size() - 1);
}

std::vector<double> zipf_cdf(size_t n, double exponent) {
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (size_t r = 0; r < n; ++r) {
    acc += 1.0 / std::pow((double)(r + 1), exponent);
    cdf[r] = acc;
  }
  return cdf;
}

}  // namespace

SyntheticWorld generate_world(const WorldConfig& config) {
  if (config.n_docs == 0 || config.n_queries == 0)
    throw SizeError("synth: need at least one doc and one query");
  if (config.n_topics < 2 || config.vocab_size < config.n_topics)
    throw SizeError("synth: vocab must cover at least two topics");
  if (config.doc_len_min == 0 || config.doc_len_min > config.doc_len_max ||
      config.query_len_min == 0 || config.query_len_min > config.query_len_max)
    throw SizeError("synth: bad length bounds");
  size_t orphans =
      config.orphan_topics ? config.orphan_topics : config.n_topics / 3;
  if (orphans >= config.n_topics)
    throw SizeError("synth: orphan topics must leave at least one doc topic");
  size_t doc_topics = config.n_topics - orphans;

  size_t slice = config.vocab_size / config.n_topics;
  std::vector<double> slice_cdf = zipf_cdf(slice, config.zipf_exponent);
  std::vector<double> global_cdf =
      zipf_cdf(config.vocab_size, config.zipf_exponent);
  // Docs pile into low-numbered doc topics; dense regions live there.
  std::vector<double> doc_topic_cdf = zipf_cdf(doc_topics, 1.0);
  std::vector<double> query_topic_cdf =
      zipf_cdf(doc_topics, config.query_topic_skew);

  Rng rng(derive_seed(config.seed, "synth"));
  auto slice_token = [&](size_t topic) {
    return topic * slice + draw_cdf(slice_cdf, rng);
  };
  auto push_token = [&](std::string& text, size_t token) {
    if (!text.empty()) text += ' ';
    text += 'w';
    text += std::to_string(token);
  };

  std::vector<Item> docs;
  docs.reserve(config.n_docs);
  for (size_t i = 0; i < config.n_docs; ++i) {
    size_t primary = draw_cdf(doc_topic_cdf, rng);
    bool mixed = orphans > 0 && rng.next_double() < config.doc_mix_prob;
    size_t secondary =
        mixed ? doc_topics + (size_t)rng.bounded(orphans) : primary;
    size_t len =
        config.doc_len_min +
        (size_t)rng.bounded(config.doc_len_max - config.doc_len_min + 1);
    std::string text;
    for (size_t t = 0; t < len; ++t) {
      double u = rng.next_double();
      if (u < config.doc_topic_focus) {
        // Focused mass splits between the primary and, when mixed, the
        // orphan secondary.
        bool to_secondary =
            mixed && rng.next_double() < config.doc_secondary_share;
        push_token(text, slice_token(to_secondary ? secondary : primary));
      } else {
        push_token(text, draw_cdf(global_cdf, rng));
      }
    }
    docs.push_back(Item{(uint64_t)i, std::move(text)});
  }

  std::vector<Item> queries;
  queries.reserve(config.n_queries);
  for (size_t i = 0; i < config.n_queries; ++i) {
    bool orphan = orphans > 0 && rng.next_double() < config.query_orphan_prob;
    size_t topic = orphan ? doc_topics + (size_t)rng.bounded(orphans)
                          : draw_cdf(query_topic_cdf, rng);
    size_t len =
        config.query_len_min +
        (size_t)rng.bounded(config.query_len_max - config.query_len_min + 1);
    std::string text;
    size_t topical = 0;
    for (size_t t = 0; t < len; ++t) {
      if (config.chatter_vocab > 0 && t + 1 < len &&
          rng.next_double() < config.query_chatter_prob) {
        // Off-collection token: absent from every document.
        if (!text.empty()) text += ' ';
        text += 'c';
        text += std::to_string(rng.bounded(config.chatter_vocab));
        continue;
      }
      ++topical;
      if (rng.next_double() < config.query_topic_focus)
        push_token(text, slice_token(topic));
      else
        push_token(text, draw_cdf(global_cdf, rng));
    }
    (void)topical;
    queries.push_back(Item{(uint64_t)i, std::move(text)});
  }

  SyntheticWorld world;
  world.docs = Collection::from_items(std::move(docs), Side::document);
  world.queries = QueryLog::from_items(std::move(queries), Side::query);
  return world;
}

}  // namespace eqi
