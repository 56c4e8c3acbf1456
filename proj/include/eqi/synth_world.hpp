#pragma once

#include "eqi/corpus.hpp"

namespace eqi {

// Topic-mixture unigram sampler. Topics split into doc topics and orphan
// topics: docs draw a primary doc topic (skewed, so dense regions exist)
// and, with doc_mix_prob, a secondary orphan topic; queries are biased to a
// single topic and land on orphan topics with query_orphan_prob.
//
// Queries additionally carry "chatter": tokens from a vocabulary that never
// occurs in documents (off-collection words, typos, session noise).
// Chatter is invisible to document retrieval -- it matches nothing, so a
// query's result list and therefore its exposure set are unchanged -- but
// it steals query norm after L2 normalization, sinking chattery exposing
// queries deep below a document's nearest-query window. That is the
// reverse-nearest-neighbor asymmetry the metric learner has to undo.
struct WorldConfig {
  uint64_t seed = 1;
  size_t n_docs = 1000;
  size_t n_queries = 500;
  size_t vocab_size = 2000;
  size_t n_topics = 20;
  size_t orphan_topics = 0;  // 0 = one third of n_topics
  size_t doc_len_min = 30;
  size_t doc_len_max = 80;
  size_t query_len_min = 2;
  size_t query_len_max = 8;
  double doc_topic_focus = 0.8;    // token mass on the doc's own topics
  double query_topic_focus = 0.9;  // P(token from the query's topic slice)
  double doc_mix_prob = 0.5;       // P(doc carries an orphan secondary)
  double doc_secondary_share = 0.4; // fraction of focused mass on the secondary
  double query_orphan_prob = 0.35; // P(query sits on an orphan topic)
  double query_topic_skew = 0.0;   // zipf exponent over doc topics (0 = uniform)
  double query_chatter_prob = 0.0; // per-token P(chatter instead of topical)
  size_t chatter_vocab = 500;      // off-collection vocabulary size
  double zipf_exponent = 0.7;      // in-slice and global rank skew
};

struct SyntheticWorld {
  Collection docs;
  QueryLog queries;
};

SyntheticWorld generate_world(const WorldConfig& config);

}  // namespace eqi
