#include "eqi/relq.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace eqi {

UserModel UserModel::rbp(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw UsageError("relq: rbp persistence must be in (0, 1]");
  return UserModel{UserKind::rbp, gamma};
}

UserModel UserModel::ndcg() { return UserModel{UserKind::ndcg, 1.0}; }

UserModel UserModel::exhaustive() {
  return UserModel{UserKind::exhaustive, 1.0};
}

UserModel UserModel::parse(std::string_view text) {
  size_t colon = text.find(':');
  std::string_view kind = text.substr(0, colon);
  std::string_view param =
      colon == std::string_view::npos ? std::string_view() : text.substr(colon + 1);
  if (kind == "rbp") {
    double gamma = 1.0;
    if (!param.empty()) {
      try {
        gamma = parse_double(param, "relq: user model");
      } catch (const ParseError& e) {
        throw UsageError(e.what());
      }
    }
    return rbp(gamma);
  }
  if (kind == "ndcg" && param.empty()) return ndcg();
  if (kind == "exh" && param.empty()) return exhaustive();
  throw UsageError("relq: bad user model '" + std::string(text) +
                   "' (want kind[:param], e.g. rbp:0.5, ndcg, exh)");
}

std::string UserModel::to_string() const {
  switch (kind) {
    case UserKind::rbp:
      return "rbp" + format_double(gamma);
    case UserKind::ndcg:
      return "ndcg";
    case UserKind::exhaustive:
      return "exh";
  }
  return "?";
}

double exposure_weight(const UserModel& mu, uint32_t rank0) {
  if (rank0 == kInfRank) return 0.0;
  switch (mu.kind) {
    case UserKind::rbp:
      return std::pow(mu.gamma, (double)rank0);
    case UserKind::ndcg:
      return 1.0 / std::log2((double)rank0 + 2.0);
    case UserKind::exhaustive:
      return 1.0;
  }
  return 0.0;
}

std::string RelqConfig::label() const {
  std::string s = mu_dq.to_string() + "-" + mu_qd.to_string();
  if (mu_dq.kind == UserKind::exhaustive && mu_qd.kind == UserKind::ndcg &&
      exh_ndcg_mode == ExhNdcgMode::literal)
    s += "-literal";
  return s;
}

ExposureList ideal_exposure_list(const GroundTruth& gt, uint64_t doc_id,
                                 const UserModel& mu_qd, size_t n_dq) {
  ExposureList ideal{doc_id, {}};
  const GroundTruth::Exposure* exp = gt.exposing(doc_id);
  if (!exp) return ideal;
  std::vector<std::pair<double, uint64_t>> weighted;
  weighted.reserve(exp->size());
  for (const auto& [qid, rank] : *exp)
    weighted.emplace_back(exposure_weight(mu_qd, rank), qid);
  std::stable_sort(weighted.begin(), weighted.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first > b.first;
                     return a.second < b.second;
                   });
  size_t take = std::min(n_dq, weighted.size());
  ideal.queries.reserve(take);
  for (size_t i = 0; i < take; ++i) ideal.queries.push_back(weighted[i].second);
  return ideal;
}

static bool literal_mode(const RelqConfig& config) {
  return config.exh_ndcg_mode == ExhNdcgMode::literal &&
         config.mu_dq.kind == UserKind::exhaustive &&
         config.mu_qd.kind == UserKind::ndcg;
}

// Literal exh-ndcg gain is the document rank itself, so the ideal sorts
// exposing queries by descending rank.
static ExposureList literal_ideal(const GroundTruth& gt, uint64_t doc_id,
                                  size_t n_dq) {
  ExposureList ideal{doc_id, {}};
  const GroundTruth::Exposure* exp = gt.exposing(doc_id);
  if (!exp) return ideal;
  std::vector<std::pair<uint64_t, uint32_t>> sorted(*exp);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  size_t take = std::min(n_dq, sorted.size());
  for (size_t i = 0; i < take; ++i) ideal.queries.push_back(sorted[i].first);
  return ideal;
}

ExposureList ideal_list_for_config(const GroundTruth& gt, uint64_t doc_id,
                                   const RelqConfig& config) {
  if (literal_mode(config)) return literal_ideal(gt, doc_id, config.n_dq);
  return ideal_exposure_list(gt, doc_id, config.mu_qd, config.n_dq);
}

static void check_no_duplicates(const ExposureList& psi) {
  std::unordered_set<uint64_t> seen;
  seen.reserve(psi.queries.size());
  for (uint64_t q : psi.queries)
    if (!seen.insert(q).second)
      throw IntegrityError("relq: exposure list for doc " +
                           std::to_string(psi.doc_id) +
                           " repeats query " + std::to_string(q));
}

std::optional<double> relq_score(const ExposureList& psi, const GroundTruth& gt,
                                 const RelqConfig& config) {
  check_no_duplicates(psi);
  const GroundTruth::Exposure* exp = gt.exposing(psi.doc_id);
  if (!exp || exp->empty()) return std::nullopt;

  size_t depth = std::min(config.n_dq, psi.queries.size());
  if (literal_mode(config)) {
    double num = 0.0;
    for (size_t i = 0; i < depth; ++i) {
      auto rank = gt.rank_of(psi.doc_id, psi.queries[i]);
      if (!rank) continue;
      // i is the 1-based list position here, matching the printed form.
      num += (double)*rank / std::log2((double)(i + 1) + 1.0);
    }
    ExposureList ideal = literal_ideal(gt, psi.doc_id, config.n_dq);
    double den = 0.0;
    for (size_t j = 0; j < ideal.queries.size(); ++j)
      den += (double)*gt.rank_of(psi.doc_id, ideal.queries[j]) /
             std::log2((double)(j + 1) + 1.0);
    if (den == 0.0) return std::nullopt;
    return num / den;
  }

  double num = 0.0;
  for (size_t i = 0; i < depth; ++i) {
    auto rank = gt.rank_of(psi.doc_id, psi.queries[i]);
    uint32_t doc_rank = rank ? *rank : kInfRank;
    num += exposure_weight(config.mu_dq, (uint32_t)i) *
           exposure_weight(config.mu_qd, doc_rank);
  }
  ExposureList ideal =
      ideal_exposure_list(gt, psi.doc_id, config.mu_qd, config.n_dq);
  double den = 0.0;
  for (size_t j = 0; j < ideal.queries.size(); ++j)
    den += exposure_weight(config.mu_dq, (uint32_t)j) *
           exposure_weight(config.mu_qd,
                           *gt.rank_of(psi.doc_id, ideal.queries[j]));
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

RelqReport evaluate_mean_relq(const std::vector<ExposureList>& lists,
                              const GroundTruth& gt,
                              const std::vector<RelqConfig>& configs) {
  if (lists.empty()) throw SizeError("relq: empty evaluation doc set");
  RelqReport report;
  report.columns.reserve(configs.size());
  for (const RelqConfig& config : configs) {
    RelqColumn col;
    col.config = config;
    double sum = 0.0;
    for (const ExposureList& psi : lists) {
      if (auto score = relq_score(psi, gt, config)) {
        col.per_doc.emplace_back(psi.doc_id, *score);
        sum += *score;
      } else {
        ++col.n_excluded;
      }
    }
    col.n_docs = col.per_doc.size();
    col.mean = col.n_docs ? sum / (double)col.n_docs : 0.0;
    report.columns.push_back(std::move(col));
  }
  return report;
}

void RelqReport::save_per_doc_csv(const std::filesystem::path& path) const {
  std::string out = "docid,config,relq\n";
  for (const RelqColumn& col : columns) {
    std::string label = col.config.label();
    for (const auto& [doc, value] : col.per_doc) {
      out += std::to_string(doc);
      out += ',';
      out += label;
      out += ',';
      out += format_double(value);
      out += '\n';
    }
  }
  write_text_file(path, out);
}

std::string RelqReport::summary_csv() const {
  std::string out = "config,mean,n_docs,n_excluded\n";
  for (const RelqColumn& col : columns) {
    out += col.config.label();
    out += ',';
    out += col.n_docs ? format_double(col.mean) : "NA";
    out += ',';
    out += std::to_string(col.n_docs);
    out += ',';
    out += std::to_string(col.n_excluded);
    out += '\n';
  }
  return out;
}

void RelqReport::save_summary_csv(const std::filesystem::path& path) const {
  write_text_file(path, summary_csv());
}

std::vector<RelqConfig> default_relq_configs(size_t n_dq) {
  std::vector<RelqConfig> configs;
  configs.push_back({UserModel::rbp(0.5), UserModel::rbp(0.5), n_dq,
                     ExhNdcgMode::consistent});
  configs.push_back({UserModel::rbp(0.9), UserModel::rbp(0.5), n_dq,
                     ExhNdcgMode::consistent});
  configs.push_back(
      {UserModel::rbp(1.0), UserModel::rbp(1.0), n_dq, ExhNdcgMode::consistent});
  configs.push_back({UserModel::exhaustive(), UserModel::ndcg(), n_dq,
                     ExhNdcgMode::consistent});
  return configs;
}

}  // namespace eqi
