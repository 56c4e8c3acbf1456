#pragma once

#include <optional>

#include "eqi/oracle.hpp"

namespace eqi {

enum class UserKind { rbp, ndcg, exhaustive };

// Rank-to-inspection-probability model. weight(0) = 1 for rbp/exhaustive.
struct UserModel {
  UserKind kind = UserKind::exhaustive;
  double gamma = 1.0;  // rbp persistence, in (0, 1]

  static UserModel rbp(double gamma);
  static UserModel ndcg();
  static UserModel exhaustive();
  // Grammar `kind[:param]`, e.g. "rbp:0.5", "ndcg", "exh".
  static UserModel parse(std::string_view text);
  std::string to_string() const;
};

// rbp -> gamma^rank; ndcg -> 1/log2(rank+2); exhaustive -> 1; kInfRank -> 0.
double exposure_weight(const UserModel& mu, uint32_t rank0);

// Ranked exposing-query list for one document.
struct ExposureList {
  uint64_t doc_id = 0;
  std::vector<uint64_t> queries;
};

enum class ExhNdcgMode { consistent, literal };

struct RelqConfig {
  UserModel mu_dq;  // EQI-side user inspecting the exposure list
  UserModel mu_qd;  // document-side user inspecting result pages
  size_t n_dq = 100;
  ExhNdcgMode exh_ndcg_mode = ExhNdcgMode::consistent;

  std::string label() const;  // "<mu_dq>-<mu_qd>[-literal]"
};

// All exposing queries of d sorted by document-side weight (desc, ties by
// ascending query id), truncated to n_dq. Empty when d is never exposed.
ExposureList ideal_exposure_list(const GroundTruth& gt, uint64_t doc_id,
                                 const UserModel& mu_qd, size_t n_dq);

// The ideal list for a full config (handles the literal exh-ndcg variant,
// whose gain is the document rank itself).
ExposureList ideal_list_for_config(const GroundTruth& gt, uint64_t doc_id,
                                   const RelqConfig& config);

// Normalized two-sided exposure-list quality in [0, 1]. nullopt when the
// metric is undefined for this document (no exposing queries, or a zero
// ideal mass in literal mode).
std::optional<double> relq_score(const ExposureList& psi, const GroundTruth& gt,
                                 const RelqConfig& config);

struct RelqColumn {
  RelqConfig config;
  std::vector<std::pair<uint64_t, double>> per_doc;  // defined docs only
  double mean = 0.0;
  size_t n_docs = 0;
  size_t n_excluded = 0;
};

struct RelqReport {
  std::vector<RelqColumn> columns;

  // `docid,config,relq` rows.
  void save_per_doc_csv(const std::filesystem::path& path) const;
  // `config,mean,n_docs,n_excluded` rows.
  void save_summary_csv(const std::filesystem::path& path) const;
  std::string summary_csv() const;
};

RelqReport evaluate_mean_relq(const std::vector<ExposureList>& lists,
                              const GroundTruth& gt,
                              const std::vector<RelqConfig>& configs);

// The Table-2 style config set: rbp-rbp at (0.5,0.5), (0.5,0.9), (1,1) as
// (gamma_qd, gamma_dq), plus exh-ndcg.
std::vector<RelqConfig> default_relq_configs(size_t n_dq);

}  // namespace eqi
