#pragma once

#include "eqi/learner.hpp"
#include "eqi/relq.hpp"
#include "eqi/stats.hpp"
#include "eqi/synth_world.hpp"

namespace eqi {

// Desk-scale training schedule; the config carries every knob so a spec
// uniquely determines the run.
struct TrainSchedule {
  uint32_t iterations = 50;
  uint32_t batches_per_iteration = 10;
  uint32_t samples_per_batch = 64;
  double learning_rate = 5e-3;
  double dropout = 0.1;
  double alpha = 0.5;
};

// A fully serializable experiment description. Identical specs produce
// byte-identical outputs, whatever the thread count.
struct ExperimentSpec {
  std::string name = "overall";
  std::filesystem::path out_dir;
  uint64_t seed = 42;
  int threads = 1;

  WorldConfig world;
  std::filesystem::path docs_path;     // optional: use an external corpus
  std::filesystem::path queries_path;  // instead of the synthetic world

  uint32_t dim = 64;
  size_t n_qd = 20;
  size_t n_dq = 100;
  size_t n_train_queries = 500;
  size_t n_train_docs = 300;
  size_t n_test_docs = 300;
  size_t n_validation_docs = 100;
  TrainSchedule train;

  std::vector<double> bm25_k1_grid;
  std::vector<double> bm25_b_grid;

  std::vector<size_t> sweep_query_sizes;
  std::vector<size_t> sweep_doc_sizes;
  std::vector<size_t> growth_initial_sizes;
  std::vector<size_t> growth_log_sizes;
  std::vector<double> heatmap_gammas;

  static ExperimentSpec from_json_file(const std::filesystem::path& path);
  static ExperimentSpec from_json_text(const std::string& text);
  std::string to_json_text() const;
};

// Desk defaults per experiment name (overall, sweep, growth, analysis,
// heatmap).
ExperimentSpec default_spec(const std::string& name);

void run_overall_eval(const ExperimentSpec& spec);
void run_training_size_sweep(const ExperimentSpec& spec);
void run_query_growth_sim(const ExperimentSpec& spec);
void run_query_characteristic_analysis(const ExperimentSpec& spec);
void run_relq_heatmap(const ExperimentSpec& spec);

// Dispatch by spec.name.
void run_experiment(const ExperimentSpec& spec);

}  // namespace eqi
