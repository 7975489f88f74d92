#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cbmrul/app/config.hpp"
#include "cbmrul/app/intervene.hpp"
#include "cbmrul/data/generator.hpp"
#include "cbmrul/eval/report.hpp"
#include "cbmrul/model/model.hpp"

namespace cbmrul::app {

/// Scenario plus scaled sample sets, ready for training or evaluation.
struct PreparedData {
  data::Scenario scenario;
  data::ScalerStats scaler;
  data::SampleSet train;
  data::SampleSet test;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

std::vector<data::Fleet> generate_fleets(const ExperimentConfig& config);
/// Reads <data_dir>/<fleet>.csv for every configured fleet.
std::vector<data::Fleet> read_fleets(const ExperimentConfig& config);
/// `concept_subset` keeps only those concept indices (empty = all).
PreparedData prepare_data(const ExperimentConfig& config, const std::vector<data::Fleet>& fleets,
                          const std::vector<std::size_t>& concept_subset = {});

/// Model config for a spec, sized to the scenario's concepts.
model::ModelConfig resolve_model(const ModelSpec& spec, const PreparedData& data);
std::filesystem::path checkpoint_path(const ExperimentConfig& config, const std::string& model);

/// Writes one CSV per fleet; returns the paths.
std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& config);
/// Trains every configured model; returns checkpoint paths.
std::vector<std::filesystem::path> cmd_train(const ExperimentConfig& config);
std::vector<eval::MetricReport> cmd_evaluate(const ExperimentConfig& config);

struct AblationRow {
  std::string family;
  std::size_t k = 0;
  eval::MetricReport report;
};
struct LeakageRow {
  std::string family;
  std::string unit;
  double pearson = 0.0;
};
struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<LeakageRow> leakage;
};

/// Pearson correlation between concept `concept_index`'s cycle-mean
/// activation and the cycle index, on every test unit whose label for that
/// concept is never active but which does leave the healthy state.
std::vector<LeakageRow> leakage_correlations(const model::Model& model,
                                             const data::SampleSet& test,
                                             std::size_t concept_index = 0);

AblationResult cmd_ablate(const ExperimentConfig& config);

struct InterventionRun {
  std::string model;
  intervene::InterventionOutcome outcome;
};
std::vector<InterventionRun> cmd_intervene(const ExperimentConfig& config);

/// Error bucket statistics of per-cycle RUL errors (pred - true).
struct ErrorBucket {
  int first_cycle = 0;
  int last_cycle = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};
std::vector<ErrorBucket> error_buckets(const std::vector<eval::UnitTrace>& traces, int width);

/// Header of the embedding CSV for a model.
std::vector<std::string> embedding_columns(const model::Model& model);
/// Writes one row per window; returns the row count.
std::size_t write_embeddings(const model::Model& model, const data::SampleSet& samples,
                             std::ostream& out);
std::filesystem::path cmd_export_embeddings(const ExperimentConfig& config);

void cmd_serve(const ExperimentConfig& config);

}  // namespace cbmrul::app
