#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbmrul/app/intervene.hpp"
#include "cbmrul/data/generator.hpp"
#include "cbmrul/eval/evaluate.hpp"
#include "cbmrul/model/model.hpp"

namespace cbmrul::app {

/// One model to train; `name` labels its checkpoint and report rows.
struct ModelSpec {
  std::string name;
  model::ModelConfig config;
};

struct AblationOptions {
  /// Largest concept count; 0 means all scenario concepts.
  std::size_t k_max = 0;
  std::vector<model::Family> families{model::Family::CbmBool, model::Family::CbmFuzzy,
                                      model::Family::CbmHybrid, model::Family::Cem};
};

struct InterventionOptions {
  intervene::InterventionPolicy policy;
  /// Model names; empty means every trained model with a concept bottleneck.
  std::vector<std::string> models;
  int bucket_width = 10;
};

struct ExportOptions {
  std::string model;  // empty: CEM if configured, else the first model
  std::string split = "test";
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  int session_ttl_seconds = 3600;
  std::string cors_origin = "*";
  /// Empty: every checkpoint under <output_dir>/models.
  std::vector<std::filesystem::path> checkpoints;
  std::string split = "test";
};

/// Fully resolved experiment: every default filled in and every stage seed
/// derived from the root seed.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  std::filesystem::path data_dir;  // empty: <output_dir>/data

  std::vector<data::GeneratorConfig> fleets;
  std::vector<std::string> concepts;
  std::vector<std::pair<std::string, std::string>> concept_pairs;
  std::vector<int> train_units{1, 2, 3, 4, 5, 6};
  std::vector<int> test_units{7, 8, 9, 10};

  data::PreprocessOptions preprocess;
  std::vector<ModelSpec> models;
  eval::EvalOptions evaluation;
  AblationOptions ablation;
  InterventionOptions intervention;
  ExportOptions export_options;
  ServiceOptions service;

  std::filesystem::path resolved_data_dir() const;
  const ModelSpec& model(const std::string& name) const;
  void validate() const;
};

/// Parses the JSON config text. Relative paths resolve against `base_dir`.
/// `seed` and `output_dir` override the file's values.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                              std::optional<std::uint64_t> seed = std::nullopt,
                              std::optional<std::filesystem::path> output_dir = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed = std::nullopt,
                             std::optional<std::filesystem::path> output_dir = std::nullopt);

/// The resolved configuration as JSON (written next to every run's outputs).
std::string config_to_json(const ExperimentConfig& config);

}  // namespace cbmrul::app
