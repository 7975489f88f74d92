#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbmrul/eval/report.hpp"
#include "cbmrul/model/train.hpp"

namespace cbmrul::eval {

/// Per-unit evaluation inputs. Cycle arrays are aligned; window arrays are
/// windows x k, row-major.
struct UnitTrace {
  std::string key;
  std::vector<int> cycles;
  std::vector<double> true_rul;
  std::vector<double> pred_rul;
  std::vector<double> health_state;
  std::vector<double> cycle_activations;  // cycles x k
  std::vector<double> window_activations;  // windows x k
  std::vector<double> window_labels;       // windows x k
};

struct EvaluationInput {
  std::string method;
  std::size_t concepts = 0;
  std::vector<std::string> concept_names;
  std::vector<std::pair<std::size_t, std::size_t>> concept_pairs;
  bool has_activations = false;
  std::vector<UnitTrace> units;
  /// CAS representation per concept over all windows in unit order:
  /// representation[j] is windows x representation_dims[j]. A single entry is
  /// shared by every concept (latent codes). Empty skips CAS.
  std::vector<std::vector<double>> representation;
  std::vector<std::size_t> representation_dims;
};

struct EvalOptions {
  std::vector<std::size_t> cas_clusters = default_cas_clusters();
  /// Windows drawn (seeded, without replacement) for k-means; 0 uses all.
  std::size_t cas_max_samples = 2000;
  std::uint64_t seed = 0;
};

MetricReport compute_report(const EvaluationInput& input, const EvalOptions& options);

/// Gathers evaluation inputs from a model's per-unit inference over `samples`.
EvaluationInput collect_evaluation(const model::Model& model, const data::SampleSet& samples,
                                   const std::vector<model::UnitInference>& inference,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs = {});

std::vector<model::UnitInference> infer_all(const model::Model& model,
                                            const data::SampleSet& samples);

MetricReport evaluate_model(const model::Model& model, const data::SampleSet& samples,
                            const EvalOptions& options,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs = {});

}  // namespace cbmrul::eval
