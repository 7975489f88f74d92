#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cbmrul/eval/evaluate.hpp"
#include "cbmrul/model/train.hpp"

namespace cbmrul::intervene {

struct InterventionPolicy {
  double detection_threshold = 0.5;
  bool sticky = true;
  /// After a negative inspection, inspect again once the activation has
  /// dropped back to or below the threshold and crosses it anew.
  bool rearm_on_negative_inspection = false;

  void validate() const;
};

/// Simulated inspection: true iff the concept is degraded at that cycle.
class InspectionOracle {
 public:
  using Lookup = std::function<bool(std::size_t unit, int cycle, std::size_t concept_index)>;

  /// Ground truth from the concept labels of `samples` (unit = SampleSet unit index).
  explicit InspectionOracle(const data::SampleSet& samples);
  explicit InspectionOracle(Lookup lookup);

  bool inspect(std::size_t unit, int cycle, std::size_t concept_index) const;

 private:
  Lookup lookup_;
};

struct InterventionEvent {
  std::string unit;
  int cycle = 0;
  std::size_t concept_index = 0;
  std::string concept_name;
  double detected_activation = 0.0;
  bool inspection_result = false;
  bool override_applied = false;
};

struct InterventionLog {
  std::vector<InterventionEvent> events;

  std::size_t applied() const;
  /// One JSON object per line.
  std::string to_jsonl() const;
};

/// Concept -> first 1-based cycle from which its activation (or CEM
/// probability) is forced to 1.
using StickyOverrides = std::map<std::size_t, int>;

/// Per-cycle predictions with overrides applied from their start cycles.
/// Activations report the effective value fed to the regressor.
std::vector<model::CyclePrediction> corrected_trajectory(const model::Model& model,
                                                         const model::UnitInference& unit,
                                                         const StickyOverrides& overrides);

struct PolicyResult {
  std::vector<model::CyclePrediction> original;
  std::vector<model::CyclePrediction> corrected;
  StickyOverrides overrides;
  /// Overrides in force at each cycle position.
  std::vector<model::ConceptOverrides> per_cycle;
  InterventionLog log;
};

/// Walks the unit's cycles in order, inspecting on detection and overriding
/// confirmed concepts. Throws UsageError for families without a concept
/// bottleneck.
PolicyResult run_policy(const model::Model& model, const model::UnitInference& unit,
                        const std::string& unit_key, const InterventionPolicy& policy,
                        const InspectionOracle& oracle,
                        const std::vector<std::string>& concept_names = {});

/// Stateless what-if on one window: scaled RUL with the overrides applied.
double whatif(const model::Model& model, const model::BottleneckOutput& window,
              const model::ConceptOverrides& overrides);
/// Cycle-level what-if: mean over the cycle's windows, unscaled.
double whatif_cycle(const model::Model& model, const model::UnitInference& unit,
                    std::size_t cycle_position, const model::ConceptOverrides& overrides);

struct InterventionOutcome {
  eval::MetricReport before;
  eval::MetricReport after;
  InterventionLog log;
  /// Test-unit keys with at least one applied override.
  std::vector<std::string> intervened_units;
  std::vector<eval::UnitTrace> before_traces;
  std::vector<eval::UnitTrace> after_traces;
};

InterventionOutcome evaluate_interventions(
    const model::Model& model, const data::SampleSet& samples,
    const std::vector<model::UnitInference>& inference, const InterventionPolicy& policy,
    const InspectionOracle& oracle, const eval::EvalOptions& options,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs = {});

}  // namespace cbmrul::intervene
