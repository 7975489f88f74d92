#include "cbmrul/app/intervene.hpp"

#include <json.hpp>

namespace cbmrul::intervene {

namespace {

/// Per-cycle predictions where cycle position q uses overrides[q].
std::vector<model::CyclePrediction> predict_with(const model::Model& model,
                                                 const model::UnitInference& unit,
                                                 const std::vector<model::ConceptOverrides>& overrides) {
  const std::size_t k = model.config().concepts;
  std::vector<model::CyclePrediction> out;
  std::vector<double> rul;
  for (std::size_t q = 0; q < unit.cycles.size(); ++q) {
    const auto& ov = overrides[q];
    model::CyclePrediction p;
    p.cycle = unit.cycles[q];
    p.activations.assign(k, 0.0);
    rul.clear();
    const std::size_t b = unit.cycle_begin[q], e = unit.cycle_begin[q + 1];
    for (std::size_t w = b; w < e; ++w) {
      const auto& o = unit.windows[w];
      rul.push_back(ov.empty() ? o.rul : model.predict(o, ov));
      for (std::size_t j = 0; j < k && j < o.activations.size(); ++j) p.activations[j] += o.activations[j];
    }
    for (double& a : p.activations) a /= static_cast<double>(e - b);
    for (const auto& [j, v] : ov) p.activations[j] = v;
    p.rul = model::cycle_rul(rul);
    out.push_back(std::move(p));
  }
  return out;
}

void require_bottleneck(const model::Model& model) {
  if (!model::has_concept_bottleneck(model.family())) {
    throw UsageError("interventions are not supported for family " +
                     model::to_string(model.family()));
  }
}

}  // namespace

void InterventionPolicy::validate() const {
  if (!(detection_threshold > 0.0 && detection_threshold < 1.0)) {
    throw ConfigError("intervention threshold must be in (0,1)");
  }
}

InspectionOracle::InspectionOracle(const data::SampleSet& samples)
    : lookup_([&samples](std::size_t unit, int cycle, std::size_t concept_index) {
        const auto& info = samples.units().at(unit);
        if (cycle < 1 || static_cast<std::size_t>(cycle) > info.cycle_count) {
          throw InputError("inspection cycle " + std::to_string(cycle) + " outside unit " +
                           info.key);
        }
        const auto& slot = samples.cycles()[info.first_cycle_slot + static_cast<std::size_t>(cycle - 1)];
        return slot.concepts.at(concept_index) > 0.5;
      }) {}

InspectionOracle::InspectionOracle(Lookup lookup) : lookup_(std::move(lookup)) {}

bool InspectionOracle::inspect(std::size_t unit, int cycle, std::size_t concept_index) const {
  return lookup_(unit, cycle, concept_index);
}

std::size_t InterventionLog::applied() const {
  std::size_t n = 0;
  for (const auto& e : events) n += e.override_applied ? 1 : 0;
  return n;
}

std::string InterventionLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events) {
    nlohmann::json j{{"unit", e.unit},
                     {"cycle", e.cycle},
                     {"concept", e.concept_name},
                     {"concept_index", e.concept_index},
                     {"detected_activation", e.detected_activation},
                     {"inspection_result", e.inspection_result ? "degraded" : "healthy"},
                     {"override_applied", e.override_applied}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<model::CyclePrediction> corrected_trajectory(const model::Model& model,
                                                         const model::UnitInference& unit,
                                                         const StickyOverrides& overrides) {
  if (!overrides.empty()) require_bottleneck(model);
  std::vector<model::ConceptOverrides> per_cycle(unit.cycles.size());
  for (std::size_t q = 0; q < unit.cycles.size(); ++q) {
    for (const auto& [j, start] : overrides) {
      if (unit.cycles[q] >= start) per_cycle[q][j] = 1.0;
    }
  }
  return predict_with(model, unit, per_cycle);
}

PolicyResult run_policy(const model::Model& model, const model::UnitInference& unit,
                        const std::string& unit_key, const InterventionPolicy& policy,
                        const InspectionOracle& oracle,
                        const std::vector<std::string>& concept_names) {
  require_bottleneck(model);
  policy.validate();
  const std::size_t k = model.config().concepts;
  const auto& names = concept_names.empty() ? model.config().concept_names : concept_names;
  PolicyResult result;
  result.original = model::predict_trajectory(model, unit);

  std::vector<bool> armed(k, true);
  std::vector<model::ConceptOverrides> per_cycle(unit.cycles.size());
  for (std::size_t q = 0; q < unit.cycles.size(); ++q) {
    const int cycle = unit.cycles[q];
    const auto& act = result.original[q].activations;
    for (std::size_t j = 0; j < k; ++j) {
      if (result.overrides.count(j)) {
        per_cycle[q][j] = 1.0;
        continue;
      }
      if (act[j] <= policy.detection_threshold) {
        if (policy.rearm_on_negative_inspection) armed[j] = true;
        continue;
      }
      if (!armed[j]) continue;
      InterventionEvent ev;
      ev.unit = unit_key;
      ev.cycle = cycle;
      ev.concept_index = j;
      ev.concept_name = j < names.size() ? names[j] : std::to_string(j);
      ev.detected_activation = act[j];
      ev.inspection_result = oracle.inspect(unit.unit, cycle, j);
      ev.override_applied = ev.inspection_result;
      if (ev.inspection_result) {
        per_cycle[q][j] = 1.0;
        if (policy.sticky) result.overrides[j] = cycle;
      } else {
        armed[j] = false;
      }
      result.log.events.push_back(ev);
    }
  }
  result.corrected = predict_with(model, unit, per_cycle);
  result.per_cycle = std::move(per_cycle);
  return result;
}

double whatif(const model::Model& model, const model::BottleneckOutput& window,
              const model::ConceptOverrides& overrides) {
  return model.predict(window, overrides);
}

double whatif_cycle(const model::Model& model, const model::UnitInference& unit,
                    std::size_t cycle_position, const model::ConceptOverrides& overrides) {
  if (cycle_position >= unit.cycles.size()) throw InputError("whatif: cycle out of range");
  std::vector<double> rul;
  for (std::size_t w = unit.cycle_begin[cycle_position]; w < unit.cycle_begin[cycle_position + 1];
       ++w) {
    rul.push_back(overrides.empty() ? unit.windows[w].rul
                                    : model.predict(unit.windows[w], overrides));
  }
  return model::cycle_rul(rul);
}

InterventionOutcome evaluate_interventions(
    const model::Model& model, const data::SampleSet& samples,
    const std::vector<model::UnitInference>& inference, const InterventionPolicy& policy,
    const InspectionOracle& oracle, const eval::EvalOptions& options,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  require_bottleneck(model);
  const std::size_t k = model.config().concepts;
  eval::EvaluationInput before = eval::collect_evaluation(model, samples, inference, pairs);
  eval::EvaluationInput after = before;
  InterventionOutcome out;
  for (std::size_t u = 0; u < inference.size(); ++u) {
    const auto& ui = inference[u];
    const std::string& key = before.units[u].key;
    PolicyResult pr = run_policy(model, ui, key, policy, oracle);
    auto& trace = after.units[u];
    for (std::size_t q = 0; q < ui.cycles.size(); ++q) {
      trace.pred_rul[q] = pr.corrected[q].rul;
      for (std::size_t j = 0; j < k; ++j) {
        trace.cycle_activations[q * k + j] = pr.corrected[q].activations[j];
      }
    }
    // Window activations of overridden cycles become exactly 1.
    for (std::size_t q = 0; q < ui.cycles.size(); ++q) {
      for (const auto& [j, v] : pr.per_cycle[q]) {
        for (std::size_t w = ui.cycle_begin[q]; w < ui.cycle_begin[q + 1]; ++w) {
          trace.window_activations[w * k + j] = v;
        }
      }
    }
    if (pr.log.applied() > 0) out.intervened_units.push_back(key);
    out.log.events.insert(out.log.events.end(), pr.log.events.begin(), pr.log.events.end());
  }
  out.before = eval::compute_report(before, options);
  out.after = eval::compute_report(after, options);
  out.after.method = out.before.method;
  out.before_traces = std::move(before.units);
  out.after_traces = std::move(after.units);
  return out;
}

}  // namespace cbmrul::intervene
