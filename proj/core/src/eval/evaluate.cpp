#include "cbmrul/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cbmrul/net/rng.hpp"

namespace cbmrul::eval {

namespace {

std::vector<std::size_t> cas_subset(std::size_t n, std::size_t max_samples, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_samples == 0 || n <= max_samples) return idx;
  Rng rng = make_rng(seed, "cas/subsample");
  for (std::size_t i = 0; i < max_samples; ++i) {
    const auto j = static_cast<std::size_t>(
        uniform_int(rng, static_cast<long>(i), static_cast<long>(n) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_samples);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

MetricReport compute_report(const EvaluationInput& input, const EvalOptions& options) {
  if (input.units.empty()) throw InputError("evaluate: no test units");
  const std::size_t k = input.concepts;
  MetricReport r;
  r.method = input.method;
  r.concept_names = input.concept_names;

  std::vector<double> pred, truth, labels, scores, health;
  std::vector<double> win_act, win_lab;
  for (const auto& u : input.units) {
    if (u.pred_rul.size() != u.true_rul.size() || u.pred_rul.empty()) {
      throw InputError("evaluate: unit " + u.key + " has mismatched cycle arrays");
    }
    UnitMetrics um;
    um.unit = u.key;
    um.cycles = u.pred_rul.size();
    um.rmse = rmse_per_cycle(u.pred_rul, u.true_rul);
    um.nasa = nasa_score(u.pred_rul, u.true_rul);
    r.units.push_back(um);
    pred.insert(pred.end(), u.pred_rul.begin(), u.pred_rul.end());
    truth.insert(truth.end(), u.true_rul.begin(), u.true_rul.end());
    health.insert(health.end(), u.health_state.begin(), u.health_state.end());
    win_lab.insert(win_lab.end(), u.window_labels.begin(), u.window_labels.end());
    if (input.has_activations) {
      win_act.insert(win_act.end(), u.window_activations.begin(), u.window_activations.end());
      for (std::size_t q = 0; q < u.cycles.size(); ++q) {
        const auto first = u.cycle_activations.begin() + static_cast<long>(q * k);
        scores.push_back(*std::max_element(first, first + static_cast<long>(k)));
      }
    }
  }
  r.rmse_cycles = rmse_per_cycle(pred, truth);
  r.nasa_score = nasa_score(pred, truth);
  for (const auto& u : r.units) {
    r.rmse_unit_macro += u.rmse;
    r.nasa_unit_macro += u.nasa;
  }
  r.rmse_unit_macro /= static_cast<double>(r.units.size());
  r.nasa_unit_macro /= static_cast<double>(r.units.size());

  if (input.has_activations && k > 0) {
    r.concept_accuracy = concept_accuracy(win_act, win_lab, k);
    const double auc = auc_roc(scores, health);
    if (!std::isnan(auc)) r.auc_fault = auc;
    std::vector<std::string> names = input.concept_names;
    if (names.size() != k) {
      names.clear();
      for (std::size_t j = 0; j < k; ++j) names.push_back("c" + std::to_string(j + 1));
    }
    r.confusion = confusion_matrix(win_act, win_lab, k, names, input.concept_pairs);
  }

  if (!input.representation.empty() && k > 0) {
    const std::size_t n = win_lab.size() / k;
    const auto subset = cas_subset(n, options.cas_max_samples, options.seed);
    std::vector<std::vector<double>> reps;
    std::vector<std::size_t> dims;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = input.representation.size() == 1 ? 0 : j;
      const std::size_t dim = input.representation_dims.at(src);
      const auto& full = input.representation.at(src);
      if (full.size() != n * dim) throw InputError("evaluate: representation size mismatch");
      std::vector<double> sub;
      sub.reserve(subset.size() * dim);
      for (std::size_t i : subset) {
        sub.insert(sub.end(), full.begin() + static_cast<long>(i * dim),
                   full.begin() + static_cast<long>((i + 1) * dim));
      }
      reps.push_back(std::move(sub));
      dims.push_back(dim);
    }
    std::vector<double> sub_labels;
    sub_labels.reserve(subset.size() * k);
    for (std::size_t i : subset) {
      sub_labels.insert(sub_labels.end(), win_lab.begin() + static_cast<long>(i * k),
                        win_lab.begin() + static_cast<long>((i + 1) * k));
    }
    r.cas = concept_alignment_score(reps, dims, sub_labels, k, options.cas_clusters, options.seed);
  }
  return r;
}

std::vector<model::UnitInference> infer_all(const model::Model& model,
                                            const data::SampleSet& samples) {
  std::vector<model::UnitInference> out;
  for (std::size_t u = 0; u < samples.units().size(); ++u) {
    out.push_back(model::infer_unit(model, samples, u));
  }
  return out;
}

EvaluationInput collect_evaluation(const model::Model& model, const data::SampleSet& samples,
                                   const std::vector<model::UnitInference>& inference,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const auto family = model.family();
  const std::size_t k = model.config().concepts;
  const std::size_t m = model.config().embed_dim;
  if (samples.concepts() != k) {
    throw ConfigError("evaluate: test set has " + std::to_string(samples.concepts()) +
                      " concepts, model expects " + std::to_string(k));
  }
  EvaluationInput in;
  in.method = model::to_string(family);
  in.concepts = k;
  in.concept_names = model.config().concept_names;
  in.concept_pairs = pairs;
  in.has_activations = model::predicts_concepts(family);

  const bool latent_rep = family == model::Family::Cnn || family == model::Family::CnnCls;
  const std::size_t reps = latent_rep ? 1 : k;
  in.representation.assign(reps, {});
  in.representation_dims.assign(reps, 1);
  if (latent_rep) in.representation_dims[0] = model.config().latent_dim;
  if (family == model::Family::Cem) in.representation_dims.assign(k, m);

  for (const auto& ui : inference) {
    UnitTrace t;
    t.key = samples.units().at(ui.unit).key;
    t.cycles = ui.cycles;
    const auto traj = model::predict_trajectory(model, ui);
    const auto& info = samples.units()[ui.unit];
    for (std::size_t q = 0; q < ui.cycles.size(); ++q) {
      const auto& slot = samples.cycles()[info.first_cycle_slot + q];
      t.true_rul.push_back(slot.rul);
      t.pred_rul.push_back(traj[q].rul);
      t.health_state.push_back(slot.health_state);
      if (in.has_activations) {
        t.cycle_activations.insert(t.cycle_activations.end(), traj[q].activations.begin(),
                                   traj[q].activations.end());
      }
      for (std::size_t w = ui.cycle_begin[q]; w < ui.cycle_begin[q + 1]; ++w) {
        const auto& o = ui.windows[w];
        t.window_labels.insert(t.window_labels.end(), slot.concepts.begin(), slot.concepts.end());
        if (in.has_activations) {
          t.window_activations.insert(t.window_activations.end(), o.activations.begin(),
                                      o.activations.end());
        }
        if (latent_rep) {
          in.representation[0].insert(in.representation[0].end(), o.latent.begin(),
                                      o.latent.end());
        } else if (family == model::Family::Cem) {
          for (std::size_t j = 0; j < k; ++j) {
            in.representation[j].insert(in.representation[j].end(),
                                        o.embeddings.begin() + static_cast<long>(j * m),
                                        o.embeddings.begin() + static_cast<long>((j + 1) * m));
          }
        } else {
          for (std::size_t j = 0; j < k; ++j) in.representation[j].push_back(o.activations[j]);
        }
      }
    }
    in.units.push_back(std::move(t));
  }
  return in;
}

MetricReport evaluate_model(const model::Model& model, const data::SampleSet& samples,
                            const EvalOptions& options,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  return compute_report(collect_evaluation(model, samples, infer_all(model, samples), pairs),
                        options);
}

}  // namespace cbmrul::eval
