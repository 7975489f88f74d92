#pragma once

#include <functional>
#include <vector>

#include "cbmrul/data/preprocess.hpp"
#include "cbmrul/model/model.hpp"

namespace cbmrul::model {

/// Optional instrumentation filled in by train().
struct TrainingTrace {
  bool record_batches = false;
  /// Sample indices of every mini-batch, in order (when record_batches).
  std::vector<std::vector<std::size_t>> batches;
  /// CEM ground-truth substitutions performed / considered.
  std::size_t substitutions = 0;
  std::size_t substitution_draws = 0;
  /// Loss of the untrained model over the whole set, before the first step.
  double initial_loss = 0.0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Mini-batch Adam on a scaled sample set. Batches are shuffled from the
/// config seed's "shuffle" stream, which does not depend on the family, so
/// every family sees the same data order. Throws InputError if the loss
/// becomes non-finite.
Model train(const ModelConfig& config, const data::SampleSet& samples,
            const data::ScalerStats& scaler, TrainingTrace* trace = nullptr,
            const EpochCallback& on_epoch = {});

/// Continues training an existing model for `epochs` more epochs.
void train_epochs(Model& model, const data::SampleSet& samples, int epochs,
                  TrainingTrace* trace = nullptr, const EpochCallback& on_epoch = {});

/// Mean loss over a sample set (no parameter update).
double evaluate_loss(const Model& model, const data::SampleSet& samples,
                     std::size_t batch_size = 512);

/// Per-window outputs of one unit, grouped by cycle.
struct UnitInference {
  std::size_t unit = 0;
  std::vector<int> cycles;                    // 1-based cycle ids
  std::vector<std::size_t> cycle_begin;       // into windows, size cycles+1
  std::vector<BottleneckOutput> windows;
};

UnitInference infer_unit(const Model& model, const data::SampleSet& samples, std::size_t unit,
                         std::size_t batch_size = 512);

/// Per-cycle summary: mean RUL (unscaled, negative clamped to 0) and mean
/// activation of each concept.
struct CyclePrediction {
  int cycle = 0;
  double rul = 0.0;
  std::vector<double> activations;
};

std::vector<CyclePrediction> predict_trajectory(const Model& model, const UnitInference& unit);
std::vector<CyclePrediction> predict_trajectory(const Model& model,
                                                const data::SampleSet& samples, std::size_t unit);

/// Cycle aggregation for arbitrary per-window values: mean of scaled RUL
/// predictions times 100, clamped at 0.
double cycle_rul(std::span<const double> scaled_window_predictions);

}  // namespace cbmrul::model
