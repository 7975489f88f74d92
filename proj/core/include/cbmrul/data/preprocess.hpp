#pragma once

#include <span>
#include <string>
#include <vector>

#include "cbmrul/data/fleet.hpp"
#include "cbmrul/net/tensor.hpp"

namespace cbmrul::data {

inline constexpr double kRulScale = 100.0;
inline constexpr double kDefaultTau = -0.0015;

enum class ScalingMode { Standard, MinMax };

ScalingMode parse_scaling(const std::string& name);
std::string to_string(ScalingMode mode);

struct PreprocessOptions {
  int subsample = 10;
  int window = 50;
  ScalingMode scaling = ScalingMode::Standard;
  double tau = kDefaultTau;
};

/// Per-channel statistics fitted on the training partition only.
struct ScalerStats {
  ScalingMode mode = ScalingMode::Standard;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> min;
  std::vector<double> max;

  std::size_t channels() const { return mean.size(); }
  double apply(std::size_t channel, double value) const;
  double invert(std::size_t channel, double value) const;
  /// Scales every column of a [channels x T] window.
  net::Tensor apply(const net::Tensor& window) const;
  net::Tensor invert(const net::Tensor& window) const;
};

/// Keeps samples 0, factor, 2*factor, ... of one cycle (at least one).
/// Returns steps x kInputChannels, row-major.
std::vector<double> subsample(const CycleRecord& cycle, int factor);
std::vector<std::vector<double>> subsample(const UnitTrajectory& unit, int factor);

/// One [channels x size] window ending at every step of `steps`
/// (steps x channels, row-major). Windows that reach before the first step
/// are left-padded with `pad`.
std::vector<net::Tensor> make_windows(std::span<const double> steps, std::size_t channels,
                                      std::size_t size = 50, std::size_t stride = 1,
                                      double pad = 0.0);

/// Fits over every subsampled step of the given units. Throws InputError
/// naming the channel if one has zero variance (or zero range for min-max).
ScalerStats fit_scaler(const std::vector<UnitTrajectory>& units, int subsample_factor,
                       ScalingMode mode);
ScalerStats fit_scaler(std::span<const double> steps, std::size_t channels, ScalingMode mode);

/// Piecewise-linear RUL per cycle: plateau at life - onset before the onset,
/// life - q afterwards.
std::vector<double> rul_targets(const UnitTrajectory& unit);

/// c_j = 1 iff min(theta_eff_j, theta_flow_j) <= tau.
std::vector<double> binarize_concepts(std::span<const double> theta_eff,
                                      std::span<const double> theta_flow, double tau);

/// Input channel name for index (x1..x14, w1..w4).
std::string channel_name(std::size_t channel);

/// One training example.
struct Sample {
  net::Tensor window;  // [18 x window]
  double rul_target = 0.0;
  std::vector<double> concepts;
  std::size_t unit = 0;  // index into SampleSet::units()
  int cycle = 0;         // 1-based
};

/// Scaled, windowed view of a set of units. Windows are assembled on demand
/// from per-cycle scaled steps.
class SampleSet {
 public:
  struct UnitInfo {
    std::string key;
    std::string fleet;
    int unit_id = 0;
    std::size_t first_cycle_slot = 0;  // index into cycle slots
    std::size_t cycle_count = 0;
  };
  struct CycleSlot {
    std::size_t unit = 0;
    int cycle = 0;
    int health_state = 0;
    double rul = 0.0;  // cycles, unscaled
    std::vector<double> concepts;
    std::vector<double> steps;  // scaled, steps x channels
    std::size_t first_sample = 0;
    std::size_t sample_count = 0;
  };

  /// `concept_subset` selects which components become concepts (empty = all).
  static SampleSet build(const std::vector<UnitTrajectory>& units, const ScalerStats& scaler,
                         const PreprocessOptions& options,
                         const std::vector<std::size_t>& concept_subset = {});

  std::size_t size() const { return sample_slot_.size(); }
  std::size_t concepts() const { return concept_count_; }
  std::size_t channels() const { return channels_; }
  std::size_t window_size() const { return window_; }

  const std::vector<UnitInfo>& units() const { return units_; }
  const std::vector<CycleSlot>& cycles() const { return slots_; }
  const CycleSlot& slot_of(std::size_t sample) const { return slots_[sample_slot_[sample]]; }

  Sample sample(std::size_t i) const;
  double rul_target(std::size_t i) const { return slot_of(i).rul / kRulScale; }

  /// Writes windows, scaled targets and concept labels of the given samples.
  void fill_batch(std::span<const std::size_t> indices, net::Tensor& windows,
                  net::Tensor& targets, net::Tensor& concepts) const;
  void fill_window(std::size_t i, double* out) const;

  /// Sample indices [begin, end) belonging to a unit.
  std::pair<std::size_t, std::size_t> unit_samples(std::size_t unit) const;

 private:
  std::vector<UnitInfo> units_;
  std::vector<CycleSlot> slots_;
  std::vector<std::size_t> sample_slot_;
  std::vector<std::size_t> sample_step_;
  std::size_t concept_count_ = 0;
  std::size_t channels_ = kInputChannels;
  std::size_t window_ = 50;
};

}  // namespace cbmrul::data
