#include "cbmrul/data/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace cbmrul::data {

ScalingMode parse_scaling(const std::string& name) {
  if (name == "standard") return ScalingMode::Standard;
  if (name == "minmax") return ScalingMode::MinMax;
  throw ConfigError("unknown scaling mode '" + name + "'");
}

std::string to_string(ScalingMode mode) {
  return mode == ScalingMode::Standard ? "standard" : "minmax";
}

std::string channel_name(std::size_t channel) {
  if (channel < kMeasurementChannels) return "x" + std::to_string(channel + 1);
  return "w" + std::to_string(channel - kMeasurementChannels + 1);
}

double ScalerStats::apply(std::size_t channel, double value) const {
  if (mode == ScalingMode::Standard) return (value - mean[channel]) / stddev[channel];
  return (value - min[channel]) / (max[channel] - min[channel]);
}

double ScalerStats::invert(std::size_t channel, double value) const {
  if (mode == ScalingMode::Standard) return value * stddev[channel] + mean[channel];
  return value * (max[channel] - min[channel]) + min[channel];
}

net::Tensor ScalerStats::apply(const net::Tensor& window) const {
  if (window.rank() != 2 || window.dim(0) != channels()) {
    throw ConfigError("scaler expects a [" + std::to_string(channels()) + " x T] window");
  }
  net::Tensor out = window;
  for (std::size_t c = 0; c < window.dim(0); ++c) {
    for (std::size_t t = 0; t < window.dim(1); ++t) out.at(c, t) = apply(c, window.at(c, t));
  }
  return out;
}

net::Tensor ScalerStats::invert(const net::Tensor& window) const {
  if (window.rank() != 2 || window.dim(0) != channels()) {
    throw ConfigError("scaler expects a [" + std::to_string(channels()) + " x T] window");
  }
  net::Tensor out = window;
  for (std::size_t c = 0; c < window.dim(0); ++c) {
    for (std::size_t t = 0; t < window.dim(1); ++t) out.at(c, t) = invert(c, window.at(c, t));
  }
  return out;
}

std::vector<double> subsample(const CycleRecord& cycle, int factor) {
  if (factor < 1) throw ConfigError("subsample factor must be >= 1");
  const std::size_t n = cycle.seconds();
  std::vector<double> out;
  out.reserve((n / factor + 1) * kInputChannels);
  for (std::size_t t = 0; t < n; t += static_cast<std::size_t>(factor)) {
    out.insert(out.end(), cycle.row(t), cycle.row(t) + kInputChannels);
  }
  return out;
}

std::vector<std::vector<double>> subsample(const UnitTrajectory& unit, int factor) {
  std::vector<std::vector<double>> out;
  out.reserve(unit.cycles.size());
  for (const auto& c : unit.cycles) out.push_back(subsample(c, factor));
  return out;
}

std::vector<net::Tensor> make_windows(std::span<const double> steps, std::size_t channels,
                                      std::size_t size, std::size_t stride, double pad) {
  if (channels == 0 || steps.size() % channels != 0) {
    throw ConfigError("make_windows: step matrix is not a multiple of the channel count");
  }
  if (size == 0 || stride == 0) throw ConfigError("make_windows: size and stride must be positive");
  const std::size_t n = steps.size() / channels;
  if (n == 0) throw InputError("make_windows: no steps");
  std::vector<net::Tensor> out;
  for (std::size_t end = 0; end < n; end += stride) {
    net::Tensor w({channels, size}, pad);
    for (std::size_t col = 0; col < size; ++col) {
      const long step = static_cast<long>(end) - static_cast<long>(size - 1 - col);
      if (step < 0) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        w.at(c, col) = steps[static_cast<std::size_t>(step) * channels + c];
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

ScalerStats fit_scaler(std::span<const double> steps, std::size_t channels, ScalingMode mode) {
  if (channels == 0 || steps.size() % channels != 0) {
    throw ConfigError("fit_scaler: step matrix is not a multiple of the channel count");
  }
  const std::size_t n = steps.size() / channels;
  if (n == 0) throw InputError("fit_scaler: no training data");
  ScalerStats s;
  s.mode = mode;
  s.mean.assign(channels, 0.0);
  s.stddev.assign(channels, 0.0);
  s.min.assign(channels, INFINITY);
  s.max.assign(channels, -INFINITY);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = steps[t * channels + c];
      s.mean[c] += v;
      s.min[c] = std::min(s.min[c], v);
      s.max[c] = std::max(s.max[c], v);
    }
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = steps[t * channels + c] - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    s.stddev[c] = std::sqrt(s.stddev[c] / static_cast<double>(n));
    const bool degenerate = mode == ScalingMode::Standard ? !(s.stddev[c] > 0.0)
                                                          : !(s.max[c] > s.min[c]);
    if (degenerate) {
      throw InputError("fit_scaler: channel " + channel_name(c) + " has zero variance");
    }
  }
  return s;
}

ScalerStats fit_scaler(const std::vector<UnitTrajectory>& units, int subsample_factor,
                       ScalingMode mode) {
  std::vector<double> all;
  for (const auto& u : units) {
    for (const auto& c : u.cycles) {
      auto steps = subsample(c, subsample_factor);
      all.insert(all.end(), steps.begin(), steps.end());
    }
  }
  return fit_scaler(all, kInputChannels, mode);
}

std::vector<double> rul_targets(const UnitTrajectory& unit) {
  const int life = static_cast<int>(unit.life());
  const int onset = std::min(unit.onset_cycle(), life);
  std::vector<double> out(unit.cycles.size());
  for (int q = 1; q <= life; ++q) {
    out[static_cast<std::size_t>(q - 1)] = q < onset ? life - onset : life - q;
  }
  return out;
}

std::vector<double> binarize_concepts(std::span<const double> theta_eff,
                                      std::span<const double> theta_flow, double tau) {
  if (theta_eff.size() != theta_flow.size()) {
    throw ConfigError("binarize_concepts: eff/flow size mismatch");
  }
  std::vector<double> c(theta_eff.size());
  for (std::size_t j = 0; j < c.size(); ++j) {
    c[j] = std::min(theta_eff[j], theta_flow[j]) <= tau ? 1.0 : 0.0;
  }
  return c;
}

SampleSet SampleSet::build(const std::vector<UnitTrajectory>& units, const ScalerStats& scaler,
                           const PreprocessOptions& options,
                           const std::vector<std::size_t>& concept_subset) {
  if (scaler.channels() != kInputChannels) throw ConfigError("scaler channel count mismatch");
  if (options.window < 1) throw ConfigError("window size must be positive");
  SampleSet set;
  set.window_ = static_cast<std::size_t>(options.window);
  for (const auto& unit : units) {
    std::vector<std::size_t> subset = concept_subset;
    if (subset.empty()) {
      for (std::size_t j = 0; j < unit.components.size(); ++j) subset.push_back(j);
    }
    for (std::size_t j : subset) {
      if (j >= unit.components.size()) throw ConfigError("concept index out of range");
    }
    if (set.units_.empty()) {
      set.concept_count_ = subset.size();
    } else if (set.concept_count_ != subset.size()) {
      throw ConfigError("units disagree on concept count");
    }
    UnitInfo info;
    info.key = unit.key();
    info.fleet = unit.fleet;
    info.unit_id = unit.unit_id;
    info.first_cycle_slot = set.slots_.size();
    info.cycle_count = unit.cycles.size();
    const std::size_t unit_index = set.units_.size();
    set.units_.push_back(info);

    const auto rul = rul_targets(unit);
    for (std::size_t q = 0; q < unit.cycles.size(); ++q) {
      const CycleRecord& rec = unit.cycles[q];
      CycleSlot slot;
      slot.unit = unit_index;
      slot.cycle = rec.cycle;
      slot.health_state = rec.health_state;
      slot.rul = rul[q];
      const auto all = binarize_concepts(rec.theta_eff, rec.theta_flow, options.tau);
      for (std::size_t j : subset) slot.concepts.push_back(all[j]);
      slot.steps = subsample(rec, options.subsample);
      const std::size_t n = slot.steps.size() / kInputChannels;
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < kInputChannels; ++c) {
          double& v = slot.steps[t * kInputChannels + c];
          v = scaler.apply(c, v);
        }
      }
      slot.first_sample = set.sample_slot_.size();
      slot.sample_count = n;
      for (std::size_t t = 0; t < n; ++t) {
        set.sample_slot_.push_back(set.slots_.size());
        set.sample_step_.push_back(t);
      }
      set.slots_.push_back(std::move(slot));
    }
  }
  return set;
}

void SampleSet::fill_window(std::size_t i, double* out) const {
  const CycleSlot& slot = slot_of(i);
  const std::size_t end = sample_step_[i];
  const std::size_t w = window_;
  for (std::size_t col = 0; col < w; ++col) {
    const long step = static_cast<long>(end) - static_cast<long>(w - 1 - col);
    if (step < 0) {
      for (std::size_t c = 0; c < channels_; ++c) out[c * w + col] = 0.0;
      continue;
    }
    const double* src = slot.steps.data() + static_cast<std::size_t>(step) * channels_;
    for (std::size_t c = 0; c < channels_; ++c) out[c * w + col] = src[c];
  }
}

Sample SampleSet::sample(std::size_t i) const {
  const CycleSlot& slot = slot_of(i);
  Sample s;
  s.window = net::Tensor({channels_, window_});
  fill_window(i, s.window.data());
  s.rul_target = slot.rul / kRulScale;
  s.concepts = slot.concepts;
  s.unit = slot.unit;
  s.cycle = slot.cycle;
  return s;
}

void SampleSet::fill_batch(std::span<const std::size_t> indices, net::Tensor& windows,
                           net::Tensor& targets, net::Tensor& concepts) const {
  const std::size_t b = indices.size();
  const std::size_t k = concept_count_;
  if (windows.shape() != net::Shape{b, channels_, window_}) {
    windows = net::Tensor({b, channels_, window_});
  }
  if (targets.shape() != net::Shape{b, 1}) targets = net::Tensor({b, 1});
  if (concepts.shape() != net::Shape{b, k}) concepts = net::Tensor({b, k});
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t i = indices[r];
    fill_window(i, windows.data() + r * channels_ * window_);
    const CycleSlot& slot = slot_of(i);
    targets[r] = slot.rul / kRulScale;
    for (std::size_t j = 0; j < k; ++j) concepts[r * k + j] = slot.concepts[j];
  }
}

std::pair<std::size_t, std::size_t> SampleSet::unit_samples(std::size_t unit) const {
  const UnitInfo& info = units_.at(unit);
  if (info.cycle_count == 0) return {0, 0};
  const CycleSlot& first = slots_[info.first_cycle_slot];
  const CycleSlot& last = slots_[info.first_cycle_slot + info.cycle_count - 1];
  return {first.first_sample, last.first_sample + last.sample_count};
}

}  // namespace cbmrul::data
