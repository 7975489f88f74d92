#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbmrul/data/fleet.hpp"

namespace cbmrul::data {

enum class DegradationShape { Linear, Exponential };

DegradationShape parse_shape(const std::string& name);
std::string to_string(DegradationShape shape);

template <class T>
struct Range {
  T min{};
  T max{};
};

/// Parameters of one synthetic fleet.
///
/// Operating conditions are synthetic: each channel is a flight-profile bump
/// plus a mean-reverting random walk. Measurements follow
///   x_m(t) = sum_c a[m][c] * w_c(t) + sum_j b[m][j] * theta_j(cycle) + noise,
/// with (a, b) drawn from `signature_seed` so fleets of one scenario share
/// them. `signature_similarity` in [0,1] blends every column of b towards a
/// common column, which makes component faults hard to tell apart.
struct GeneratorConfig {
  std::string fleet_name = "fleet";
  std::vector<std::string> components{"HPT", "LPT"};
  std::vector<std::string> faulty_components{"HPT"};
  bool require_faults = true;
  int n_units = 10;
  Range<int> cycles{36, 44};
  Range<int> seconds_per_cycle{200, 300};
  Range<double> onset_fraction{0.3, 0.5};
  DegradationShape shape = DegradationShape::Linear;
  double exponential_rate = 3.0;
  double degradation_depth = -0.01;
  double sensor_noise_std = 0.05;
  double signature_gain = 150.0;
  double signature_similarity = 0.0;
  int n_measurements = static_cast<int>(kMeasurementChannels);
  int n_op_conditions = static_cast<int>(kOperatingChannels);
  double tau = -0.0015;
  std::uint64_t seed = 1;
  std::uint64_t signature_seed = 1;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
};

/// Coefficients of the linear measurement model.
struct SignatureModel {
  /// kMeasurementChannels x kOperatingChannels
  std::vector<double> operating;
  /// kMeasurementChannels x n_components
  std::vector<double> degradation;
  std::size_t n_components = 0;

  /// Noise-free x_m for one second.
  double measurement(std::size_t m, const double* w, const std::vector<double>& theta) const;
};

SignatureModel make_signature_model(const GeneratorConfig& config);

/// Normalized degradation progress in [0,1] -> theta in [depth, 0].
double degradation_profile(DegradationShape shape, double progress, double depth,
                           double exponential_rate);

Fleet generate_fleet(const GeneratorConfig& config);

/// Labeled train/test partition over several fleets. Every unit is aligned
/// to the scenario's concept list (components missing from a fleet get
/// theta = 0).
struct Scenario {
  std::vector<std::string> concepts;
  std::vector<std::pair<std::size_t, std::size_t>> concept_pairs;
  std::vector<UnitTrajectory> train;
  std::vector<UnitTrajectory> test;
};

/// Splits each fleet by unit id. Ids must be disjoint and the test list
/// non-empty. `concepts` empty means the union of fleet components in order
/// of appearance.
Scenario make_scenario(const std::vector<Fleet>& fleets, const std::vector<int>& train_units,
                       const std::vector<int>& test_units,
                       std::vector<std::string> concepts = {},
                       const std::vector<std::pair<std::string, std::string>>& pairs = {});

/// Re-expresses a unit over a different component list.
UnitTrajectory align_components(const UnitTrajectory& unit,
                                const std::vector<std::string>& components);

}  // namespace cbmrul::data
