#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cbmrul::data {

inline constexpr std::size_t kMeasurementChannels = 14;
inline constexpr std::size_t kOperatingChannels = 4;
/// Window channel order: x1..x14 followed by w1..w4.
inline constexpr std::size_t kInputChannels = kMeasurementChannels + kOperatingChannels;

/// Component labels of the modelled turbofan.
inline const std::vector<std::string>& turbofan_components() {
  static const std::vector<std::string> names{"Fan", "LPC", "HPC", "HPT", "LPT"};
  return names;
}

/// One operating cycle (flight) of a unit.
struct CycleRecord {
  int cycle = 0;  // 1-based
  int health_state = 0;
  /// Per component, aligned with UnitTrajectory::components.
  std::vector<double> theta_eff;
  std::vector<double> theta_flow;
  /// seconds x kInputChannels, row-major, channels x1..x14, w1..w4.
  std::vector<double> signals;

  std::size_t seconds() const { return signals.size() / kInputChannels; }
  const double* row(std::size_t second) const { return signals.data() + second * kInputChannels; }
};

/// One asset's full run-to-failure record.
struct UnitTrajectory {
  std::string fleet;
  int unit_id = 0;
  std::vector<std::string> components;
  std::vector<CycleRecord> cycles;

  std::size_t life() const { return cycles.size(); }
  /// "<fleet>:<unit>"
  std::string key() const { return fleet + ":" + std::to_string(unit_id); }
  /// min(eff, flow) for component j at 0-based cycle index q.
  double theta(std::size_t q, std::size_t component) const;
  /// First 1-based cycle with hs = 1, or life()+1 if the unit never leaves health.
  int onset_cycle() const;
};

struct Fleet {
  std::string name;
  std::vector<std::string> components;
  std::vector<UnitTrajectory> units;
};

}  // namespace cbmrul::data
