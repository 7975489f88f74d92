#include "cbmrul/data/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "cbmrul/net/rng.hpp"
#include "cbmrul/net/tensor.hpp"

namespace cbmrul::data {

double UnitTrajectory::theta(std::size_t q, std::size_t component) const {
  const CycleRecord& c = cycles.at(q);
  return std::min(c.theta_eff.at(component), c.theta_flow.at(component));
}

int UnitTrajectory::onset_cycle() const {
  for (const auto& c : cycles) {
    if (c.health_state == 1) return c.cycle;
  }
  return static_cast<int>(cycles.size()) + 1;
}

DegradationShape parse_shape(const std::string& name) {
  if (name == "linear") return DegradationShape::Linear;
  if (name == "exponential") return DegradationShape::Exponential;
  throw ConfigError("unknown degradation shape '" + name + "'");
}

std::string to_string(DegradationShape shape) {
  return shape == DegradationShape::Linear ? "linear" : "exponential";
}

void GeneratorConfig::validate() const {
  if (components.empty()) throw ConfigError("generator: no components");
  if (n_units <= 0) throw ConfigError("generator: n_units must be positive");
  if (cycles.min < 2 || cycles.max < cycles.min) {
    throw ConfigError("generator: cycles range must satisfy 2 <= min <= max");
  }
  if (seconds_per_cycle.min < 1 || seconds_per_cycle.max < seconds_per_cycle.min) {
    throw ConfigError("generator: seconds_per_cycle range must satisfy 1 <= min <= max");
  }
  if (!(onset_fraction.min > 0.0) || !(onset_fraction.max < 1.0) ||
      onset_fraction.max < onset_fraction.min) {
    throw ConfigError("generator: onset_fraction must lie strictly inside (0,1)");
  }
  if (!(degradation_depth < tau)) {
    throw ConfigError("generator: degradation_depth must be below tau so faults activate");
  }
  if (sensor_noise_std < 0.0) throw ConfigError("generator: sensor_noise_std must be >= 0");
  if (signature_similarity < 0.0 || signature_similarity > 1.0) {
    throw ConfigError("generator: signature_similarity must be in [0,1]");
  }
  if (n_measurements != static_cast<int>(kMeasurementChannels) ||
      n_op_conditions != static_cast<int>(kOperatingChannels)) {
    throw ConfigError("generator: exactly 14 measurements and 4 operating conditions supported");
  }
  if (require_faults && faulty_components.empty()) {
    throw ConfigError("generator: fleet '" + fleet_name + "' has no fault assignment");
  }
  for (const auto& f : faulty_components) {
    if (std::find(components.begin(), components.end(), f) == components.end()) {
      throw ConfigError("generator: faulty component '" + f + "' is not a component");
    }
  }
}

double SignatureModel::measurement(std::size_t m, const double* w,
                                   const std::vector<double>& theta) const {
  double v = 0.0;
  for (std::size_t c = 0; c < kOperatingChannels; ++c) {
    v += operating[m * kOperatingChannels + c] * w[c];
  }
  for (std::size_t j = 0; j < n_components; ++j) {
    v += degradation[m * n_components + j] * theta[j];
  }
  return v;
}

SignatureModel make_signature_model(const GeneratorConfig& config) {
  Rng rng = make_rng(config.signature_seed, "signatures");
  SignatureModel model;
  model.n_components = config.components.size();
  model.operating.resize(kMeasurementChannels * kOperatingChannels);
  for (double& a : model.operating) a = uniform(rng, -1.0, 1.0);
  std::vector<double> common(kMeasurementChannels);
  for (double& c : common) c = uniform(rng, -1.0, 1.0);
  model.degradation.resize(kMeasurementChannels * model.n_components);
  const double rho = config.signature_similarity;
  for (std::size_t m = 0; m < kMeasurementChannels; ++m) {
    for (std::size_t j = 0; j < model.n_components; ++j) {
      const double own = uniform(rng, -1.0, 1.0);
      model.degradation[m * model.n_components + j] =
          config.signature_gain * (rho * common[m] + (1.0 - rho) * own);
    }
  }
  return model;
}

double degradation_profile(DegradationShape shape, double progress, double depth,
                           double exponential_rate) {
  progress = std::clamp(progress, 0.0, 1.0);
  if (shape == DegradationShape::Linear) return depth * progress;
  return depth * std::expm1(exponential_rate * progress) / std::expm1(exponential_rate);
}

namespace {

UnitTrajectory generate_unit(const GeneratorConfig& config, const SignatureModel& signatures,
                             int unit_id, Rng& rng) {
  const std::size_t k = config.components.size();
  UnitTrajectory unit;
  unit.fleet = config.fleet_name;
  unit.unit_id = unit_id;
  unit.components = config.components;

  const int life = static_cast<int>(uniform_int(rng, config.cycles.min, config.cycles.max));

  // Per-component onset cycle; 0 marks a healthy component.
  std::vector<int> onset(k, 0);
  std::vector<double> eff_scale(k, 1.0), flow_scale(k, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    const bool faulty = std::find(config.faulty_components.begin(),
                                  config.faulty_components.end(),
                                  config.components[j]) != config.faulty_components.end();
    const double fraction = uniform(rng, config.onset_fraction.min, config.onset_fraction.max);
    double s_eff = uniform(rng, 0.5, 1.0);
    double s_flow = uniform(rng, 0.5, 1.0);
    const double top = std::max(s_eff, s_flow);
    eff_scale[j] = s_eff / top;
    flow_scale[j] = s_flow / top;
    if (faulty) {
      onset[j] = std::clamp(static_cast<int>(std::lround(fraction * life)), 1, life - 1);
    }
  }
  int first_onset = 0;
  for (int q : onset) {
    if (q > 0 && (first_onset == 0 || q < first_onset)) first_onset = q;
  }

  std::vector<double> walk(kOperatingChannels, 0.0);
  std::vector<double> theta(k, 0.0);
  unit.cycles.reserve(static_cast<std::size_t>(life));
  for (int q = 1; q <= life; ++q) {
    CycleRecord rec;
    rec.cycle = q;
    rec.health_state = (first_onset > 0 && q >= first_onset) ? 1 : 0;
    rec.theta_eff.assign(k, 0.0);
    rec.theta_flow.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      theta[j] = 0.0;
      if (onset[j] > 0 && q > onset[j]) {
        const double progress =
            static_cast<double>(q - onset[j]) / static_cast<double>(life - onset[j]);
        theta[j] = degradation_profile(config.shape, progress, config.degradation_depth,
                                       config.exponential_rate);
      }
      rec.theta_eff[j] = theta[j] * eff_scale[j];
      rec.theta_flow[j] = theta[j] * flow_scale[j];
      // min(eff, flow) reproduces theta exactly: one scale is 1.
      theta[j] = std::min(rec.theta_eff[j], rec.theta_flow[j]);
    }

    const int seconds = static_cast<int>(
        uniform_int(rng, config.seconds_per_cycle.min, config.seconds_per_cycle.max));
    std::vector<double> level(kOperatingChannels), bump(kOperatingChannels);
    for (std::size_t c = 0; c < kOperatingChannels; ++c) {
      level[c] = 0.5 * standard_normal(rng);
      bump[c] = uniform(rng, 0.5, 1.5);
    }
    rec.signals.resize(static_cast<std::size_t>(seconds) * kInputChannels);
    for (int t = 0; t < seconds; ++t) {
      double* row = rec.signals.data() + static_cast<std::size_t>(t) * kInputChannels;
      const double phase = std::sin(std::numbers::pi * (t + 0.5) / seconds);
      double* w = row + kMeasurementChannels;
      for (std::size_t c = 0; c < kOperatingChannels; ++c) {
        walk[c] = 0.98 * walk[c] + 0.05 * standard_normal(rng);
        w[c] = level[c] + bump[c] * phase + walk[c];
      }
      for (std::size_t m = 0; m < kMeasurementChannels; ++m) {
        double noise = 0.0;
        if (config.sensor_noise_std > 0.0) noise = config.sensor_noise_std * standard_normal(rng);
        row[m] = signatures.measurement(m, w, theta) + noise;
      }
    }
    unit.cycles.push_back(std::move(rec));
  }
  return unit;
}

}  // namespace

Fleet generate_fleet(const GeneratorConfig& config) {
  config.validate();
  const SignatureModel signatures = make_signature_model(config);
  Rng rng = make_rng(config.seed, "fleet/" + config.fleet_name);
  Fleet fleet;
  fleet.name = config.fleet_name;
  fleet.components = config.components;
  for (int u = 1; u <= config.n_units; ++u) {
    fleet.units.push_back(generate_unit(config, signatures, u, rng));
  }
  return fleet;
}

UnitTrajectory align_components(const UnitTrajectory& unit,
                                const std::vector<std::string>& components) {
  UnitTrajectory out;
  out.fleet = unit.fleet;
  out.unit_id = unit.unit_id;
  out.components = components;
  std::vector<int> source(components.size(), -1);
  for (std::size_t j = 0; j < components.size(); ++j) {
    auto it = std::find(unit.components.begin(), unit.components.end(), components[j]);
    if (it != unit.components.end()) source[j] = static_cast<int>(it - unit.components.begin());
  }
  out.cycles.reserve(unit.cycles.size());
  for (const auto& c : unit.cycles) {
    CycleRecord rec;
    rec.cycle = c.cycle;
    rec.health_state = c.health_state;
    rec.signals = c.signals;
    rec.theta_eff.assign(components.size(), 0.0);
    rec.theta_flow.assign(components.size(), 0.0);
    for (std::size_t j = 0; j < components.size(); ++j) {
      if (source[j] < 0) continue;
      rec.theta_eff[j] = c.theta_eff[static_cast<std::size_t>(source[j])];
      rec.theta_flow[j] = c.theta_flow[static_cast<std::size_t>(source[j])];
    }
    out.cycles.push_back(std::move(rec));
  }
  return out;
}

Scenario make_scenario(const std::vector<Fleet>& fleets, const std::vector<int>& train_units,
                       const std::vector<int>& test_units, std::vector<std::string> concepts,
                       const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (test_units.empty()) throw ConfigError("scenario: test unit list is empty");
  if (fleets.empty()) throw ConfigError("scenario: no fleets");
  std::set<int> train_set(train_units.begin(), train_units.end());
  for (int id : test_units) {
    if (train_set.count(id)) {
      throw ConfigError("scenario: unit " + std::to_string(id) + " is in both train and test");
    }
  }
  if (concepts.empty()) {
    for (const auto& f : fleets) {
      for (const auto& c : f.components) {
        if (std::find(concepts.begin(), concepts.end(), c) == concepts.end()) {
          concepts.push_back(c);
        }
      }
    }
  }
  Scenario s;
  s.concepts = concepts;
  auto index_of = [&](const std::string& name) {
    auto it = std::find(concepts.begin(), concepts.end(), name);
    if (it == concepts.end()) throw ConfigError("scenario: unknown concept '" + name + "'");
    return static_cast<std::size_t>(it - concepts.begin());
  };
  for (const auto& [a, b] : pairs) s.concept_pairs.emplace_back(index_of(a), index_of(b));

  std::set<int> test_set(test_units.begin(), test_units.end());
  for (const auto& f : fleets) {
    for (const auto& u : f.units) {
      if (train_set.count(u.unit_id)) s.train.push_back(align_components(u, concepts));
      if (test_set.count(u.unit_id)) s.test.push_back(align_components(u, concepts));
    }
  }
  if (s.test.empty()) throw ConfigError("scenario: no units matched the test ids");
  return s;
}

}  // namespace cbmrul::data
