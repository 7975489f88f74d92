#include "cbmrul/app/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cbmrul/net/rng.hpp"

namespace cbmrul::app {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& section, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

template <class T>
T get_or(const json& obj, const std::string& key, const T& fallback, const std::string& section) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + " has the wrong type");
  }
}

template <class T>
data::Range<T> get_range(const json& obj, const std::string& key, data::Range<T> fallback,
                         const std::string& section) {
  if (!obj.contains(key)) return fallback;
  const auto v = get_or<std::vector<T>>(obj, key, {}, section);
  if (v.size() != 2) throw ConfigError(section + "." + key + " must be [min, max]");
  return {v[0], v[1]};
}

const std::set<std::string>& generator_keys() {
  static const std::set<std::string> keys{
      "components",       "faulty_components", "require_faults",    "n_units",
      "cycles",           "seconds_per_cycle", "onset_fraction",    "shape",
      "exponential_rate", "degradation_depth", "sensor_noise_std",  "signature_gain",
      "signature_similarity", "signature_seed", "n_measurements", "n_op_conditions"};
  return keys;
}

void apply_generator(const json& j, data::GeneratorConfig& g, const std::string& section) {
  g.components = get_or(j, "components", g.components, section);
  g.faulty_components = get_or(j, "faulty_components", g.faulty_components, section);
  g.require_faults = get_or(j, "require_faults", g.require_faults, section);
  g.n_units = get_or(j, "n_units", g.n_units, section);
  g.cycles = get_range(j, "cycles", g.cycles, section);
  g.seconds_per_cycle = get_range(j, "seconds_per_cycle", g.seconds_per_cycle, section);
  g.onset_fraction = get_range(j, "onset_fraction", g.onset_fraction, section);
  if (j.contains("shape")) g.shape = data::parse_shape(get_or<std::string>(j, "shape", "", section));
  g.exponential_rate = get_or(j, "exponential_rate", g.exponential_rate, section);
  g.degradation_depth = get_or(j, "degradation_depth", g.degradation_depth, section);
  g.sensor_noise_std = get_or(j, "sensor_noise_std", g.sensor_noise_std, section);
  g.signature_gain = get_or(j, "signature_gain", g.signature_gain, section);
  g.signature_similarity = get_or(j, "signature_similarity", g.signature_similarity, section);
  g.signature_seed = get_or(j, "signature_seed", g.signature_seed, section);
  g.n_measurements = get_or(j, "n_measurements", g.n_measurements, section);
  g.n_op_conditions = get_or(j, "n_op_conditions", g.n_op_conditions, section);
}

json generator_json(const data::GeneratorConfig& g) {
  return {{"name", g.fleet_name},
          {"components", g.components},
          {"faulty_components", g.faulty_components},
          {"require_faults", g.require_faults},
          {"n_units", g.n_units},
          {"cycles", {g.cycles.min, g.cycles.max}},
          {"seconds_per_cycle", {g.seconds_per_cycle.min, g.seconds_per_cycle.max}},
          {"onset_fraction", {g.onset_fraction.min, g.onset_fraction.max}},
          {"shape", data::to_string(g.shape)},
          {"exponential_rate", g.exponential_rate},
          {"degradation_depth", g.degradation_depth},
          {"sensor_noise_std", g.sensor_noise_std},
          {"signature_gain", g.signature_gain},
          {"signature_similarity", g.signature_similarity},
          {"signature_seed", g.signature_seed},
          {"n_measurements", g.n_measurements},
          {"n_op_conditions", g.n_op_conditions},
          {"seed", g.seed}};
}

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys{"family",  "name",          "epochs",     "batch_size",
                                          "lr",      "lambda",        "latent_dim", "embed_dim",
                                          "randint_prob", "extra_capacity", "seed"};
  return keys;
}

void apply_training(const json& j, model::ModelConfig& m, const std::string& section) {
  m.epochs = get_or(j, "epochs", m.epochs, section);
  m.batch_size = get_or(j, "batch_size", m.batch_size, section);
  m.lr = get_or(j, "lr", m.lr, section);
  m.lambda = get_or(j, "lambda", m.lambda, section);
  m.latent_dim = get_or(j, "latent_dim", m.latent_dim, section);
  m.embed_dim = get_or(j, "embed_dim", m.embed_dim, section);
  m.randint_prob = get_or(j, "randint_prob", m.randint_prob, section);
  m.extra_capacity = get_or(j, "extra_capacity", m.extra_capacity, section);
  m.seed = get_or(j, "seed", m.seed, section);
}

std::filesystem::path resolve_path(const std::filesystem::path& p,
                                   const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::vector<data::GeneratorConfig> default_fleets() {
  data::GeneratorConfig hpt;
  hpt.fleet_name = "DS_HPT";
  hpt.faulty_components = {"HPT"};
  data::GeneratorConfig lpt = hpt;
  lpt.fleet_name = "DS_LPT";
  lpt.faulty_components = {"LPT"};
  return {hpt, lpt};
}

}  // namespace

std::filesystem::path ExperimentConfig::resolved_data_dir() const {
  return data_dir.empty() ? output_dir / "data" : data_dir;
}

const ModelSpec& ExperimentConfig::model(const std::string& name) const {
  for (const auto& m : models) {
    if (m.name == name) return m;
  }
  throw ConfigError("no model named '" + name + "' in the config");
}

void ExperimentConfig::validate() const {
  if (fleets.empty()) throw ConfigError("scenario needs at least one fleet");
  std::set<std::string> names;
  std::set<std::string> components;
  for (const auto& f : fleets) {
    f.validate();
    if (!names.insert(f.fleet_name).second) {
      throw ConfigError("duplicate fleet name '" + f.fleet_name + "'");
    }
    components.insert(f.components.begin(), f.components.end());
  }
  for (const auto& c : concepts) {
    if (!components.count(c)) throw ConfigError("concept '" + c + "' is not a fleet component");
  }
  const auto& all = concepts.empty() ? std::vector<std::string>(components.begin(), components.end())
                                     : concepts;
  auto known = [&](const std::string& c) {
    return std::find(all.begin(), all.end(), c) != all.end();
  };
  for (const auto& [a, b] : concept_pairs) {
    if (!known(a) || !known(b) || a == b) {
      throw ConfigError("concept pair " + a + "+" + b + " does not name two scenario concepts");
    }
  }
  if (test_units.empty()) throw ConfigError("scenario.test_units is empty");
  std::set<int> train(train_units.begin(), train_units.end());
  for (int u : test_units) {
    if (train.count(u)) throw ConfigError("unit " + std::to_string(u) + " is in both splits");
  }
  if (preprocess.subsample < 1) throw ConfigError("preprocess.subsample must be >= 1");
  if (preprocess.window < 1) throw ConfigError("preprocess.window must be >= 1");
  if (models.empty()) throw ConfigError("no models configured");
  std::set<std::string> model_names;
  for (const auto& m : models) {
    if (!model_names.insert(m.name).second) {
      throw ConfigError("duplicate model name '" + m.name + "'");
    }
    m.config.validate();
  }
  intervention.policy.validate();
  if (intervention.bucket_width < 1) throw ConfigError("intervention.bucket_width must be >= 1");
  if (export_options.split != "train" && export_options.split != "test") {
    throw ConfigError("export.split must be train or test");
  }
  if (service.split != "train" && service.split != "test") {
    throw ConfigError("service.split must be train or test");
  }
  if (evaluation.cas_clusters.empty()) throw ConfigError("evaluation.cas_clusters is empty");
  for (std::size_t c : evaluation.cas_clusters) {
    if (c < 1) throw ConfigError("evaluation.cas_clusters entries must be >= 1");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              std::optional<std::uint64_t> seed,
                              std::optional<std::filesystem::path> output_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"seed", "output_dir", "data_dir", "generator", "fleets", "scenario", "preprocess",
              "training", "models", "evaluation", "ablation", "intervention", "export", "service"});

  ExperimentConfig cfg;
  cfg.seed = seed.value_or(get_or(root, "seed", cfg.seed, "config"));
  cfg.output_dir = output_dir.value_or(
      resolve_path(get_or<std::string>(root, "output_dir", "out", "config"), base_dir));
  cfg.data_dir = resolve_path(get_or<std::string>(root, "data_dir", "", "config"), base_dir);

  const json preprocess = root.value("preprocess", json::object());
  check_keys(preprocess, "preprocess", {"subsample", "window", "scaling", "tau"});
  cfg.preprocess.subsample = get_or(preprocess, "subsample", cfg.preprocess.subsample, "preprocess");
  cfg.preprocess.window = get_or(preprocess, "window", cfg.preprocess.window, "preprocess");
  cfg.preprocess.scaling = data::parse_scaling(
      get_or<std::string>(preprocess, "scaling", data::to_string(cfg.preprocess.scaling), "preprocess"));
  cfg.preprocess.tau = get_or(preprocess, "tau", cfg.preprocess.tau, "preprocess");

  // Fleets: shared generator defaults, then per-fleet overrides.
  data::GeneratorConfig base;
  base.signature_seed = split_seed(cfg.seed, "signature");
  const json generator = root.value("generator", json::object());
  check_keys(generator, "generator", generator_keys());
  apply_generator(generator, base, "generator");
  if (root.contains("fleets")) {
    if (!root.at("fleets").is_array()) throw ConfigError("fleets must be an array");
    for (const auto& f : root.at("fleets")) {
      auto keys = generator_keys();
      keys.insert({"name", "seed"});
      check_keys(f, "fleets[]", keys);
      data::GeneratorConfig g = base;
      g.fleet_name = get_or<std::string>(f, "name", "", "fleets[]");
      if (g.fleet_name.empty()) throw ConfigError("every fleet needs a name");
      apply_generator(f, g, "fleets." + g.fleet_name);
      g.seed = get_or(f, "seed", split_seed(cfg.seed, "fleet/" + g.fleet_name), "fleets[]");
      cfg.fleets.push_back(std::move(g));
    }
  } else {
    for (auto g : default_fleets()) {
      const std::string name = g.fleet_name;
      const auto faulty = g.faulty_components;
      g = base;
      g.fleet_name = name;
      g.faulty_components = faulty;
      g.seed = split_seed(cfg.seed, "fleet/" + name);
      cfg.fleets.push_back(std::move(g));
    }
  }
  for (auto& g : cfg.fleets) g.tau = cfg.preprocess.tau;

  const json scenario = root.value("scenario", json::object());
  check_keys(scenario, "scenario", {"concepts", "pairs", "train_units", "test_units"});
  cfg.concepts = get_or(scenario, "concepts", cfg.concepts, "scenario");
  for (const auto& p : get_or(scenario, "pairs", std::vector<std::vector<std::string>>{}, "scenario")) {
    if (p.size() != 2) throw ConfigError("scenario.pairs entries must name two concepts");
    cfg.concept_pairs.emplace_back(p[0], p[1]);
  }
  cfg.train_units = get_or(scenario, "train_units", cfg.train_units, "scenario");
  cfg.test_units = get_or(scenario, "test_units", cfg.test_units, "scenario");

  model::ModelConfig training;
  training.seed = split_seed(cfg.seed, "model");
  training.window = static_cast<std::size_t>(cfg.preprocess.window);
  const json tj = root.value("training", json::object());
  {
    auto keys = model_keys();
    keys.erase("family");
    keys.erase("name");
    check_keys(tj, "training", keys);
  }
  apply_training(tj, training, "training");

  json models = root.value("models", json::array());
  if (!models.is_array()) throw ConfigError("models must be an array");
  if (models.empty()) {
    for (auto f : model::all_families()) models.push_back(model::to_string(f));
  }
  for (const auto& m : models) {
    ModelSpec spec;
    spec.config = training;
    if (m.is_string()) {
      spec.config.family = model::parse_family(m.get<std::string>());
      spec.name = m.get<std::string>();
    } else {
      check_keys(m, "models[]", model_keys());
      const auto family = get_or<std::string>(m, "family", "", "models[]");
      spec.config.family = model::parse_family(family);
      spec.name = get_or<std::string>(m, "name", family, "models[]");
      apply_training(m, spec.config, "models." + spec.name);
    }
    cfg.models.push_back(std::move(spec));
  }

  const json ev = root.value("evaluation", json::object());
  check_keys(ev, "evaluation", {"cas_clusters", "cas_max_samples"});
  cfg.evaluation.cas_clusters = get_or(ev, "cas_clusters", cfg.evaluation.cas_clusters, "evaluation");
  cfg.evaluation.cas_max_samples =
      get_or(ev, "cas_max_samples", cfg.evaluation.cas_max_samples, "evaluation");
  cfg.evaluation.seed = split_seed(cfg.seed, "evaluate");

  const json ab = root.value("ablation", json::object());
  check_keys(ab, "ablation", {"k_max", "families"});
  cfg.ablation.k_max = get_or(ab, "k_max", cfg.ablation.k_max, "ablation");
  if (ab.contains("families")) {
    cfg.ablation.families.clear();
    for (const auto& f : get_or(ab, "families", std::vector<std::string>{}, "ablation")) {
      cfg.ablation.families.push_back(model::parse_family(f));
    }
  }

  const json iv = root.value("intervention", json::object());
  check_keys(iv, "intervention",
             {"threshold", "sticky", "rearm_on_negative_inspection", "models", "bucket_width"});
  auto& pol = cfg.intervention.policy;
  pol.detection_threshold = get_or(iv, "threshold", pol.detection_threshold, "intervention");
  pol.sticky = get_or(iv, "sticky", pol.sticky, "intervention");
  pol.rearm_on_negative_inspection =
      get_or(iv, "rearm_on_negative_inspection", pol.rearm_on_negative_inspection, "intervention");
  cfg.intervention.models = get_or(iv, "models", cfg.intervention.models, "intervention");
  cfg.intervention.bucket_width = get_or(iv, "bucket_width", cfg.intervention.bucket_width, "intervention");

  const json ex = root.value("export", json::object());
  check_keys(ex, "export", {"model", "split"});
  cfg.export_options.model = get_or(ex, "model", cfg.export_options.model, "export");
  cfg.export_options.split = get_or(ex, "split", cfg.export_options.split, "export");

  const json sv = root.value("service", json::object());
  check_keys(sv, "service", {"host", "port", "session_ttl_seconds", "cors_origin", "checkpoints", "split"});
  auto& s = cfg.service;
  s.host = get_or(sv, "host", s.host, "service");
  s.port = get_or(sv, "port", s.port, "service");
  s.session_ttl_seconds = get_or(sv, "session_ttl_seconds", s.session_ttl_seconds, "service");
  s.cors_origin = get_or(sv, "cors_origin", s.cors_origin, "service");
  s.split = get_or(sv, "split", s.split, "service");
  for (const auto& p : get_or(sv, "checkpoints", std::vector<std::string>{}, "service")) {
    s.checkpoints.push_back(resolve_path(p, base_dir));
  }

  cfg.validate();
  for (const auto& name : cfg.intervention.models) cfg.model(name);
  if (!cfg.export_options.model.empty()) cfg.model(cfg.export_options.model);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed,
                             std::optional<std::filesystem::path> output_dir) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path(), seed, std::move(output_dir));
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();
  j["data_dir"] = cfg.resolved_data_dir().string();
  j["fleets"] = json::array();
  for (const auto& f : cfg.fleets) j["fleets"].push_back(generator_json(f));
  json pairs = json::array();
  for (const auto& [a, b] : cfg.concept_pairs) pairs.push_back({a, b});
  j["scenario"] = {{"concepts", cfg.concepts},
                   {"pairs", pairs},
                   {"train_units", cfg.train_units},
                   {"test_units", cfg.test_units}};
  j["preprocess"] = {{"subsample", cfg.preprocess.subsample},
                     {"window", cfg.preprocess.window},
                     {"scaling", data::to_string(cfg.preprocess.scaling)},
                     {"tau", cfg.preprocess.tau}};
  j["models"] = json::array();
  for (const auto& m : cfg.models) {
    const auto& c = m.config;
    j["models"].push_back({{"name", m.name},
                           {"family", model::to_string(c.family)},
                           {"epochs", c.epochs},
                           {"batch_size", c.batch_size},
                           {"lr", c.lr},
                           {"lambda", c.lambda},
                           {"latent_dim", c.latent_dim},
                           {"embed_dim", c.embed_dim},
                           {"randint_prob", c.randint_prob},
                           {"extra_capacity", c.extra_capacity},
                           {"seed", c.seed}});
  }
  j["evaluation"] = {{"cas_clusters", cfg.evaluation.cas_clusters},
                     {"cas_max_samples", cfg.evaluation.cas_max_samples},
                     {"seed", cfg.evaluation.seed}};
  std::vector<std::string> families;
  for (auto f : cfg.ablation.families) families.push_back(model::to_string(f));
  j["ablation"] = {{"k_max", cfg.ablation.k_max}, {"families", families}};
  const auto& pol = cfg.intervention.policy;
  j["intervention"] = {{"threshold", pol.detection_threshold},
                       {"sticky", pol.sticky},
                       {"rearm_on_negative_inspection", pol.rearm_on_negative_inspection},
                       {"models", cfg.intervention.models},
                       {"bucket_width", cfg.intervention.bucket_width}};
  j["export"] = {{"model", cfg.export_options.model}, {"split", cfg.export_options.split}};
  std::vector<std::string> ckpts;
  for (const auto& p : cfg.service.checkpoints) ckpts.push_back(p.string());
  j["service"] = {{"host", cfg.service.host},
                  {"port", cfg.service.port},
                  {"session_ttl_seconds", cfg.service.session_ttl_seconds},
                  {"cors_origin", cfg.service.cors_origin},
                  {"checkpoints", ckpts},
                  {"split", cfg.service.split}};
  return j.dump(2);
}

}  // namespace cbmrul::app
