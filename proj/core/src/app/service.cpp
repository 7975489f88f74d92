#include "cbmrul/app/service.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>

#include <httplib.h>
#include <json.hpp>

#include "cbmrul/app/commands.hpp"
#include "cbmrul/model/checkpoint.hpp"

namespace cbmrul::app {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

ApiResponse reply(int status, const json& body) { return {status, body.dump()}; }

json parse_body(const std::string& body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw HttpError{422, "request body must be a JSON object"};
    return j;
  } catch (const json::parse_error&) {
    throw HttpError{422, "request body is not valid JSON"};
  }
}

std::string require_string(const json& body, const std::string& key) {
  if (!body.contains(key) || !body.at(key).is_string()) {
    throw HttpError{422, "field '" + key + "' must be a string"};
  }
  return body.at(key).get<std::string>();
}

int require_int(const json& body, const std::string& key) {
  if (!body.contains(key) || !body.at(key).is_number_integer()) {
    throw HttpError{422, "field '" + key + "' must be an integer"};
  }
  return body.at(key).get<int>();
}

}  // namespace

struct Service::Impl {
  struct ModelEntry {
    std::string name;
    model::Model model;
    data::SampleSet samples;
    std::vector<model::UnitInference> inference;
    std::vector<std::vector<model::CyclePrediction>> original;
  };
  struct UnitEntry {
    std::string key;
    int life = 0;
    int onset = 0;
    std::vector<std::string> faults;
  };
  struct Session {
    std::mutex mu;
    std::string id;
    std::size_t model = 0;
    std::size_t unit = 0;
    int cursor = 1;
    intervene::StickyOverrides overrides;
    std::chrono::steady_clock::time_point last_used;
  };

  std::vector<std::unique_ptr<ModelEntry>> models;
  std::vector<UnitEntry> units;
  std::chrono::seconds ttl;
  Clock clock;
  double threshold;

  mutable std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::uint64_t next_session = 1;

  std::size_t find_model(const std::string& name) const {
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (models[i]->name == name) return i;
    }
    throw HttpError{404, "unknown model '" + name + "'"};
  }

  std::size_t find_unit(const std::string& key) const {
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (units[i].key == key) return i;
    }
    throw HttpError{404, "unknown unit '" + key + "'"};
  }

  std::size_t concept_index(const ModelEntry& m, const json& value) const {
    const auto& names = m.model.config().concept_names;
    if (value.is_string()) {
      const auto it = std::find(names.begin(), names.end(), value.get<std::string>());
      if (it == names.end()) throw HttpError{422, "unknown concept '" + value.get<std::string>() + "'"};
      return static_cast<std::size_t>(it - names.begin());
    }
    if (value.is_number_integer()) {
      const auto i = value.get<long>();
      if (i < 0 || static_cast<std::size_t>(i) >= names.size()) {
        throw HttpError{422, "concept index out of range"};
      }
      return static_cast<std::size_t>(i);
    }
    throw HttpError{422, "field 'concept' must be a name or an index"};
  }

  int check_cycle(int cycle, std::size_t unit) const {
    if (cycle < 1 || cycle > units[unit].life) {
      throw HttpError{422, "cycle must be in [1, " + std::to_string(units[unit].life) + "]"};
    }
    return cycle;
  }

  std::shared_ptr<Session> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError{404, "unknown session '" + id + "'"};
    it->second->last_used = clock();
    return it->second;
  }

  void purge_expired() {
    std::lock_guard lock(sessions_mu);
    const auto now = clock();
    for (auto it = sessions.begin(); it != sessions.end();) {
      if (now - it->second->last_used > ttl) {
        it = sessions.erase(it);
      } else {
        ++it;
      }
    }
  }

  /// Per-cycle series for cycle positions [from, to).
  json series(const ModelEntry& m, const std::vector<model::CyclePrediction>& traj, std::size_t from,
              std::size_t to) const {
    const auto& names = m.model.config().concept_names;
    const bool has_act = model::predicts_concepts(m.model.family());
    json cycles = json::array(), rul = json::array(), act = json::object();
    for (std::size_t q = from; q < to; ++q) {
      cycles.push_back(traj[q].cycle);
      rul.push_back(traj[q].rul);
      if (!has_act) continue;
      for (std::size_t j = 0; j < names.size(); ++j) act[names[j]].push_back(traj[q].activations[j]);
    }
    return {{"cycles", cycles}, {"rul", rul}, {"activations", act}};
  }

  json overrides_json(const ModelEntry& m, const intervene::StickyOverrides& ov) const {
    json out = json::array();
    for (const auto& [j, cycle] : ov) {
      out.push_back({{"concept", m.model.config().concept_names[j]}, {"cycle", cycle}});
    }
    return out;
  }

  ApiResponse get_models() const {
    json out = json::array();
    for (const auto& m : models) {
      const auto& c = m->model.config();
      out.push_back({{"name", m->name},
                     {"family", model::to_string(c.family)},
                     {"k", c.concepts},
                     {"concepts", c.concept_names},
                     {"intervenable", model::has_concept_bottleneck(c.family)}});
    }
    return reply(200, out);
  }

  ApiResponse get_units(const std::map<std::string, std::string>& query) const {
    const auto it = query.find("reveal");
    const bool reveal = it != query.end() && (it->second == "true" || it->second == "1");
    json out = json::array();
    for (const auto& u : units) {
      json j{{"unit", u.key}, {"life", u.life}};
      if (reveal) {
        j["faults"] = u.faults;
        j["onset_cycle"] = u.onset <= u.life ? json(u.onset) : json(nullptr);
      }
      out.push_back(j);
    }
    return reply(200, out);
  }

  ApiResponse create_session(const std::string& body) {
    const json b = parse_body(body);
    const std::size_t m = find_model(require_string(b, "model"));
    const std::size_t u = find_unit(require_string(b, "unit"));
    auto s = std::make_shared<Session>();
    s->model = m;
    s->unit = u;
    s->last_used = clock();
    {
      std::lock_guard lock(sessions_mu);
      s->id = "s" + std::to_string(next_session++);
      sessions[s->id] = s;
    }
    return reply(201, {{"session", s->id},
                       {"model", models[m]->name},
                       {"unit", units[u].key},
                       {"life", units[u].life}});
  }

  ApiResponse state(const std::string& id, const std::map<std::string, std::string>& query) {
    auto s = find_session(id);
    std::lock_guard lock(s->mu);
    const auto& m = *models[s->model];
    const int life = units[s->unit].life;
    int upto = life;
    if (const auto it = query.find("upto"); it != query.end()) {
      try {
        std::size_t used = 0;
        upto = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("upto");
      } catch (const std::exception&) {
        throw HttpError{422, "upto must be an integer"};
      }
      check_cycle(upto, s->unit);
    }
    const auto& ui = m.inference[s->unit];
    const auto traj = intervene::corrected_trajectory(m.model, ui, s->overrides);
    json out = series(m, traj, 0, static_cast<std::size_t>(upto));
    out["session"] = s->id;
    out["model"] = m.name;
    out["unit"] = units[s->unit].key;
    out["upto"] = upto;
    out["life"] = life;
    out["cursor"] = s->cursor;
    out["concepts"] = m.model.config().concept_names;
    out["overrides"] = overrides_json(m, s->overrides);
    json detections = json::object();
    if (model::predicts_concepts(m.model.family())) {
      const auto& names = m.model.config().concept_names;
      const auto& orig = m.original[s->unit];
      for (std::size_t j = 0; j < names.size(); ++j) {
        bool seen = false;
        json flags = json::array();
        for (int q = 0; q < upto; ++q) {
          const bool first = !seen && orig[q].activations[j] > threshold;
          seen |= first;
          flags.push_back(first);
        }
        detections[names[j]] = flags;
      }
    }
    out["detections"] = detections;
    return reply(200, out);
  }

  ApiResponse inspect(const std::string& id, const std::string& body) {
    auto s = find_session(id);
    const json b = parse_body(body);
    std::lock_guard lock(s->mu);
    const auto& m = *models[s->model];
    const int cycle = check_cycle(require_int(b, "cycle"), s->unit);
    if (!b.contains("concept")) throw HttpError{422, "field 'concept' is required"};
    const std::size_t j = concept_index(m, b.at("concept"));
    const intervene::InspectionOracle oracle(m.samples);
    return reply(200, {{"cycle", cycle},
                       {"concept", m.model.config().concept_names[j]},
                       {"degraded", oracle.inspect(s->unit, cycle, j)}});
  }

  ApiResponse intervene(const std::string& id, const std::string& body) {
    auto s = find_session(id);
    const json b = parse_body(body);
    std::lock_guard lock(s->mu);
    const auto& m = *models[s->model];
    if (!model::has_concept_bottleneck(m.model.family())) {
      throw HttpError{422, model::to_string(m.model.family()) + " has no concept bottleneck"};
    }
    const int cycle = check_cycle(require_int(b, "cycle"), s->unit);
    if (!b.contains("concept")) throw HttpError{422, "field 'concept' is required"};
    const std::size_t j = concept_index(m, b.at("concept"));
    if (s->overrides.count(j)) {
      throw HttpError{409, "concept '" + m.model.config().concept_names[j] +
                               "' is already overridden from cycle " +
                               std::to_string(s->overrides.at(j))};
    }
    s->overrides[j] = cycle;
    s->cursor = cycle;
    const auto traj = intervene::corrected_trajectory(m.model, m.inference[s->unit], s->overrides);
    json out = series(m, traj, static_cast<std::size_t>(cycle - 1), traj.size());
    out["concept"] = m.model.config().concept_names[j];
    out["cycle"] = cycle;
    out["overrides"] = overrides_json(m, s->overrides);
    return reply(200, out);
  }

  ApiResponse whatif(const std::string& body) const {
    const json b = parse_body(body);
    const auto& m = *models[find_model(require_string(b, "model"))];
    const std::size_t u = find_unit(require_string(b, "unit"));
    const int cycle = check_cycle(require_int(b, "cycle"), u);
    model::ConceptOverrides ov;
    if (b.contains("overrides")) {
      const json& o = b.at("overrides");
      if (!o.is_object()) throw HttpError{422, "overrides must map concept names to values"};
      for (const auto& [name, value] : o.items()) {
        if (!value.is_number()) throw HttpError{422, "override values must be numbers"};
        const double v = value.get<double>();
        if (!(v >= 0.0 && v <= 1.0)) throw HttpError{422, "override values must be in [0,1]"};
        ov[concept_index(m, json(name))] = v;
      }
    }
    if (!ov.empty() && !model::has_concept_bottleneck(m.model.family())) {
      throw HttpError{422, model::to_string(m.model.family()) + " has no concept bottleneck"};
    }
    const double rul =
        intervene::whatif_cycle(m.model, m.inference[u], static_cast<std::size_t>(cycle - 1), ov);
    return reply(200, {{"model", m.name}, {"unit", units[u].key}, {"cycle", cycle}, {"rul", rul}});
  }

  ApiResponse route(const ApiRequest& req) {
    if (req.method == "OPTIONS") return {204, ""};
    purge_expired();
    const auto seg = split_path(req.path);
    if (seg.size() < 2 || seg[0] != "api") throw HttpError{404, "no route for " + req.path};
    const bool get = req.method == "GET", post = req.method == "POST";
    if (seg.size() == 2 && seg[1] == "models" && get) return get_models();
    if (seg.size() == 2 && seg[1] == "units" && get) return get_units(req.query);
    if (seg.size() == 2 && seg[1] == "sessions" && post) return create_session(req.body);
    if (seg.size() == 2 && seg[1] == "whatif" && post) return whatif(req.body);
    if (seg.size() == 4 && seg[1] == "sessions") {
      if (seg[3] == "state" && get) return state(seg[2], req.query);
      if (seg[3] == "inspect" && post) return inspect(seg[2], req.body);
      if (seg[3] == "intervene" && post) return intervene(seg[2], req.body);
    }
    throw HttpError{404, "no route for " + req.method + " " + req.path};
  }
};

Service::Service(std::vector<NamedModel> models, const std::vector<data::UnitTrajectory>& units,
                 const data::PreprocessOptions& preprocess, std::chrono::seconds session_ttl,
                 Clock clock, double detection_threshold)
    : impl_(std::make_unique<Impl>()) {
  if (models.empty()) throw ConfigError("service: no models to serve");
  if (units.empty()) throw ConfigError("service: no units to serve");
  impl_->ttl = session_ttl;
  impl_->clock = clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); };
  impl_->threshold = detection_threshold;
  for (auto& nm : models) {
    auto entry = std::make_unique<Impl::ModelEntry>(Impl::ModelEntry{
        nm.name, std::move(nm.model), data::SampleSet{}, {}, {}});
    if (entry->model.config().concepts != units.front().components.size()) {
      throw ConfigError("service: model " + entry->name + " expects " +
                        std::to_string(entry->model.config().concepts) + " concepts, units carry " +
                        std::to_string(units.front().components.size()));
    }
    entry->samples = data::SampleSet::build(units, entry->model.scaler, preprocess);
    for (std::size_t u = 0; u < units.size(); ++u) {
      entry->inference.push_back(model::infer_unit(entry->model, entry->samples, u));
      entry->original.push_back(model::predict_trajectory(entry->model, entry->inference.back()));
    }
    impl_->models.push_back(std::move(entry));
  }
  for (const auto& u : units) {
    Impl::UnitEntry e;
    e.key = u.key();
    e.life = static_cast<int>(u.life());
    e.onset = u.onset_cycle();
    for (std::size_t j = 0; j < u.components.size(); ++j) {
      for (std::size_t q = 0; q < u.life(); ++q) {
        if (u.theta(q, j) <= preprocess.tau) {
          e.faults.push_back(u.components[j]);
          break;
        }
      }
    }
    impl_->units.push_back(std::move(e));
  }
}

Service::~Service() = default;

ApiResponse Service::handle(const ApiRequest& request) {
  try {
    return impl_->route(request);
  } catch (const HttpError& e) {
    return reply(e.status, {{"error", e.message}});
  } catch (const InputError& e) {
    return reply(422, {{"error", e.what()}});
  } catch (const UsageError& e) {
    return reply(422, {{"error", e.what()}});
  } catch (const std::exception& e) {
    return reply(500, {{"error", e.what()}});
  }
}

std::size_t Service::session_count() const {
  std::lock_guard lock(impl_->sessions_mu);
  return impl_->sessions.size();
}

std::unique_ptr<Service> make_service(const ExperimentConfig& config) {
  const auto fleets = read_fleets(config);
  const auto scenario = data::make_scenario(fleets, config.train_units, config.test_units,
                                            config.concepts, config.concept_pairs);
  const auto& units = config.service.split == "train" ? scenario.train : scenario.test;
  std::vector<std::filesystem::path> paths = config.service.checkpoints;
  if (paths.empty()) {
    const auto dir = config.output_dir / "models";
    if (std::filesystem::is_directory(dir)) {
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".ckpt") paths.push_back(e.path());
      }
    }
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw InputError("no checkpoints to serve (run train first)");
  std::vector<Service::NamedModel> models;
  for (const auto& p : paths) {
    if (!std::filesystem::exists(p)) throw InputError("checkpoint not found: " + p.string());
    models.push_back({p.stem().string(), model::load_checkpoint(p)});
  }
  return std::make_unique<Service>(std::move(models), units, config.preprocess,
                                   std::chrono::seconds(config.service.session_ttl_seconds),
                                   Service::Clock{},
                                   config.intervention.policy.detection_threshold);
}

void serve(Service& service, const std::string& host, int port, const std::string& cors_origin,
           std::stop_token stop) {
  httplib::Server server;
  server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto adapt = [&service](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) r.query[k] = v;
    const ApiResponse out = service.handle(r);
    res.status = out.status;
    if (!out.body.empty()) res.set_content(out.body, "application/json");
  };
  server.Get(".*", adapt);
  server.Post(".*", adapt);
  server.Options(".*", adapt);
  if (!server.bind_to_port(host, port)) {
    throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  }
  std::stop_callback on_stop(stop, [&server] { server.stop(); });
  std::clog << "[prognostics] serving on http://" << host << ":" << port << std::endl;
  if (!server.listen_after_bind() && !stop.stop_requested()) {
    throw ConfigError("server on " + host + ":" + std::to_string(port) + " stopped unexpectedly");
  }
}

void cmd_serve(const ExperimentConfig& config) {
  auto service = make_service(config);
  serve(*service, config.service.host, config.service.port, config.service.cors_origin);
}

}  // namespace cbmrul::app
