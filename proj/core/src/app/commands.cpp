#include "cbmrul/app/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "cbmrul/data/fleet_csv.hpp"
#include "cbmrul/eval/evaluate.hpp"
#include "cbmrul/model/checkpoint.hpp"
#include "cbmrul/model/train.hpp"

namespace cbmrul::app {

namespace fs = std::filesystem;

namespace {

void progress(const std::string& msg) { std::clog << "[prognostics] " << msg << std::endl; }

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

void write_resolved_config(const ExperimentConfig& cfg) {
  write_text(cfg.output_dir / "config.resolved.json", config_to_json(cfg) + "\n");
}

model::Model load_model(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path path = checkpoint_path(cfg, name);
  if (!fs::exists(path)) {
    throw InputError("checkpoint not found: " + path.string() + " (run train first)");
  }
  return model::load_checkpoint(path);
}

data::SampleSet split_for(const PreparedData& d, const std::string& split, const model::Model& m,
                          const data::PreprocessOptions& options) {
  const auto& units = split == "train" ? d.scenario.train : d.scenario.test;
  if (units.empty()) throw InputError("the " + split + " split has no units");
  return data::SampleSet::build(units, m.scaler, options);
}

void check_model_concepts(const model::Model& m, const PreparedData& d) {
  if (m.config().concepts != d.scenario.concepts.size()) {
    throw ConfigError("checkpoint has " + std::to_string(m.config().concepts) +
                      " concepts, scenario has " + std::to_string(d.scenario.concepts.size()));
  }
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string bucket_csv(const std::vector<ErrorBucket>& before, const std::vector<ErrorBucket>& after) {
  std::string out = "phase,first_cycle,last_cycle,count,mean_error,q25,median,q75\n";
  auto rows = [&](const char* phase, const std::vector<ErrorBucket>& buckets) {
    for (const auto& b : buckets) {
      out += std::string(phase) + "," + std::to_string(b.first_cycle) + "," +
             std::to_string(b.last_cycle) + "," + std::to_string(b.count) + "," +
             eval::format_number(b.mean) + "," + eval::format_number(b.q25) + "," +
             eval::format_number(b.median) + "," + eval::format_number(b.q75) + "\n";
    }
  };
  rows("before", before);
  rows("after", after);
  return out;
}

/// RMSE and NASA pooled over the listed units' cycles.
std::pair<double, double> subset_scores(const std::vector<eval::UnitTrace>& traces,
                                        const std::vector<std::string>& keys) {
  std::vector<double> pred, truth;
  for (const auto& t : traces) {
    if (std::find(keys.begin(), keys.end(), t.key) == keys.end()) continue;
    pred.insert(pred.end(), t.pred_rul.begin(), t.pred_rul.end());
    truth.insert(truth.end(), t.true_rul.begin(), t.true_rul.end());
  }
  if (pred.empty()) return {std::nan(""), std::nan("")};
  return {eval::rmse_per_cycle(pred, truth), eval::nasa_score(pred, truth)};
}

}  // namespace

std::vector<data::Fleet> generate_fleets(const ExperimentConfig& config) {
  std::vector<data::Fleet> fleets;
  for (const auto& g : config.fleets) fleets.push_back(data::generate_fleet(g));
  return fleets;
}

std::vector<data::Fleet> read_fleets(const ExperimentConfig& config) {
  std::vector<data::Fleet> fleets;
  const fs::path dir = config.resolved_data_dir();
  for (const auto& g : config.fleets) {
    const fs::path path = dir / (g.fleet_name + ".csv");
    if (!fs::exists(path)) {
      throw InputError("data file not found: " + path.string() + " (run generate first)");
    }
    fleets.push_back(data::read_fleet_csv(path));
  }
  return fleets;
}

PreparedData prepare_data(const ExperimentConfig& config, const std::vector<data::Fleet>& fleets,
                          const std::vector<std::size_t>& concept_subset) {
  PreparedData d;
  d.scenario = data::make_scenario(fleets, config.train_units, config.test_units, config.concepts,
                                   config.concept_pairs);
  for (const auto& [a, b] : d.scenario.concept_pairs) {
    if (concept_subset.empty()) {
      d.pairs.emplace_back(a, b);
      continue;
    }
    const auto ia = std::find(concept_subset.begin(), concept_subset.end(), a);
    const auto ib = std::find(concept_subset.begin(), concept_subset.end(), b);
    if (ia != concept_subset.end() && ib != concept_subset.end()) {
      d.pairs.emplace_back(ia - concept_subset.begin(), ib - concept_subset.begin());
    }
  }
  if (!concept_subset.empty()) {
    std::vector<std::string> names;
    for (std::size_t j : concept_subset) names.push_back(d.scenario.concepts.at(j));
    d.scenario.concepts = names;
  }
  if (!d.scenario.train.empty()) {
    d.scaler = data::fit_scaler(d.scenario.train, config.preprocess.subsample,
                                config.preprocess.scaling);
    d.train = data::SampleSet::build(d.scenario.train, d.scaler, config.preprocess, concept_subset);
    d.test = data::SampleSet::build(d.scenario.test, d.scaler, config.preprocess, concept_subset);
  }
  return d;
}

model::ModelConfig resolve_model(const ModelSpec& spec, const PreparedData& data) {
  model::ModelConfig c = spec.config;
  c.concepts = data.scenario.concepts.size();
  c.concept_names = data.scenario.concepts;
  return c;
}

fs::path checkpoint_path(const ExperimentConfig& config, const std::string& model) {
  return config.output_dir / "models" / (model + ".ckpt");
}

std::vector<fs::path> cmd_generate(const ExperimentConfig& config) {
  ensure_dir(config.resolved_data_dir());
  write_resolved_config(config);
  std::vector<fs::path> paths;
  for (const auto& fleet : generate_fleets(config)) {
    const fs::path path = config.resolved_data_dir() / (fleet.name + ".csv");
    data::write_fleet_csv(fleet, path);
    progress("wrote " + path.string() + " (" + std::to_string(fleet.units.size()) + " units)");
    paths.push_back(path);
  }
  return paths;
}

std::vector<fs::path> cmd_train(const ExperimentConfig& config) {
  const auto fleets = read_fleets(config);
  ensure_dir(config.output_dir / "models");
  write_resolved_config(config);
  const PreparedData d = prepare_data(config, fleets);
  if (d.train.size() == 0) throw InputError("training split is empty");
  progress(std::to_string(d.train.size()) + " training windows, " +
           std::to_string(d.scenario.concepts.size()) + " concepts");
  std::vector<fs::path> paths;
  for (const auto& spec : config.models) {
    const model::ModelConfig mc = resolve_model(spec, d);
    progress("training " + spec.name + " for " + std::to_string(mc.epochs) + " epochs");
    const model::Model m = model::train(mc, d.train, d.scaler, nullptr, [&](int epoch, double loss) {
      progress("  " + spec.name + " epoch " + std::to_string(epoch) + " loss " +
               eval::format_number(loss));
    });
    const fs::path path = checkpoint_path(config, spec.name);
    model::save_checkpoint(m, path);
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < m.loss_history.size(); ++e) {
      csv += std::to_string(e + 1) + "," + eval::format_number(m.loss_history[e]) + "\n";
    }
    write_text(config.output_dir / "models" / (spec.name + "_loss.csv"), csv);
    paths.push_back(path);
  }
  return paths;
}

std::vector<eval::MetricReport> cmd_evaluate(const ExperimentConfig& config) {
  const auto fleets = read_fleets(config);
  const PreparedData d = prepare_data(config, fleets);
  const fs::path dir = ensure_dir(config.output_dir / "eval");
  write_resolved_config(config);
  std::vector<eval::MetricReport> reports;
  std::string summary = eval::MetricReport::csv_header() + "\n";
  std::string per_fleet = "method,fleet,units,rmse_unit_macro,nasa_unit_macro,rmse_cycles,nasa_score\n";
  std::string json = "[\n";
  for (const auto& spec : config.models) {
    const model::Model m = load_model(config, spec.name);
    check_model_concepts(m, d);
    const data::SampleSet test = split_for(d, "test", m, config.preprocess);
    const auto inference = eval::infer_all(m, test);
    eval::EvaluationInput input = eval::collect_evaluation(m, test, inference, d.pairs);
    input.method = spec.name;
    eval::MetricReport r = eval::compute_report(input, config.evaluation);
    progress(spec.name + ": RMSE " + eval::format_number(r.rmse_cycles) + ", NASA " +
             eval::format_number(r.nasa_score));

    std::map<std::string, std::vector<std::size_t>> by_fleet;
    for (std::size_t u = 0; u < test.units().size(); ++u) by_fleet[test.units()[u].fleet].push_back(u);
    for (const auto& [fleet, idx] : by_fleet) {
      eval::EvaluationInput sub = input;
      sub.units.clear();
      sub.representation.clear();
      for (std::size_t u : idx) sub.units.push_back(input.units[u]);
      const eval::MetricReport fr = eval::compute_report(sub, config.evaluation);
      per_fleet += spec.name + "," + fleet + "," + std::to_string(idx.size()) + "," +
                   eval::format_number(fr.rmse_unit_macro) + "," +
                   eval::format_number(fr.nasa_unit_macro) + "," +
                   eval::format_number(fr.rmse_cycles) + "," + eval::format_number(fr.nasa_score) +
                   "\n";
    }

    summary += r.csv_row() + "\n";
    json += (reports.empty() ? "" : ",\n") + r.to_json();
    write_text(dir / (spec.name + "_report.json"), r.to_json() + "\n");
    if (r.confusion) write_text(dir / ("confusion_" + spec.name + ".csv"), r.confusion->to_csv());
    reports.push_back(std::move(r));
  }
  json += "\n]\n";
  write_text(dir / "summary.csv", summary);
  write_text(dir / "summary.json", json);
  write_text(dir / "per_fleet.csv", per_fleet);
  write_text(dir / "per_unit_rmse.csv", eval::per_unit_table(reports, "rmse"));
  write_text(dir / "per_unit_nasa.csv", eval::per_unit_table(reports, "nasa"));
  return reports;
}

std::vector<LeakageRow> leakage_correlations(const model::Model& model,
                                             const data::SampleSet& test,
                                             std::size_t concept_index) {
  if (!model::predicts_concepts(model.family())) {
    throw UsageError("leakage needs a model with concept activations");
  }
  std::vector<LeakageRow> rows;
  for (std::size_t u = 0; u < test.units().size(); ++u) {
    const auto& info = test.units()[u];
    bool label_active = false, faulty = false;
    for (std::size_t s = 0; s < info.cycle_count; ++s) {
      const auto& slot = test.cycles()[info.first_cycle_slot + s];
      label_active |= slot.concepts.at(concept_index) > 0.5;
      faulty |= slot.health_state == 1;
    }
    if (label_active || !faulty) continue;
    const auto traj = model::predict_trajectory(model, test, u);
    std::vector<double> act, cycle;
    for (const auto& p : traj) {
      act.push_back(p.activations.at(concept_index));
      cycle.push_back(p.cycle);
    }
    rows.push_back({model::to_string(model.family()), info.key, eval::pearson(act, cycle)});
  }
  return rows;
}

AblationResult cmd_ablate(const ExperimentConfig& config) {
  const auto fleets = read_fleets(config);
  const fs::path dir = ensure_dir(config.output_dir / "ablation");
  write_resolved_config(config);
  const PreparedData full = prepare_data(config, fleets);
  const std::size_t total = full.scenario.concepts.size();
  const std::size_t k_max = config.ablation.k_max == 0 ? total : std::min(config.ablation.k_max, total);
  AblationResult result;
  for (std::size_t k = 1; k <= k_max; ++k) {
    std::vector<std::size_t> subset;
    for (std::size_t j = 0; j < k; ++j) subset.push_back(j);
    const PreparedData d = prepare_data(config, fleets, subset);
    for (auto family : config.ablation.families) {
      ModelSpec spec = config.models.front();
      for (const auto& s : config.models) {
        if (s.config.family == family) {
          spec = s;
          break;
        }
      }
      spec.config.family = family;
      const model::ModelConfig mc = resolve_model(spec, d);
      const std::string name = model::to_string(family);
      progress("ablation: " + name + " with k = " + std::to_string(k));
      const model::Model m = model::train(mc, d.train, d.scaler);
      eval::EvaluationInput input =
          eval::collect_evaluation(m, d.test, eval::infer_all(m, d.test), d.pairs);
      input.method = name;
      result.rows.push_back({name, k, eval::compute_report(input, config.evaluation)});
      if (k == 1 && model::predicts_concepts(family)) {
        for (auto& row : leakage_correlations(m, d.test, 0)) result.leakage.push_back(row);
      }
    }
  }
  std::string csv = "family,k,rmse_cycles,nasa_score,rmse_unit_macro,nasa_unit_macro,"
                    "concept_accuracy,auc_fault,cas\n";
  for (const auto& row : result.rows) {
    csv += row.family + "," + std::to_string(row.k) + "," + row.report.csv_values() + "\n";
  }
  write_text(dir / "ablation.csv", csv);
  std::string leak = "family,unit,concept,pearson\n";
  for (const auto& row : result.leakage) {
    leak += row.family + "," + row.unit + "," + full.scenario.concepts.front() + "," +
            eval::format_number(row.pearson) + "\n";
  }
  write_text(dir / "leakage.csv", leak);
  return result;
}

std::vector<ErrorBucket> error_buckets(const std::vector<eval::UnitTrace>& traces, int width) {
  if (width < 1) throw ConfigError("bucket width must be >= 1");
  std::map<int, std::vector<double>> errors;
  for (const auto& t : traces) {
    for (std::size_t q = 0; q < t.cycles.size(); ++q) {
      errors[(t.cycles[q] - 1) / width].push_back(t.pred_rul[q] - t.true_rul[q]);
    }
  }
  std::vector<ErrorBucket> out;
  for (const auto& [b, e] : errors) {
    ErrorBucket bucket;
    bucket.first_cycle = b * width + 1;
    bucket.last_cycle = (b + 1) * width;
    bucket.count = e.size();
    double sum = 0.0;
    for (double v : e) sum += v;
    bucket.mean = sum / static_cast<double>(e.size());
    bucket.q25 = quantile(e, 0.25);
    bucket.median = quantile(e, 0.5);
    bucket.q75 = quantile(e, 0.75);
    out.push_back(bucket);
  }
  return out;
}

std::vector<InterventionRun> cmd_intervene(const ExperimentConfig& config) {
  const auto fleets = read_fleets(config);
  const PreparedData d = prepare_data(config, fleets);
  const fs::path dir = ensure_dir(config.output_dir / "intervention");
  write_resolved_config(config);
  std::vector<std::string> names = config.intervention.models;
  if (names.empty()) {
    for (const auto& s : config.models) {
      if (model::has_concept_bottleneck(s.config.family)) names.push_back(s.name);
    }
  }
  std::vector<InterventionRun> runs;
  std::string summary =
      "method,units_intervened,overrides,rmse_before,rmse_after,nasa_before,nasa_after,"
      "rmse_before_intervened,rmse_after_intervened,nasa_before_intervened,nasa_after_intervened\n";
  for (const auto& name : names) {
    const model::Model m = load_model(config, name);
    check_model_concepts(m, d);
    const data::SampleSet test = split_for(d, "test", m, config.preprocess);
    const auto inference = eval::infer_all(m, test);
    const intervene::InspectionOracle oracle(test);
    InterventionRun run{name, intervene::evaluate_interventions(m, test, inference,
                                                                config.intervention.policy, oracle,
                                                                config.evaluation, d.pairs)};
    auto& o = run.outcome;
    o.before.method = o.after.method = name;
    const auto [rb, nb] = subset_scores(o.before_traces, o.intervened_units);
    const auto [ra, na] = subset_scores(o.after_traces, o.intervened_units);
    summary += name + "," + std::to_string(o.intervened_units.size()) + "," +
               std::to_string(o.log.applied()) + "," + eval::format_number(o.before.rmse_cycles) +
               "," + eval::format_number(o.after.rmse_cycles) + "," +
               eval::format_number(o.before.nasa_score) + "," +
               eval::format_number(o.after.nasa_score) + "," + eval::format_number(rb) + "," +
               eval::format_number(ra) + "," + eval::format_number(nb) + "," +
               eval::format_number(na) + "\n";
    progress(name + ": RMSE " + eval::format_number(o.before.rmse_cycles) + " -> " +
             eval::format_number(o.after.rmse_cycles) + ", " +
             std::to_string(o.log.applied()) + " overrides");
    write_text(dir / (name + "_log.jsonl"), o.log.to_jsonl());
    write_text(dir / (name + "_before.json"), o.before.to_json() + "\n");
    write_text(dir / (name + "_after.json"), o.after.to_json() + "\n");
    write_text(dir / (name + "_buckets.csv"),
               bucket_csv(error_buckets(o.before_traces, config.intervention.bucket_width),
                          error_buckets(o.after_traces, config.intervention.bucket_width)));
    runs.push_back(std::move(run));
  }
  write_text(dir / "summary.csv", summary);
  return runs;
}

std::vector<std::string> embedding_columns(const model::Model& model) {
  const auto& c = model.config();
  std::vector<std::string> cols{"unit", "cycle", "step", "rul"};
  for (const auto& n : c.concept_names) cols.push_back("c_" + n);
  const std::size_t z = c.extractor_width();
  for (std::size_t i = 0; i < z; ++i) cols.push_back("z" + std::to_string(i + 1));
  if (c.family == model::Family::Cem) {
    for (const auto& n : c.concept_names) {
      for (std::size_t j = 0; j < c.embed_dim; ++j) {
        cols.push_back("e_" + n + "_" + std::to_string(j + 1));
      }
    }
  }
  return cols;
}

std::size_t write_embeddings(const model::Model& model, const data::SampleSet& samples,
                             std::ostream& out) {
  const auto cols = embedding_columns(model);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  std::size_t rows = 0;
  for (std::size_t u = 0; u < samples.units().size(); ++u) {
    const auto ui = model::infer_unit(model, samples, u);
    const auto& info = samples.units()[u];
    for (std::size_t q = 0; q < ui.cycles.size(); ++q) {
      const auto& slot = samples.cycles()[info.first_cycle_slot + q];
      for (std::size_t w = ui.cycle_begin[q]; w < ui.cycle_begin[q + 1]; ++w) {
        const auto& o = ui.windows[w];
        out << info.key << "," << ui.cycles[q] << "," << (w - ui.cycle_begin[q] + 1) << ","
            << data::format_double(slot.rul);
        for (double c : slot.concepts) out << "," << data::format_double(c);
        for (double z : o.latent) out << "," << data::format_double(z);
        if (model.family() == model::Family::Cem) {
          for (double e : o.embeddings) out << "," << data::format_double(e);
        }
        out << "\n";
        ++rows;
      }
    }
  }
  return rows;
}

fs::path cmd_export_embeddings(const ExperimentConfig& config) {
  std::string name = config.export_options.model;
  if (name.empty()) {
    name = config.models.front().name;
    for (const auto& s : config.models) {
      if (s.config.family == model::Family::Cem) {
        name = s.name;
        break;
      }
    }
  }
  const auto fleets = read_fleets(config);
  const PreparedData d = prepare_data(config, fleets);
  const model::Model m = load_model(config, name);
  check_model_concepts(m, d);
  const data::SampleSet samples = split_for(d, config.export_options.split, m, config.preprocess);
  const fs::path path =
      ensure_dir(config.output_dir / "embeddings") / (name + "_" + config.export_options.split + ".csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const std::size_t rows = write_embeddings(m, samples, out);
  progress("wrote " + std::to_string(rows) + " rows to " + path.string());
  return path;
}

}  // namespace cbmrul::app
