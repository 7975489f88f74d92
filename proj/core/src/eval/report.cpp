#include "cbmrul/eval/report.hpp"

#include <cmath>

#include <json.hpp>

#include "cbmrul/data/fleet_csv.hpp"
#include "cbmrul/net/tensor.hpp"

namespace cbmrul::eval {

namespace {

nlohmann::json per_concept_json(const PerConcept& pc, const std::vector<std::string>& names) {
  nlohmann::json obj = nlohmann::json::object();
  for (std::size_t j = 0; j < pc.per_concept.size(); ++j) {
    obj[j < names.size() ? names[j] : std::to_string(j)] = pc.per_concept[j];
  }
  return obj;
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "";
  return data::format_double(value);
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["concepts"] = concept_names;
  j["rmse_cycles"] = rmse_cycles;
  j["nasa_score"] = nasa_score;
  j["rmse_unit_macro"] = rmse_unit_macro;
  j["nasa_unit_macro"] = nasa_unit_macro;
  j["concept_accuracy"] = concept_accuracy ? nlohmann::json(concept_accuracy->macro) : nullptr;
  j["concept_accuracy_per_concept"] =
      concept_accuracy ? per_concept_json(*concept_accuracy, concept_names) : nullptr;
  j["auc_fault"] = auc_fault ? number_or_null(*auc_fault) : nullptr;
  j["cas"] = cas ? nlohmann::json(cas->macro) : nullptr;
  j["cas_per_concept"] = cas ? per_concept_json(*cas, concept_names) : nullptr;
  if (confusion) {
    j["confusion_matrix"] = {{"labels", confusion->labels}, {"counts", confusion->counts}};
  } else {
    j["confusion_matrix"] = nullptr;
  }
  nlohmann::json units_json = nlohmann::json::array();
  for (const auto& u : units) {
    units_json.push_back({{"unit", u.unit}, {"cycles", u.cycles}, {"rmse", u.rmse}, {"nasa", u.nasa}});
  }
  j["units"] = units_json;
  return j.dump(2);
}

std::string MetricReport::csv_header() {
  return "method,rmse_cycles,nasa_score,rmse_unit_macro,nasa_unit_macro,concept_accuracy,"
         "auc_fault,cas";
}

std::string MetricReport::csv_row() const { return method + "," + csv_values(); }

std::string MetricReport::csv_values() const {
  const double nan = std::nan("");
  std::string row;
  for (double v : {rmse_cycles, nasa_score, rmse_unit_macro, nasa_unit_macro,
                   concept_accuracy ? concept_accuracy->macro : nan, auc_fault.value_or(nan),
                   cas ? cas->macro : nan}) {
    row += (row.empty() ? "" : ",") + format_number(v);
  }
  return row;
}

std::string per_unit_table(const std::vector<MetricReport>& reports, const std::string& metric) {
  if (metric != "rmse" && metric != "nasa") {
    throw UsageError("per_unit_table: metric must be rmse or nasa");
  }
  if (reports.empty()) return "";
  std::string out = "method";
  for (const auto& u : reports.front().units) out += "," + u.unit;
  out += ",macro\n";
  for (const auto& r : reports) {
    if (r.units.size() != reports.front().units.size()) {
      throw InputError("per_unit_table: reports cover different units");
    }
    out += r.method;
    for (const auto& u : r.units) out += "," + format_number(metric == "rmse" ? u.rmse : u.nasa);
    out += "," + format_number(metric == "rmse" ? r.rmse_unit_macro : r.nasa_unit_macro) + "\n";
  }
  return out;
}

}  // namespace cbmrul::eval
