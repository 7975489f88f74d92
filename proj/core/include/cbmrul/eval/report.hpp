#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cbmrul/eval/metrics.hpp"

namespace cbmrul::eval {

struct UnitMetrics {
  std::string unit;
  std::size_t cycles = 0;
  double rmse = 0.0;
  double nasa = 0.0;
};

/// Metrics of one method on one test set. Optional fields are absent when
/// not applicable (no concept activations, or a single health class).
struct MetricReport {
  std::string method;
  std::vector<std::string> concept_names;
  /// Pooled over every test cycle.
  double rmse_cycles = 0.0;
  double nasa_score = 0.0;
  /// Mean of the per-unit values.
  double rmse_unit_macro = 0.0;
  double nasa_unit_macro = 0.0;
  std::optional<PerConcept> concept_accuracy;
  std::optional<double> auc_fault;
  std::optional<PerConcept> cas;
  std::optional<ConfusionMatrix> confusion;
  std::vector<UnitMetrics> units;

  std::string to_json() const;
  /// Columns of csv_row().
  static std::string csv_header();
  std::string csv_row() const;
  /// csv_row() without the leading method column.
  std::string csv_values() const;
};

/// methods x units table of per-unit RMSE ("rmse") or NASA ("nasa"), plus a
/// trailing macro column.
std::string per_unit_table(const std::vector<MetricReport>& reports, const std::string& metric);

/// Compact number formatting shared by every CSV writer.
std::string format_number(double value);

}  // namespace cbmrul::eval
