#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cbmrul::eval {

inline constexpr double kNasaUnderAlpha = 1.0 / 13.0;
inline constexpr double kNasaOverAlpha = 1.0 / 10.0;
inline constexpr double kDecisionThreshold = 0.5;

/// sqrt(mean((pred - truth)^2)) over cycles.
double rmse_per_cycle(std::span<const double> pred, std::span<const double> truth);

/// mean(exp(alpha * |pred - truth|) - 1), alpha = 1/10 when pred > truth
/// (over-estimate) and 1/13 otherwise.
double nasa_score(std::span<const double> pred, std::span<const double> truth);

struct PerConcept {
  std::vector<double> per_concept;
  double macro = 0.0;
};

/// Activations and labels are n x k row-major. A concept counts as predicted
/// active when its activation exceeds `threshold`.
PerConcept concept_accuracy(std::span<const double> activations, std::span<const double> labels,
                            std::size_t k, double threshold = kDecisionThreshold);

/// Mann-Whitney AUC with midranks for ties. NaN when one class is absent.
double auc_roc(std::span<const double> scores, std::span<const double> labels);

/// h = 1 - H(C|K) / H(C); 1 when H(C) = 0.
double homogeneity(std::span<const int> labels, std::span<const int> clusters);

struct KMeansOptions {
  std::size_t clusters = 2;
  int max_iterations = 100;
  std::uint64_t seed = 0;
};

/// Lloyd's algorithm with k-means++ seeding, one restart. `points` is n x dim.
std::vector<int> kmeans(std::span<const double> points, std::size_t dim,
                        const KMeansOptions& options);

inline const std::vector<std::size_t>& default_cas_clusters() {
  static const std::vector<std::size_t> counts{2, 4, 6, 8, 10};
  return counts;
}

/// Mean homogeneity of the binary labels over k-means clusterings of the
/// representation, one per cluster count.
double alignment_score(std::span<const double> representation, std::size_t dim,
                       std::span<const double> labels,
                       const std::vector<std::size_t>& cluster_counts, std::uint64_t seed);

/// Per concept j: representation[j] is n x dims[j]; labels n x k.
PerConcept concept_alignment_score(const std::vector<std::vector<double>>& representation,
                                   const std::vector<std::size_t>& dims,
                                   std::span<const double> labels, std::size_t k,
                                   const std::vector<std::size_t>& cluster_counts,
                                   std::uint64_t seed);

/// Mutually exclusive classes: healthy, one per concept, one per pair.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]

  std::size_t row_total(std::size_t row) const;
  std::string to_csv() const;
};

std::vector<std::string> confusion_labels(const std::vector<std::string>& concept_names,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

/// Class index of one activation vector (see ConfusionMatrix).
std::size_t classify(std::span<const double> activations,
                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                     double threshold = kDecisionThreshold);

ConfusionMatrix confusion_matrix(std::span<const double> activations,
                                 std::span<const double> labels, std::size_t k,
                                 const std::vector<std::string>& concept_names,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                 double threshold = kDecisionThreshold);

/// Pearson correlation; 0 when either series is constant.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace cbmrul::eval
