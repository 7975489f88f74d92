#include "cbmrul/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cbmrul/net/rng.hpp"
#include "cbmrul/net/tensor.hpp"

namespace cbmrul::eval {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw InputError(std::string(what) + ": size mismatch");
  if (a.empty()) throw InputError(std::string(what) + ": empty input");
}

void check_binary(std::span<const double> labels, const char* what) {
  for (double v : labels) {
    if (v != 0.0 && v != 1.0) throw InputError(std::string(what) + ": labels must be 0 or 1");
  }
}

double entropy_of_counts(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace

double rmse_per_cycle(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double nasa_score(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "nasa_score");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    const double alpha = e > 0.0 ? kNasaOverAlpha : kNasaUnderAlpha;
    acc += std::expm1(alpha * std::abs(e));
  }
  return acc / static_cast<double>(pred.size());
}

PerConcept concept_accuracy(std::span<const double> activations, std::span<const double> labels,
                            std::size_t k, double threshold) {
  check_pair(activations, labels, "concept_accuracy");
  if (k == 0 || activations.size() % k != 0) throw InputError("concept_accuracy: bad k");
  check_binary(labels, "concept_accuracy");
  const std::size_t n = activations.size() / k;
  PerConcept out;
  out.per_concept.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const bool pred = activations[i * k + j] > threshold;
      const bool truth = labels[i * k + j] > 0.5;
      if (pred == truth) out.per_concept[j] += 1.0;
    }
  }
  for (double& a : out.per_concept) a /= static_cast<double>(n);
  out.macro = std::accumulate(out.per_concept.begin(), out.per_concept.end(), 0.0) /
              static_cast<double>(k);
  return out;
}

double auc_roc(std::span<const double> scores, std::span<const double> labels) {
  check_pair(scores, labels, "auc_roc");
  check_binary(labels, "auc_roc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 0.5) {
      positives += 1.0;
      rank_sum += rank[i];
    }
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double u = rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

double homogeneity(std::span<const int> labels, std::span<const int> clusters) {
  if (labels.size() != clusters.size()) throw InputError("homogeneity: size mismatch");
  if (labels.empty()) throw InputError("homogeneity: empty input");
  const double n = static_cast<double>(labels.size());
  std::map<int, double> class_counts;
  std::map<int, std::map<int, double>> joint;  // cluster -> class -> count
  for (std::size_t i = 0; i < labels.size(); ++i) {
    class_counts[labels[i]] += 1.0;
    joint[clusters[i]][labels[i]] += 1.0;
  }
  std::vector<double> cc;
  for (const auto& [_, c] : class_counts) cc.push_back(c);
  const double h_c = entropy_of_counts(cc, n);
  if (h_c <= 0.0) return 1.0;
  double h_c_given_k = 0.0;
  for (const auto& [_, row] : joint) {
    double size = 0.0;
    std::vector<double> counts;
    for (const auto& [__, c] : row) {
      size += c;
      counts.push_back(c);
    }
    h_c_given_k += size / n * entropy_of_counts(counts, size);
  }
  return std::clamp(1.0 - h_c_given_k / h_c, 0.0, 1.0);
}

std::vector<int> kmeans(std::span<const double> points, std::size_t dim,
                        const KMeansOptions& options) {
  if (dim == 0 || points.size() % dim != 0) throw InputError("kmeans: bad dimensions");
  const std::size_t n = points.size() / dim;
  if (n == 0) throw InputError("kmeans: no points");
  if (options.clusters == 0) throw InputError("kmeans: need at least one cluster");
  const std::size_t kc = std::min(options.clusters, n);
  Rng rng = make_rng(options.seed, "kmeans");

  auto dist2 = [&](std::size_t i, const double* c) {
    double d = 0.0;
    const double* p = points.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const double t = p[j] - c[j];
      d += t * t;
    }
    return d;
  };

  std::vector<double> centers(kc * dim);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(n) - 1));
  std::copy_n(points.data() + first * dim, dim, centers.data());
  for (std::size_t c = 1; c < kc; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist2(i, centers.data() + (c - 1) * dim));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= nearest[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(n) - 1));
    }
    std::copy_n(points.data() + pick * dim, dim, centers.data() + c * dim);
  }

  std::vector<int> assign(n, -1);
  std::vector<double> sums(kc * dim);
  std::vector<std::size_t> sizes(kc);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(i, centers.data());
      for (std::size_t c = 1; c < kc; ++c) {
        const double d = dist2(i, centers.data() + c * dim);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++sizes[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += points[i * dim + j];
    }
    for (std::size_t c = 0; c < kc; ++c) {
      if (sizes[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t j = 0; j < dim; ++j) {
        centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(sizes[c]);
      }
    }
  }
  return assign;
}

double alignment_score(std::span<const double> representation, std::size_t dim,
                       std::span<const double> labels,
                       const std::vector<std::size_t>& cluster_counts, std::uint64_t seed) {
  if (cluster_counts.empty()) throw InputError("alignment_score: no cluster counts");
  if (dim == 0 || representation.size() != labels.size() * dim) {
    throw InputError("alignment_score: representation/label size mismatch");
  }
  check_binary(labels, "alignment_score");
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] > 0.5 ? 1 : 0;
  double acc = 0.0;
  for (std::size_t kc : cluster_counts) {
    KMeansOptions opt;
    opt.clusters = kc;
    opt.seed = split_seed(seed, "cas/" + std::to_string(kc));
    const auto clusters = kmeans(representation, dim, opt);
    acc += homogeneity(y, clusters);
  }
  return acc / static_cast<double>(cluster_counts.size());
}

PerConcept concept_alignment_score(const std::vector<std::vector<double>>& representation,
                                   const std::vector<std::size_t>& dims,
                                   std::span<const double> labels, std::size_t k,
                                   const std::vector<std::size_t>& cluster_counts,
                                   std::uint64_t seed) {
  if (representation.size() != k || dims.size() != k) {
    throw InputError("concept_alignment_score: need one representation per concept");
  }
  if (k == 0 || labels.size() % k != 0) throw InputError("concept_alignment_score: bad labels");
  const std::size_t n = labels.size() / k;
  PerConcept out;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> lj(n);
    for (std::size_t i = 0; i < n; ++i) lj[i] = labels[i * k + j];
    out.per_concept.push_back(alignment_score(representation[j], dims[j], lj, cluster_counts,
                                              split_seed(seed, "concept/" + std::to_string(j))));
  }
  out.macro = std::accumulate(out.per_concept.begin(), out.per_concept.end(), 0.0) /
              static_cast<double>(k);
  return out;
}

std::size_t ConfusionMatrix::row_total(std::size_t row) const {
  return std::accumulate(counts.at(row).begin(), counts.at(row).end(), std::size_t{0});
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "true\\pred";
  for (const auto& l : labels) out += "," + l;
  out += "\n";
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out += labels[r];
    for (std::size_t c : counts[r]) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::vector<std::string> confusion_labels(const std::vector<std::string>& names,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::string> labels{"healthy"};
  labels.insert(labels.end(), names.begin(), names.end());
  for (const auto& [a, b] : pairs) labels.push_back(names.at(a) + "+" + names.at(b));
  return labels;
}

std::size_t classify(std::span<const double> activations,
                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                     double threshold) {
  const std::size_t k = activations.size();
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < k; ++j) {
    if (activations[j] > threshold) active.push_back(j);
  }
  if (active.empty()) return 0;
  if (active.size() == 1) return 1 + active[0];
  if (active.size() == 2) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [a, b] = pairs[p];
      if ((a == active[0] && b == active[1]) || (a == active[1] && b == active[0])) {
        return 1 + k + p;
      }
    }
  }
  std::size_t best = active[0];
  for (std::size_t j : active) {
    if (activations[j] > activations[best]) best = j;
  }
  return 1 + best;
}

ConfusionMatrix confusion_matrix(std::span<const double> activations,
                                 std::span<const double> labels, std::size_t k,
                                 const std::vector<std::string>& concept_names,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                 double threshold) {
  if (activations.size() != labels.size()) throw InputError("confusion_matrix: size mismatch");
  if (k == 0 || activations.size() % k != 0) throw InputError("confusion_matrix: bad k");
  if (concept_names.size() != k) throw InputError("confusion_matrix: need k concept names");
  check_binary(labels, "confusion_matrix");
  ConfusionMatrix cm;
  cm.labels = confusion_labels(concept_names, pairs);
  cm.counts.assign(cm.labels.size(), std::vector<std::size_t>(cm.labels.size(), 0));
  const std::size_t n = activations.size() / k;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t truth = classify(labels.subspan(i * k, k), pairs, 0.5);
    const std::size_t pred = classify(activations.subspan(i * k, k), pairs, threshold);
    ++cm.counts[truth][pred];
  }
  return cm;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b, "pearson");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace cbmrul::eval
