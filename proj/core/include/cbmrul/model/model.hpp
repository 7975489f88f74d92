#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbmrul/data/preprocess.hpp"
#include "cbmrul/net/graph.hpp"
#include "cbmrul/net/optim.hpp"

namespace cbmrul::model {

enum class Family { Cnn, CnnCls, CbmBool, CbmFuzzy, CbmHybrid, Cem };

Family parse_family(const std::string& name);
/// Canonical names: CNN, CNN_CLS, CBM_BOOL, CBM_FUZZY, CBM_HYBRID, CEM.
std::string to_string(Family family);
const std::vector<Family>& all_families();

/// Predicts concept probabilities (CNN_CLS and every bottleneck family).
bool predicts_concepts(Family family);
/// Routes the RUL through the concepts, so interventions change the output.
bool has_concept_bottleneck(Family family);

struct ModelConfig {
  Family family = Family::Cnn;
  std::size_t concepts = 1;  // k
  std::vector<std::string> concept_names;
  std::size_t input_channels = data::kInputChannels;
  std::size_t window = 50;
  std::size_t latent_dim = 256;
  std::size_t embed_dim = 16;  // m
  /// Hybrid extra capacity e; negative means k*m - k.
  long extra_capacity = -1;
  double lambda = 0.1;
  double randint_prob = 0.25;
  int epochs = 30;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  std::size_t extra() const;
  /// Width of the layer the regressor reads.
  std::size_t bottleneck_width() const;
  /// Output width of the extractor's final dense layer.
  std::size_t extractor_width() const;
  void validate() const;
};

/// Everything one window produces on its way to the RUL.
struct BottleneckOutput {
  std::vector<double> latent;         // extractor output (z, or raw concept logits for CBMs)
  std::vector<double> probabilities;  // p, k entries; empty for CNN
  std::vector<double> activations;    // what the regressor sees per concept
  std::vector<double> positive;       // CEM, k*m
  std::vector<double> negative;       // CEM, k*m
  std::vector<double> embeddings;     // CEM mixture, k*m
  std::vector<double> extra;          // hybrid, e
  double rul = 0.0;                   // scaled prediction
};

/// Concept index -> forced activation (CBMs) or probability (CEM).
using ConceptOverrides = std::map<std::size_t, double>;

/// Ground-truth concept substitution during CEM training.
struct ConceptInjection {
  net::Tensor values;      // [B, k]
  std::vector<char> mask;  // B*k, nonzero = replace
};

class Model {
 public:
  struct Forward {
    net::Var rul;            // [B, 1]
    net::Var probabilities;  // [B, k], valid if has_probabilities
    net::Var latent;
    net::Var positive;    // CEM
    net::Var negative;    // CEM
    net::Var head_input;  // CEM mixture
    bool has_probabilities = false;
  };

  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  Family family() const { return config_.family; }
  net::ParameterSet& parameters() { return params_; }
  const net::ParameterSet& parameters() const { return params_; }

  data::ScalerStats scaler;
  std::vector<double> loss_history;

  /// Records the network on `graph`. With `trainable`, parameters are bound
  /// for gradients; otherwise their values are copied in as constants.
  Forward forward(net::Graph& graph, const net::Tensor& windows, bool trainable,
                  const ConceptInjection* injection = nullptr);
  Forward forward(net::Graph& graph, const net::Tensor& windows) const;

  /// MSE on the RUL, plus lambda * BCE on the probabilities when present.
  net::Var loss(net::Graph& graph, const Forward& fwd, const net::Tensor& targets,
                const net::Tensor& concepts) const;

  /// Batched inference; windows [B, C, T].
  std::vector<BottleneckOutput> infer(const net::Tensor& windows) const;
  BottleneckOutput infer_one(const net::Tensor& window) const;

  /// Regressor input after applying overrides. Throws UsageError for
  /// families without a concept bottleneck when overrides are given.
  std::vector<double> head_input(const BottleneckOutput& out,
                                 const ConceptOverrides& overrides = {}) const;
  /// f(input): the linear regressor.
  double regress(std::span<const double> input) const;
  double predict(const BottleneckOutput& out, const ConceptOverrides& overrides = {}) const;

  /// Regressor weight on concept activation i (fuzzy/boolean/hybrid).
  double head_weight(std::size_t concept_index) const;

 private:
  Forward build(net::Graph& graph, const net::Tensor& windows, bool trainable,
                const ConceptInjection* injection) const;
  net::Var bind(net::Graph& graph, const std::string& name, bool trainable) const;

  ModelConfig config_;
  net::ParameterSet params_;
};

/// Convolution stack of the feature extractor: (in, out, kernel) per layer.
struct ConvSpec {
  std::size_t in_channels, out_channels, kernel;
};
std::vector<ConvSpec> extractor_convs(std::size_t input_channels);

}  // namespace cbmrul::model
