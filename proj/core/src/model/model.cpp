#include "cbmrul/model/model.hpp"

#include <algorithm>

namespace cbmrul::model {

namespace {

const std::vector<std::pair<Family, std::string>>& family_names() {
  static const std::vector<std::pair<Family, std::string>> names{
      {Family::Cnn, "CNN"},          {Family::CnnCls, "CNN_CLS"},
      {Family::CbmBool, "CBM_BOOL"}, {Family::CbmFuzzy, "CBM_FUZZY"},
      {Family::CbmHybrid, "CBM_HYBRID"}, {Family::Cem, "CEM"}};
  return names;
}

}  // namespace

Family parse_family(const std::string& name) {
  for (const auto& [f, n] : family_names()) {
    if (n == name) return f;
  }
  throw ConfigError("unknown model family '" + name + "'");
}

std::string to_string(Family family) {
  for (const auto& [f, n] : family_names()) {
    if (f == family) return n;
  }
  return "?";
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> all{Family::Cnn,      Family::CnnCls,    Family::CbmBool,
                                       Family::CbmFuzzy, Family::CbmHybrid, Family::Cem};
  return all;
}

bool predicts_concepts(Family family) { return family != Family::Cnn; }

bool has_concept_bottleneck(Family family) {
  return family != Family::Cnn && family != Family::CnnCls;
}

std::size_t ModelConfig::extra() const {
  if (extra_capacity >= 0) return static_cast<std::size_t>(extra_capacity);
  return concepts * embed_dim - concepts;
}

std::size_t ModelConfig::bottleneck_width() const {
  switch (family) {
    case Family::Cnn:
    case Family::CnnCls:
      return latent_dim;
    case Family::CbmBool:
    case Family::CbmFuzzy:
      return concepts;
    case Family::CbmHybrid:
      return concepts + extra();
    case Family::Cem:
      return concepts * embed_dim;
  }
  return 0;
}

std::size_t ModelConfig::extractor_width() const {
  switch (family) {
    case Family::CbmBool:
    case Family::CbmFuzzy:
      return concepts;
    case Family::CbmHybrid:
      return concepts + extra();
    default:
      return latent_dim;
  }
}

void ModelConfig::validate() const {
  if (concepts < 1) throw ConfigError("model: k must be >= 1");
  if (!concept_names.empty() && concept_names.size() != concepts) {
    throw ConfigError("model: concept_names has " + std::to_string(concept_names.size()) +
                      " entries for k = " + std::to_string(concepts));
  }
  if (latent_dim < 1 || embed_dim < 1) throw ConfigError("model: dimensions must be positive");
  if (lambda < 0.0) throw ConfigError("model: lambda must be >= 0");
  if (randint_prob < 0.0 || randint_prob > 1.0) {
    throw ConfigError("model: randint_prob must be in [0,1]");
  }
  if (batch_size < 1) throw ConfigError("model: batch_size must be positive");
  if (epochs < 0) throw ConfigError("model: epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("model: lr must be positive");
  std::size_t length = window;
  for (const auto& c : extractor_convs(input_channels)) {
    if (length < c.kernel) {
      throw ConfigError("model: window " + std::to_string(window) + " too short for the extractor");
    }
    length -= c.kernel - 1;
  }
}

std::vector<ConvSpec> extractor_convs(std::size_t input_channels) {
  return {{input_channels, 20, 3}, {20, 20, 3}, {20, 10, 3}, {10, 10, 3}};
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.concept_names.empty()) {
    for (std::size_t i = 0; i < config_.concepts; ++i) {
      config_.concept_names.push_back("c" + std::to_string(i + 1));
    }
  }
  const auto seed = config_.seed;
  auto dense = [&](const std::string& name, std::size_t out, std::size_t in) {
    params_.add_he_uniform(name + ".weight", {out, in}, in, seed);
    params_.add(name + ".bias", net::Tensor({out}));
  };
  std::size_t length = config_.window;
  const auto convs = extractor_convs(config_.input_channels);
  for (std::size_t l = 0; l < convs.size(); ++l) {
    const auto& c = convs[l];
    const std::string name = "extractor.conv" + std::to_string(l + 1);
    params_.add_he_uniform(name + ".weight", {c.out_channels, c.in_channels, c.kernel},
                           c.in_channels * c.kernel, seed);
    params_.add(name + ".bias", net::Tensor({c.out_channels}));
    length -= c.kernel - 1;
  }
  dense("extractor.latent", config_.extractor_width(), convs.back().out_channels * length);

  const std::size_t k = config_.concepts;
  const std::size_t m = config_.embed_dim;
  if (config_.family == Family::Cem) {
    dense("concept.positive", k * m, config_.latent_dim);
    dense("concept.negative", k * m, config_.latent_dim);
    dense("concept.scorer", 1, 2 * m);
  }
  dense("head.regressor", 1, config_.bottleneck_width());
  if (config_.family == Family::CnnCls) dense("head.classifier", k, config_.latent_dim);
}

net::Var Model::bind(net::Graph& graph, const std::string& name, bool trainable) const {
  const net::Parameter& p = params_.get(name);
  if (trainable) return graph.parameter(const_cast<net::Parameter&>(p));
  return graph.constant(p.value);
}

Model::Forward Model::forward(net::Graph& graph, const net::Tensor& windows, bool trainable,
                              const ConceptInjection* injection) {
  return build(graph, windows, trainable, injection);
}

Model::Forward Model::forward(net::Graph& graph, const net::Tensor& windows) const {
  return build(graph, windows, false, nullptr);
}

Model::Forward Model::build(net::Graph& graph, const net::Tensor& windows, bool trainable,
                            const ConceptInjection* injection) const {
  if (windows.rank() != 3 || windows.dim(1) != config_.input_channels ||
      windows.dim(2) != config_.window) {
    throw ConfigError("model expects windows [B, " + std::to_string(config_.input_channels) +
                      ", " + std::to_string(config_.window) + "], got " +
                      net::shape_string(windows.shape()));
  }
  const std::size_t batch = windows.dim(0);
  const std::size_t k = config_.concepts;
  auto dense = [&](net::Var x, const std::string& name) {
    return graph.dense(x, bind(graph, name + ".weight", trainable),
                       bind(graph, name + ".bias", trainable));
  };

  net::Var h = graph.constant(windows);
  const auto convs = extractor_convs(config_.input_channels);
  for (std::size_t l = 0; l < convs.size(); ++l) {
    const std::string name = "extractor.conv" + std::to_string(l + 1);
    h = graph.relu(graph.conv1d(h, bind(graph, name + ".weight", trainable),
                                bind(graph, name + ".bias", trainable)));
  }
  const auto& conv_out = graph.value(h);
  h = graph.reshape(h, {batch, conv_out.dim(1) * conv_out.dim(2)});
  net::Var raw = dense(h, "extractor.latent");

  Forward fwd;
  switch (config_.family) {
    case Family::Cnn: {
      fwd.latent = graph.relu(raw);
      fwd.rul = dense(fwd.latent, "head.regressor");
      break;
    }
    case Family::CnnCls: {
      fwd.latent = graph.relu(raw);
      fwd.rul = dense(fwd.latent, "head.regressor");
      fwd.probabilities = graph.sigmoid(dense(fwd.latent, "head.classifier"));
      fwd.has_probabilities = true;
      break;
    }
    case Family::CbmFuzzy: {
      fwd.latent = raw;
      fwd.probabilities = graph.sigmoid(raw);
      fwd.has_probabilities = true;
      fwd.rul = dense(fwd.probabilities, "head.regressor");
      break;
    }
    case Family::CbmBool: {
      fwd.latent = raw;
      fwd.probabilities = graph.sigmoid(raw);
      fwd.has_probabilities = true;
      net::Var hard = graph.threshold_straight_through(fwd.probabilities);
      fwd.rul = dense(hard, "head.regressor");
      break;
    }
    case Family::CbmHybrid: {
      fwd.latent = raw;
      const std::size_t e = config_.extra();
      fwd.probabilities = graph.sigmoid(graph.slice_columns(raw, 0, k));
      fwd.has_probabilities = true;
      net::Var input = fwd.probabilities;
      if (e > 0) input = graph.concat_columns(input, graph.slice_columns(raw, k, k + e));
      fwd.rul = dense(input, "head.regressor");
      break;
    }
    case Family::Cem: {
      fwd.latent = graph.relu(raw);
      net::Var pos = graph.relu(dense(fwd.latent, "concept.positive"));
      net::Var neg = graph.relu(dense(fwd.latent, "concept.negative"));
      net::Var scores = dense(graph.pair_rows(pos, neg, k), "concept.scorer");
      fwd.probabilities = graph.sigmoid(graph.reshape(scores, {batch, k}));
      fwd.has_probabilities = true;
      net::Var used = fwd.probabilities;
      if (injection != nullptr) used = graph.substitute(used, injection->values, injection->mask);
      fwd.positive = pos;
      fwd.negative = neg;
      fwd.head_input = graph.mix_embeddings(used, pos, neg);
      fwd.rul = dense(fwd.head_input, "head.regressor");
      break;
    }
  }
  return fwd;
}

net::Var Model::loss(net::Graph& graph, const Forward& fwd, const net::Tensor& targets,
                     const net::Tensor& concepts) const {
  net::Var task = graph.mse(fwd.rul, targets);
  if (!fwd.has_probabilities) return task;
  net::Var concept_loss = graph.bce(fwd.probabilities, concepts);
  return graph.weighted_sum(task, concept_loss, config_.lambda);
}

std::vector<BottleneckOutput> Model::infer(const net::Tensor& windows) const {
  net::Graph graph;
  const Forward fwd = forward(graph, windows);
  const std::size_t batch = windows.dim(0);
  const std::size_t k = config_.concepts;
  const std::size_t m = config_.embed_dim;
  std::vector<BottleneckOutput> out(batch);
  const net::Tensor& latent = graph.value(fwd.latent);
  const std::size_t lw = latent.size() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    BottleneckOutput& o = out[b];
    o.latent.assign(latent.data() + b * lw, latent.data() + (b + 1) * lw);
    if (fwd.has_probabilities) {
      const net::Tensor& p = graph.value(fwd.probabilities);
      o.probabilities.assign(p.data() + b * k, p.data() + (b + 1) * k);
      o.activations = o.probabilities;
    }
    switch (config_.family) {
      case Family::CbmBool:
        for (double& a : o.activations) a = a > 0.5 ? 1.0 : 0.0;
        break;
      case Family::CbmHybrid:
        o.extra.assign(o.latent.begin() + static_cast<long>(k), o.latent.end());
        break;
      default:
        break;
    }
  }
  if (config_.family == Family::Cem) {
    const net::Tensor& pos = graph.value(fwd.positive);
    const net::Tensor& neg = graph.value(fwd.negative);
    const net::Tensor& mixed = graph.value(fwd.head_input);
    const std::size_t w = k * m;
    for (std::size_t b = 0; b < batch; ++b) {
      BottleneckOutput& o = out[b];
      o.positive.assign(pos.data() + b * w, pos.data() + (b + 1) * w);
      o.negative.assign(neg.data() + b * w, neg.data() + (b + 1) * w);
      o.embeddings.assign(mixed.data() + b * w, mixed.data() + (b + 1) * w);
    }
  }
  // Same arithmetic as predict(), so an empty override reproduces it bit for bit.
  for (auto& o : out) o.rul = regress(head_input(o));
  return out;
}

BottleneckOutput Model::infer_one(const net::Tensor& window) const {
  if (window.rank() != 2) throw ConfigError("infer_one expects a [C, T] window");
  return infer(window.reshaped({1, window.dim(0), window.dim(1)})).front();
}

std::vector<double> Model::head_input(const BottleneckOutput& out,
                                      const ConceptOverrides& overrides) const {
  const std::size_t k = config_.concepts;
  for (const auto& [i, v] : overrides) {
    if (i >= k) throw InputError("override concept index " + std::to_string(i) + " out of range");
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("override value must be in [0,1]");
  }
  switch (config_.family) {
    case Family::Cnn:
    case Family::CnnCls:
      if (!overrides.empty()) {
        throw UsageError(to_string(config_.family) + " has no concept bottleneck to intervene on");
      }
      return out.latent;
    case Family::CbmBool:
    case Family::CbmFuzzy: {
      std::vector<double> a = out.activations;
      for (const auto& [i, v] : overrides) a[i] = v;
      return a;
    }
    case Family::CbmHybrid: {
      std::vector<double> a = out.activations;
      for (const auto& [i, v] : overrides) a[i] = v;
      a.insert(a.end(), out.extra.begin(), out.extra.end());
      return a;
    }
    case Family::Cem: {
      if (overrides.empty()) return out.embeddings;
      const std::size_t m = config_.embed_dim;
      std::vector<double> e = out.embeddings;
      for (const auto& [i, p] : overrides) {
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t idx = i * m + j;
          e[idx] = p * out.positive[idx] + (1.0 - p) * out.negative[idx];
        }
      }
      return e;
    }
  }
  return {};
}

double Model::regress(std::span<const double> input) const {
  const net::Tensor& w = params_.get("head.regressor.weight").value;
  const net::Tensor& b = params_.get("head.regressor.bias").value;
  if (input.size() != w.dim(1)) throw ConfigError("regressor input width mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < input.size(); ++j) acc += w[j] * input[j];
  return acc + b[0];
}

double Model::predict(const BottleneckOutput& out, const ConceptOverrides& overrides) const {
  return regress(head_input(out, overrides));
}

double Model::head_weight(std::size_t concept_index) const {
  if (config_.family != Family::CbmBool && config_.family != Family::CbmFuzzy &&
      config_.family != Family::CbmHybrid) {
    throw UsageError("head_weight is defined for scalar-concept bottlenecks only");
  }
  return params_.get("head.regressor.weight").value[concept_index];
}

}  // namespace cbmrul::model
