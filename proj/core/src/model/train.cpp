#include "cbmrul/model/train.hpp"

#include <cmath>
#include <numeric>

#include "cbmrul/net/rng.hpp"

namespace cbmrul::model {

double evaluate_loss(const Model& model, const data::SampleSet& samples, std::size_t batch_size) {
  if (samples.size() == 0) throw InputError("evaluate_loss: empty sample set");
  net::Tensor x, y, c;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    samples.fill_batch(idx, x, y, c);
    net::Graph graph;
    const auto fwd = model.forward(graph, x);
    total += graph.value(model.loss(graph, fwd, y, c))[0] * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(samples.size());
}

void train_epochs(Model& model, const data::SampleSet& samples, int epochs, TrainingTrace* trace,
                  const EpochCallback& on_epoch) {
  const ModelConfig& cfg = model.config();
  if (samples.size() == 0) throw InputError("train: empty sample set");
  if (samples.concepts() != cfg.concepts) {
    throw ConfigError("train: samples carry " + std::to_string(samples.concepts()) +
                      " concepts, model expects " + std::to_string(cfg.concepts));
  }
  if (samples.window_size() != cfg.window || samples.channels() != cfg.input_channels) {
    throw ConfigError("train: sample window shape does not match the model");
  }
  // Streams continue from where the previous epochs left off.
  const auto epochs_done = static_cast<std::uint64_t>(model.loss_history.size());
  Rng shuffle = make_rng(cfg.seed, "shuffle");
  Rng injection = make_rng(cfg.seed, "randint");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_order = [&] {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(shuffle, 0, static_cast<long>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
  };
  for (std::uint64_t e = 0; e < epochs_done; ++e) shuffle_order();
  const bool inject = cfg.family == Family::Cem && cfg.randint_prob > 0.0;
  if (inject) injection.discard(epochs_done * samples.size() * cfg.concepts);

  net::AdamOptions adam;
  adam.lr = cfg.lr;
  net::Tensor x, y, c;
  ConceptInjection injection_buf;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_order();
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);
      if (trace && trace->record_batches) trace->batches.emplace_back(batch.begin(), batch.end());
      samples.fill_batch(batch, x, y, c);

      const ConceptInjection* inj = nullptr;
      if (cfg.family == Family::Cem) {
        injection_buf.values = c;
        injection_buf.mask.assign(c.size(), 0);
        if (inject) {
          for (std::size_t i = 0; i < c.size(); ++i) {
            injection_buf.mask[i] = uniform01(injection) < cfg.randint_prob ? 1 : 0;
            if (trace) {
              ++trace->substitution_draws;
              trace->substitutions += injection_buf.mask[i] ? 1 : 0;
            }
          }
          inj = &injection_buf;
        } else if (trace) {
          trace->substitution_draws += c.size();
        }
      }

      model.parameters().zero_grad();
      net::Graph graph;
      const auto fwd = model.forward(graph, x, true, inj);
      const net::Var loss = model.loss(graph, fwd, y, c);
      const double value = graph.value(loss)[0];
      if (!std::isfinite(value)) {
        throw InputError("training diverged: non-finite loss at epoch " +
                         std::to_string(model.loss_history.size() + 1) + ", " +
                         to_string(cfg.family));
      }
      graph.backward(loss);
      model.parameters().adam_step(adam);
      epoch_loss += value * static_cast<double>(batch.size());
    }
    epoch_loss /= static_cast<double>(order.size());
    model.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(static_cast<int>(model.loss_history.size()), epoch_loss);
  }
}

Model train(const ModelConfig& config, const data::SampleSet& samples,
            const data::ScalerStats& scaler, TrainingTrace* trace, const EpochCallback& on_epoch) {
  Model model(config);
  model.scaler = scaler;
  if (trace) trace->initial_loss = evaluate_loss(model, samples);
  train_epochs(model, samples, config.epochs, trace, on_epoch);
  return model;
}

UnitInference infer_unit(const Model& model, const data::SampleSet& samples, std::size_t unit,
                         std::size_t batch_size) {
  UnitInference out;
  out.unit = unit;
  const auto& info = samples.units().at(unit);
  const auto [first, last] = samples.unit_samples(unit);
  out.windows.reserve(last - first);
  net::Tensor x, y, c;
  std::vector<std::size_t> idx;
  for (std::size_t begin = first; begin < last; begin += batch_size) {
    const std::size_t end = std::min(last, begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    samples.fill_batch(idx, x, y, c);
    auto outs = model.infer(x);
    for (auto& o : outs) out.windows.push_back(std::move(o));
  }
  for (std::size_t s = 0; s < info.cycle_count; ++s) {
    const auto& slot = samples.cycles()[info.first_cycle_slot + s];
    out.cycles.push_back(slot.cycle);
    out.cycle_begin.push_back(slot.first_sample - first);
  }
  out.cycle_begin.push_back(last - first);
  return out;
}

double cycle_rul(std::span<const double> scaled) {
  if (scaled.empty()) throw InputError("cycle_rul: no windows");
  double acc = 0.0;
  for (double v : scaled) acc += v;
  const double mean = acc / static_cast<double>(scaled.size()) * data::kRulScale;
  return mean > 0.0 ? mean : 0.0;
}

std::vector<CyclePrediction> predict_trajectory(const Model& model, const UnitInference& unit) {
  const std::size_t k = predicts_concepts(model.family()) ? model.config().concepts : 0;
  std::vector<CyclePrediction> out;
  std::vector<double> rul;
  for (std::size_t q = 0; q < unit.cycles.size(); ++q) {
    CyclePrediction p;
    p.cycle = unit.cycles[q];
    p.activations.assign(k, 0.0);
    rul.clear();
    const std::size_t b = unit.cycle_begin[q], e = unit.cycle_begin[q + 1];
    for (std::size_t w = b; w < e; ++w) {
      rul.push_back(unit.windows[w].rul);
      for (std::size_t j = 0; j < k; ++j) p.activations[j] += unit.windows[w].activations[j];
    }
    for (double& a : p.activations) a /= static_cast<double>(e - b);
    p.rul = cycle_rul(rul);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<CyclePrediction> predict_trajectory(const Model& model,
                                                const data::SampleSet& samples, std::size_t unit) {
  return predict_trajectory(model, infer_unit(model, samples, unit));
}

}  // namespace cbmrul::model
