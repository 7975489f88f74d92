#include <benchmark/benchmark.h>

#include "cbmrul/eval/metrics.hpp"
#include "cbmrul/model/model.hpp"
#include "cbmrul/net/graph.hpp"
#include "cbmrul/net/rng.hpp"

using namespace cbmrul;

namespace {

net::Tensor random_tensor(net::Shape shape, std::uint64_t seed) {
  net::Tensor t(std::move(shape));
  Rng rng = make_rng(seed, "bench");
  for (double& v : t.storage()) v = uniform(rng, -1.0, 1.0);
  return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo, double hi) {
  Rng rng = make_rng(seed, "bench");
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

model::ModelConfig config_for(model::Family family) {
  model::ModelConfig c;
  c.family = family;
  c.concepts = 2;
  return c;
}

void BM_Conv1d(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({batch, 18, 50}, 1);
  const auto w = random_tensor({10, 18, 10}, 2);
  const auto b = random_tensor({10}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net::conv1d_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Conv1d)->Arg(1)->Arg(256);

void BM_Dense(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({batch, 420}, 1);
  const auto w = random_tensor({256, 420}, 2);
  const auto b = random_tensor({256}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net::dense_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Dense)->Arg(1)->Arg(256);

void BM_Inference(benchmark::State& state) {
  const auto family = static_cast<model::Family>(state.range(0));
  const model::Model m(config_for(family));
  const auto x = random_tensor({256, 18, 50}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(m.infer(x));
  state.SetLabel(model::to_string(family));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_Inference)->DenseRange(0, 5);

void BM_TrainStep(benchmark::State& state) {
  const auto family = static_cast<model::Family>(state.range(0));
  model::Model m(config_for(family));
  const auto x = random_tensor({256, 18, 50}, 5);
  const auto y = random_tensor({256, 1}, 6);
  net::Tensor c({256, 2});
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<double>(i % 3 == 0);
  for (auto _ : state) {
    net::Graph g;
    const auto fwd = m.forward(g, x, true);
    g.backward(m.loss(g, fwd, y, c));
    m.parameters().zero_grad();
  }
  state.SetLabel(model::to_string(family));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 5);

void BM_Nasa(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_vector(n, 7, 0, 100), y = random_vector(n, 8, 0, 100);
  for (auto _ : state) benchmark::DoNotOptimize(eval::nasa_score(p, y));
}
BENCHMARK(BM_Nasa)->Arg(4000);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = random_vector(n, 9, 0, 1);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<double>(i % 2);
  for (auto _ : state) benchmark::DoNotOptimize(eval::auc_roc(s, labels));
}
BENCHMARK(BM_Auc)->Arg(4000);

void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pts = random_vector(n * 16, 10, -1, 1);
  eval::KMeansOptions opt;
  opt.clusters = 10;
  for (auto _ : state) benchmark::DoNotOptimize(eval::kmeans(pts, 16, opt));
}
BENCHMARK(BM_KMeans)->Arg(2000);

}  // namespace
BENCHMARK_MAIN();
