#include "cbmrul/net/optim.hpp"

#include <cmath>
#include <numbers>

namespace cbmrul {

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace net {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.shape()),
      first_moment(value.shape()),
      second_moment(value.shape()) {}

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  params_.emplace_back(std::move(name), std::move(value));
  return params_.size() - 1;
}

std::size_t ParameterSet::add_he_uniform(std::string name, Shape shape,
                                         std::size_t fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng = make_rng(seed, "init/" + name);
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.storage()) v = uniform(rng, -limit, limit);
  return add(std::move(name), std::move(t));
}

Parameter& ParameterSet::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterSet::adam_step(const AdamOptions& options) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (auto& p : params_) {
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = p.first_moment.data();
    double* v = p.second_moment.data();
    for (std::size_t i = 0, n = p.value.size(); i < n; ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      double m_hat = m[i] / correction1;
      double v_hat = v[i] / correction2;
      w[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

}  // namespace net
}  // namespace cbmrul
