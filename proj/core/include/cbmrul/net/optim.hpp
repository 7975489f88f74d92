#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbmrul/net/rng.hpp"
#include "cbmrul/net/tensor.hpp"

namespace cbmrul::net {

/// One trainable tensor with its gradient and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;

  Parameter(std::string n, Tensor v);
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class ParameterSet {
 public:
  /// Adds a parameter; names must be unique. Returns its index.
  std::size_t add(std::string name, Tensor value);

  /// He-style fan-in uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
  /// Each tensor draws from its own stream keyed by name, so identically
  /// named layers start identical across model families.
  std::size_t add_he_uniform(std::string name, Shape shape, std::size_t fan_in,
                             std::uint64_t seed);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::uint64_t step_count() const { return steps_; }
  void set_step_count(std::uint64_t steps) { steps_ = steps; }

  /// Bias-corrected Adam update using the accumulated gradients.
  void adam_step(const AdamOptions& options);

 private:
  std::vector<Parameter> params_;
  std::uint64_t steps_ = 0;
};

}  // namespace cbmrul::net
