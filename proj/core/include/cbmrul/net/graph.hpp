#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cbmrul/net/optim.hpp"
#include "cbmrul/net/tensor.hpp"

namespace cbmrul::net {

inline constexpr double kBceEpsilon = 1e-7;

// Forward kernels on plain tensors. Batched variants take the batch as the
// leading axis; single-sample shapes from the layer contracts are accepted
// too (rank one less).

/// input [B, C_in, T] or [C_in, T]; weights [C_out, C_in, K]; bias [C_out].
/// Stride 1, valid padding.
Tensor conv1d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
/// input [B, n] or [n]; weights [m, n]; bias [m].
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
double sigmoid(double x);
double mse_loss(std::span<const double> pred, std::span<const double> target);
/// Mean binary cross-entropy; probabilities clamped into [eps, 1-eps].
double bce_loss(std::span<const double> prob, std::span<const double> label);

/// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = 0;
};

/// Tape for one forward pass. Each op records its output and a closure that
/// propagates the output gradient to its inputs. backward() runs the tape in
/// reverse once and accumulates parameter gradients into Parameter::grad.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding data that does not need a gradient.
  Var constant(Tensor value);
  /// Leaf bound to a trainable parameter.
  Var parameter(Parameter& param);

  Var conv1d(Var input, Var weights, Var bias);
  Var dense(Var input, Var weights, Var bias);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var reshape(Var x, Shape shape);
  /// Columns [begin, end) of a [B, n] tensor.
  Var slice_columns(Var x, std::size_t begin, std::size_t end);
  /// [B, p] ++ [B, q] -> [B, p + q].
  Var concat_columns(Var a, Var b);
  /// Hard threshold 1[x > 0.5] forward; identity gradient (straight-through).
  Var threshold_straight_through(Var x);
  /// Elementwise: mask[i] != 0 ? replacement[i] : x[i]. Replaced entries
  /// pass no gradient.
  Var substitute(Var x, const Tensor& replacement, const std::vector<char>& mask);
  /// prob [B, k]; positive/negative [B, k*m] -> p*pos + (1-p)*neg per block.
  Var mix_embeddings(Var prob, Var positive, Var negative);
  /// positive/negative [B, k*m] -> [B*k, 2m] rows [pos_i ; neg_i].
  Var pair_rows(Var positive, Var negative, std::size_t concepts);
  Var mse(Var pred, const Tensor& target);
  Var bce(Var prob, const Tensor& labels);
  /// a + weight * b for scalar nodes.
  Var weighted_sum(Var a, Var b, double weight);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient w.r.t. node v after backward(); zeros if none reached it.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse pass from a scalar loss. Throws UsageError on a second call.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Graph&)> propagate;
  };

  Var push(Tensor value, bool needs_grad, std::function<void(Graph&)> propagate);
  Tensor& grad_ref(std::size_t id);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace cbmrul::net
