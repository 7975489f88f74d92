#include "cbmrul/net/graph.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace cbmrul::net {
namespace {

struct ConvDims {
  std::size_t batch, in_channels, length, out_channels, kernel, out_length;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 3) throw ConfigError("conv1d weights must be [C_out, C_in, K]");
  ConvDims d{};
  if (input.rank() == 3) {
    d.batch = input.dim(0);
    d.in_channels = input.dim(1);
    d.length = input.dim(2);
  } else if (input.rank() == 2) {
    d.batch = 1;
    d.in_channels = input.dim(0);
    d.length = input.dim(1);
  } else {
    throw ConfigError("conv1d input must be [B, C, T] or [C, T], got " +
                      shape_string(input.shape()));
  }
  d.out_channels = weights.dim(0);
  d.kernel = weights.dim(2);
  if (weights.dim(1) != d.in_channels) {
    throw ConfigError("conv1d expects " + std::to_string(weights.dim(1)) +
                      " input channels, got " + std::to_string(d.in_channels));
  }
  if (bias.size() != d.out_channels) throw ConfigError("conv1d bias size mismatch");
  if (d.kernel == 0 || d.length < d.kernel) {
    throw ConfigError("conv1d kernel " + std::to_string(d.kernel) +
                      " longer than input length " + std::to_string(d.length));
  }
  d.out_length = d.length - d.kernel + 1;
  return d;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMatrix>;
using ConstMap = Eigen::Map<const RowMatrix>;

// [C_in*K, B*T_out]: row (i, k) holds input channel i shifted by k for every sample.
std::vector<double> im2col(const double* x, const ConvDims& d) {
  const std::size_t n = d.batch * d.out_length;
  std::vector<double> cols(d.in_channels * d.kernel * n);
  for (std::size_t i = 0; i < d.in_channels; ++i) {
    for (std::size_t k = 0; k < d.kernel; ++k) {
      double* dst = cols.data() + (i * d.kernel + k) * n;
      for (std::size_t b = 0; b < d.batch; ++b) {
        std::copy_n(x + (b * d.in_channels + i) * d.length + k, d.out_length,
                    dst + b * d.out_length);
      }
    }
  }
  return cols;
}

struct DenseDims {
  std::size_t batch, in_dim, out_dim;
};

DenseDims dense_dims(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) throw ConfigError("dense weights must be [m, n]");
  DenseDims d{};
  d.out_dim = weights.dim(0);
  d.in_dim = weights.dim(1);
  if (input.rank() == 1) {
    d.batch = 1;
  } else if (input.rank() == 2) {
    d.batch = input.dim(0);
  } else {
    throw ConfigError("dense input must be [B, n] or [n], got " +
                      shape_string(input.shape()));
  }
  if (input.size() != d.batch * d.in_dim) {
    throw ConfigError("dense expects input width " + std::to_string(d.in_dim) +
                      ", got " + shape_string(input.shape()));
  }
  if (bias.size() != d.out_dim) throw ConfigError("dense bias size mismatch");
  return d;
}

void check_scalar_shapes(const Tensor& a, const Tensor& b, const char* what) {
  if (a.size() != b.size()) {
    throw ConfigError(std::string(what) + ": size mismatch " + shape_string(a.shape()) +
                      " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Tensor conv1d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const ConvDims d = conv_dims(input, weights, bias);
  Shape out_shape = input.rank() == 3 ? Shape{d.batch, d.out_channels, d.out_length}
                                      : Shape{d.out_channels, d.out_length};
  const std::size_t n = d.batch * d.out_length;
  std::vector<double> cols = im2col(input.data(), d);
  RowMatrix y(d.out_channels, n);
  y.noalias() = ConstMap(weights.data(), d.out_channels, d.in_channels * d.kernel) *
                ConstMap(cols.data(), d.in_channels * d.kernel, n);
  Tensor out(out_shape);
  double* dst = out.data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const double* src = y.data() + o * n + b * d.out_length;
      double* row = dst + (b * d.out_channels + o) * d.out_length;
      for (std::size_t t = 0; t < d.out_length; ++t) row[t] = src[t] + bias[o];
    }
  }
  return out;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const DenseDims d = dense_dims(input, weights, bias);
  Shape out_shape = input.rank() == 2 ? Shape{d.batch, d.out_dim} : Shape{d.out_dim};
  Tensor out(out_shape);
  Map y(out.data(), d.batch, d.out_dim);
  y.noalias() = ConstMap(input.data(), d.batch, d.in_dim) *
                ConstMap(weights.data(), d.out_dim, d.in_dim).transpose();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_dim; ++o) y(b, o) += bias[o];
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.storage()) v = sigmoid(v);
  return out;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ConfigError("mse: size mismatch");
  if (pred.empty()) throw InputError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

double bce_loss(std::span<const double> prob, std::span<const double> label) {
  if (prob.size() != label.size()) throw ConfigError("bce: size mismatch");
  if (prob.empty()) throw InputError("bce: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double c = label[i];
    if (c != 0.0 && c != 1.0) {
      throw InputError("bce: label " + std::to_string(c) + " is not in {0,1}");
    }
    const double p = std::clamp(prob[i], kBceEpsilon, 1.0 - kBceEpsilon);
    acc -= c * std::log(p) + (1.0 - c) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(prob.size());
}

// ---------------------------------------------------------------------------

Var Graph::push(Tensor value, bool needs_grad, std::function<void(Graph&)> propagate) {
  if (backward_done_) throw UsageError("graph already consumed by backward()");
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.propagate = std::move(propagate);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tensor& Graph::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Graph::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Graph::parameter(Parameter& param) {
  Var v = push(param.value, true, nullptr);
  nodes_[v.id].param = &param;
  return v;
}

Var Graph::conv1d(Var input, Var weights, Var bias) {
  Tensor out = conv1d_forward(value(input), value(weights), value(bias));
  const bool ng = needs_grad(input) || needs_grad(weights) || needs_grad(bias);
  const std::size_t self = nodes_.size();
  return push(std::move(out), ng, [=](Graph& g) {
    const Tensor& x = g.nodes_[input.id].value;
    const Tensor& w = g.nodes_[weights.id].value;
    const ConvDims d = conv_dims(x, w, g.nodes_[bias.id].value);
    const std::size_t n = d.batch * d.out_length;
    const std::size_t r = d.in_channels * d.kernel;
    // Output gradient as [C_out, B*T_out], matching the im2col layout.
    RowMatrix gy(d.out_channels, n);
    const double* gsrc = g.nodes_[self].grad.data();
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t o = 0; o < d.out_channels; ++o) {
        std::copy_n(gsrc + (b * d.out_channels + o) * d.out_length, d.out_length,
                    gy.data() + o * n + b * d.out_length);
      }
    }
    if (g.needs_grad(weights)) {
      const std::vector<double> cols = im2col(x.data(), d);
      Map(g.grad_ref(weights.id).data(), d.out_channels, r).noalias() +=
          gy * ConstMap(cols.data(), r, n).transpose();
    }
    if (g.needs_grad(bias)) {
      double* gb = g.grad_ref(bias.id).data();
      for (std::size_t o = 0; o < d.out_channels; ++o) gb[o] += gy.row(o).sum();
    }
    if (g.needs_grad(input)) {
      RowMatrix gcols(r, n);
      gcols.noalias() = ConstMap(w.data(), d.out_channels, r).transpose() * gy;
      double* gx = g.grad_ref(input.id).data();
      for (std::size_t i = 0; i < d.in_channels; ++i) {
        for (std::size_t k = 0; k < d.kernel; ++k) {
          const double* src = gcols.data() + (i * d.kernel + k) * n;
          for (std::size_t b = 0; b < d.batch; ++b) {
            double* dst = gx + (b * d.in_channels + i) * d.length + k;
            const double* s = src + b * d.out_length;
            for (std::size_t t = 0; t < d.out_length; ++t) dst[t] += s[t];
          }
        }
      }
    }
  });
}

Var Graph::dense(Var input, Var weights, Var bias) {
  Tensor out = dense_forward(value(input), value(weights), value(bias));
  const bool ng = needs_grad(input) || needs_grad(weights) || needs_grad(bias);
  const std::size_t self = nodes_.size();
  return push(std::move(out), ng, [=](Graph& g) {
    const Tensor& x = g.nodes_[input.id].value;
    const Tensor& w = g.nodes_[weights.id].value;
    const DenseDims d = dense_dims(x, w, g.nodes_[bias.id].value);
    ConstMap gy(g.nodes_[self].grad.data(), d.batch, d.out_dim);
    if (g.needs_grad(weights)) {
      Map(g.grad_ref(weights.id).data(), d.out_dim, d.in_dim).noalias() +=
          gy.transpose() * ConstMap(x.data(), d.batch, d.in_dim);
    }
    if (g.needs_grad(bias)) {
      double* gb = g.grad_ref(bias.id).data();
      for (std::size_t o = 0; o < d.out_dim; ++o) gb[o] += gy.col(o).sum();
    }
    if (g.needs_grad(input)) {
      Map(g.grad_ref(input.id).data(), d.batch, d.in_dim).noalias() +=
          gy * ConstMap(w.data(), d.out_dim, d.in_dim);
    }
  });
}

Var Graph::relu(Var x) {
  Tensor out = net::relu(value(x));
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(x), [=](Graph& g) {
    const Tensor& y = g.nodes_[self].value;
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var Graph::sigmoid(Var x) {
  Tensor out = net::sigmoid(value(x));
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(x), [=](Graph& g) {
    const Tensor& y = g.nodes_[self].value;
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
  });
}

Var Graph::reshape(Var x, Shape shape) {
  Tensor out = value(x).reshaped(std::move(shape));
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(x), [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var Graph::slice_columns(Var x, std::size_t begin, std::size_t end) {
  const Tensor& in = value(x);
  if (in.rank() != 2 || begin > end || end > in.dim(1)) {
    throw ConfigError("slice_columns out of range for " + shape_string(in.shape()));
  }
  const std::size_t rows = in.dim(0), cols = in.dim(1), width = end - begin;
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = in.at(r, begin + c);
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(x), [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) gx[r * cols + begin + c] += gy[r * width + c];
    }
  });
}

Var Graph::concat_columns(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0)) {
    throw ConfigError("concat_columns needs [B, p] and [B, q]");
  }
  const std::size_t rows = ta.dim(0), p = ta.dim(1), q = tb.dim(1);
  Tensor out({rows, p + q});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < p; ++c) out.at(r, c) = ta.at(r, c);
    for (std::size_t c = 0; c < q; ++c) out.at(r, p + c) = tb.at(r, c);
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(a) || needs_grad(b), [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_ref(a.id);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += gy[r * (p + q) + c];
      }
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_ref(b.id);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += gy[r * (p + q) + p + c];
      }
    }
  });
}

Var Graph::threshold_straight_through(Var x) {
  Tensor out = value(x);
  for (double& v : out.storage()) v = v > 0.5 ? 1.0 : 0.0;
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(x), [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var Graph::substitute(Var x, const Tensor& replacement, const std::vector<char>& mask) {
  const Tensor& in = value(x);
  if (replacement.size() != in.size() || mask.size() != in.size()) {
    throw ConfigError("substitute: size mismatch");
  }
  Tensor out = in;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = replacement[i];
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(x), [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (!mask[i]) gx[i] += gy[i];
    }
  });
}

Var Graph::mix_embeddings(Var prob, Var positive, Var negative) {
  const Tensor& p = value(prob);
  const Tensor& pos = value(positive);
  const Tensor& neg = value(negative);
  if (p.rank() != 2 || pos.shape() != neg.shape() || pos.rank() != 2 ||
      pos.dim(0) != p.dim(0) || p.dim(1) == 0 || pos.dim(1) % p.dim(1) != 0) {
    throw ConfigError("mix_embeddings: incompatible shapes");
  }
  const std::size_t rows = p.dim(0), k = p.dim(1), m = pos.dim(1) / k;
  Tensor out(pos.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      const double pi = p.at(r, i);
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t idx = r * k * m + i * m + j;
        out[idx] = pi * pos[idx] + (1.0 - pi) * neg[idx];
      }
    }
  }
  const std::size_t self = nodes_.size();
  const bool ng = needs_grad(prob) || needs_grad(positive) || needs_grad(negative);
  return push(std::move(out), ng, [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    const Tensor& pv = g.nodes_[prob.id].value;
    const Tensor& posv = g.nodes_[positive.id].value;
    const Tensor& negv = g.nodes_[negative.id].value;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < k; ++i) {
        const double pi = pv.at(r, i);
        double gp = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t idx = r * k * m + i * m + j;
          gp += gy[idx] * (posv[idx] - negv[idx]);
          if (g.needs_grad(positive)) g.grad_ref(positive.id)[idx] += gy[idx] * pi;
          if (g.needs_grad(negative)) g.grad_ref(negative.id)[idx] += gy[idx] * (1.0 - pi);
        }
        if (g.needs_grad(prob)) g.grad_ref(prob.id)[r * k + i] += gp;
      }
    }
  });
}

Var Graph::pair_rows(Var positive, Var negative, std::size_t concepts) {
  const Tensor& pos = value(positive);
  const Tensor& neg = value(negative);
  if (pos.rank() != 2 || pos.shape() != neg.shape() || concepts == 0 ||
      pos.dim(1) % concepts != 0) {
    throw ConfigError("pair_rows: incompatible shapes");
  }
  const std::size_t rows = pos.dim(0), m = pos.dim(1) / concepts;
  Tensor out({rows * concepts, 2 * m});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < concepts; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        out.at(r * concepts + i, j) = pos.at(r, i * m + j);
        out.at(r * concepts + i, m + j) = neg.at(r, i * m + j);
      }
    }
  }
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs_grad(positive) || needs_grad(negative), [=](Graph& g) {
    const Tensor& gy = g.nodes_[self].grad;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < concepts; ++i) {
        const std::size_t row = (r * concepts + i) * 2 * m;
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t idx = r * concepts * m + i * m + j;
          if (g.needs_grad(positive)) g.grad_ref(positive.id)[idx] += gy[row + j];
          if (g.needs_grad(negative)) g.grad_ref(negative.id)[idx] += gy[row + m + j];
        }
      }
    }
  });
}

Var Graph::mse(Var pred, const Tensor& target) {
  const Tensor& p = value(pred);
  check_scalar_shapes(p, target, "mse");
  const double loss = mse_loss(p.values(), target.values());
  const std::size_t self = nodes_.size();
  return push(Tensor::scalar(loss), needs_grad(pred), [=](Graph& g) {
    const double gl = g.nodes_[self].grad[0];
    const Tensor& pv = g.nodes_[pred.id].value;
    Tensor& gp = g.grad_ref(pred.id);
    const double scale = 2.0 * gl / static_cast<double>(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += scale * (pv[i] - target[i]);
  });
}

Var Graph::bce(Var prob, const Tensor& labels) {
  const Tensor& p = value(prob);
  check_scalar_shapes(p, labels, "bce");
  const double loss = bce_loss(p.values(), labels.values());
  const std::size_t self = nodes_.size();
  return push(Tensor::scalar(loss), needs_grad(prob), [=](Graph& g) {
    const double gl = g.nodes_[self].grad[0];
    const Tensor& pv = g.nodes_[prob.id].value;
    Tensor& gp = g.grad_ref(prob.id);
    const double scale = gl / static_cast<double>(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double q = pv[i];
      if (q < kBceEpsilon || q > 1.0 - kBceEpsilon) continue;
      const double c = labels[i];
      gp[i] += scale * (-c / q + (1.0 - c) / (1.0 - q));
    }
  });
}

Var Graph::weighted_sum(Var a, Var b, double weight) {
  if (value(a).size() != 1 || value(b).size() != 1) {
    throw ConfigError("weighted_sum expects scalar nodes");
  }
  const double v = value(a)[0] + weight * value(b)[0];
  const std::size_t self = nodes_.size();
  return push(Tensor::scalar(v), needs_grad(a) || needs_grad(b), [=](Graph& g) {
    const double gl = g.nodes_[self].grad[0];
    if (g.needs_grad(a)) g.grad_ref(a.id)[0] += gl;
    if (g.needs_grad(b)) g.grad_ref(b.id)[0] += weight * gl;
  });
}

void Graph::backward(Var loss) {
  if (backward_done_) {
    throw UsageError("backward() called twice on the same forward pass");
  }
  if (value(loss).size() != 1) throw UsageError("backward() needs a scalar loss");
  backward_done_ = true;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].needs_grad) grad_ref(id).fill(0.0);
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad) continue;
    if (n.propagate) n.propagate(*this);
    if (n.param != nullptr) {
      double* dst = n.param->grad.data();
      const double* src = n.grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
    }
  }
}

}  // namespace cbmrul::net
