// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a closed vocabulary of 1D layer ops.
//
// A Tape records every op in creation order, which is already a topological
// order, so backward() is a single reverse sweep. Parameter leaves keep a
// pointer to their ParameterSet entry and accumulate into Parameter::grad.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ramanmatch/parameters.hpp"
#include "ramanmatch/tensor.hpp"

namespace ramanmatch::nd {

using Rng = std::mt19937_64;

enum class Mode { train, eval };

enum class OpTag : std::uint8_t {
  constant,
  parameter,
  conv1d,
  depthwise_conv1d,
  batch_norm,
  leaky_relu,
  max_pool1d,
  dropout,
  linear,
  sigmoid,
  add,
  sub,
  mul,
  abs,
  concat_width,
  gather_batch,
  sum_squares,
  scale,
  binary_cross_entropy,
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

class Tape {
 public:
  struct Attrs {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t window = 0;
    double scalar = 0.0;
    double eps = 0.0;
    Mode mode = Mode::eval;
    std::vector<std::size_t> indices;
    std::vector<double> saved;
    std::vector<double> saved2;
  };

  struct Node {
    Tensor value;
    Tensor grad;
    OpTag tag = OpTag::constant;
    std::vector<std::size_t> parents;
    const Tensor* external = nullptr;  // leaf value owned elsewhere
    Parameter* param = nullptr;        // grads flow into this entry
    bool requires_grad = false;
    Attrs attrs;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf owning its value; never receives gradient.
  Var constant(Tensor value);
  /// Leaf referencing a tensor that must outlive the tape; no gradient.
  Var frozen(const Tensor& value);
  /// Trainable leaf; backward() adds into param.grad.
  Var parameter(Parameter& param);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  /// Sweeps the tape in reverse from a scalar root. Node gradients are reset
  /// at the start of every call; parameter gradients accumulate.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::size_t count(OpTag tag) const;

  // Low-level interface used by the op implementations.
  Var push(Tensor value, OpTag tag, std::initializer_list<Var> parents);
  Var push(Tensor value, OpTag tag, std::initializer_list<Var> parents,
           Attrs attrs);
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

 private:
  std::vector<Node> nodes_;
};

/// Running statistics used by batch_norm. Train mode requires the mutable
/// pointers; eval mode only reads.
struct BatchNormBuffers {
  const Tensor* mean = nullptr;
  const Tensor* var = nullptr;
  const Tensor* count = nullptr;
  Tensor* mutable_mean = nullptr;
  Tensor* mutable_var = nullptr;
  Tensor* mutable_count = nullptr;
};

/// Cross-correlation with full channel mixing.
/// x: (n, ci, w), weight: (co, ci, k), bias: (1, 1, co) or none.
Var conv1d(Var x, Var weight, std::optional<Var> bias, std::size_t stride,
           std::size_t padding);

/// Per-channel convolution, same padding, stride 1. weight: (c, 1, k).
Var depthwise_conv1d(Var x, Var weight);

/// 1x1 channel mixing followed by a per-channel width convolution.
/// pointwise: (co, ci, 1), depthwise: (co, 1, kernel).
Var separable_conv1d(Var x, Var pointwise_weight, Var depthwise_weight,
                     std::size_t kernel);

/// Statistics per channel over batch and width. gamma/beta: (1, c, 1).
Var batch_norm(Var x, Var gamma, Var beta, const BatchNormBuffers& buffers,
               Mode mode, double momentum, double eps);

Var leaky_relu(Var x, double slope);

/// Windowed max per channel; ties resolve to the first index.
Var max_pool1d(Var x, std::size_t window, std::size_t stride);

/// Inverted dropout; identity in eval mode or at rate 0.
Var dropout(Var x, double rate, Mode mode, Rng& rng);

/// Flattens each batch item to c*w and applies weight (1, out, c*w) and
/// bias (1, 1, out). Output: (n, 1, out).
Var linear(Var x, Var weight, Var bias);

Var sigmoid(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var abs(Var x);
Var scale(Var x, double factor);

/// Joins (n, c, w1) and (n, c, w2) into (n, c, w1 + w2).
Var concat_width(Var a, Var b);

/// Selects batch items by index; repeated indices allowed.
Var gather_batch(Var x, std::span<const std::size_t> indices);

/// Scalar sum of squared entries.
Var sum_squares(Var x);

/// Mean binary cross-entropy of probabilities p (n, 1, 1) against labels in
/// {0, 1}. Probabilities are clamped to [1e-12, 1 - 1e-12].
Var binary_cross_entropy(Var p, std::span<const double> labels);

}  // namespace ramanmatch::nd
