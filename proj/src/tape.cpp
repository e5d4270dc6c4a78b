// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "ramanmatch/ndcore.hpp"

namespace ramanmatch::nd {

const Tensor& Var::value() const { return tape->value(*this); }
const Tensor& Var::grad() const { return tape->grad(*this); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.tag = OpTag::constant;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::frozen(const Tensor& value) {
  Node n;
  n.external = &value;
  n.tag = OpTag::constant;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.external = &param.value;
  n.param = &param;
  n.tag = OpTag::parameter;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.value;
}

const Tensor& Tape::grad(Var v) const { return nodes_.at(v.id).grad; }

std::size_t Tape::count(OpTag tag) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(),
                    [tag](const Node& n) { return n.tag == tag; }));
}

Var Tape::push(Tensor value, OpTag tag, std::initializer_list<Var> parents) {
  return push(std::move(value), tag, parents, Attrs{});
}

Var Tape::push(Tensor value, OpTag tag, std::initializer_list<Var> parents,
               Attrs attrs) {
  Node n;
  n.value = std::move(value);
  n.tag = tag;
  n.attrs = std::move(attrs);
  for (Var p : parents) {
    if (p.tape != this) {
      throw std::invalid_argument("op mixes variables from different tapes");
    }
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void backward_node(Tape& tape, std::size_t id);  // ops.cpp

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss is not on this tape");
  if (!value(loss).is_scalar()) {
    throw ShapeError("backward requires a scalar loss, got " +
                     value(loss).shape_string());
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    const Tensor& v = value({this, i});
    if (n.grad.same_shape(v)) {
      n.grad.fill(0.0);
    } else {
      n.grad = Tensor(v.batch(), v.channels(), v.width());
    }
  }
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.tag == OpTag::parameter) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (n.tag != OpTag::constant) {
      backward_node(*this, i);
    }
  }
}

}  // namespace ramanmatch::nd
