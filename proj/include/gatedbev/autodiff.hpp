#pragma once

#include <functional>
#include <vector>

#include "gatedbev/fusion.hpp"
#include "gatedbev/synth.hpp"
#include "gatedbev/tensor.hpp"

// Minimal reverse-mode differentiation over the handful of coarse operators the
// detector needs. Each op records its output value and a closure that pushes
// the output gradient into its parents; backward() replays closures in reverse.

namespace gatedbev::autodiff {

struct Var {
  int id = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor& grad_out)>;

  Var leaf(Tensor value, bool requires_grad);

  // Appends an op result. requires_grad is inherited from parents.
  Var push(Tensor value, std::initializer_list<Var> parents, Backprop backprop);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }

  // Gradient accumulated so far; zero-shaped like value() if nothing flowed in.
  const Tensor& grad(Var v);

  // Accumulator for a parent's gradient, allocated on first use.
  Tensor& grad_accumulator(Var v);

  // Seeds d(root)/d(root) = 1 for a scalar root and runs every closure in reverse order.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

// 3x3 stride-1 padding-1 convolution; w is Cout x Cin x 3 x 3, b is Cout.
Var conv3x3(Tape& t, Var x, Var w, Var b);

// Convolution whose input channel c is scaled by gates[c] (a Cin vector).
Var gated_conv3x3(Tape& t, Var x, Var gates, Var w, Var b);

// sigmoid(weight * (night, rain) + bias), broadcast to C1 + C2 per-channel gates.
Var context_gates(Tape& t, Var weight, Var bias, const Context& ctx, Variant variant, int c1, int c2);

Var relu(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);  // element-wise
Var scale(Tape& t, Var a, double s);
Var sum(Tape& t, Var a);  // scalar (shape {1})

// Penalty-reduced focal loss on logits, summed and divided by max(1, #cells with target == 1).
Var focal_loss(Tape& t, Var logits, const Tensor& target, double alpha, double beta);

// sum over cells with mask > 0 and all channels of |pred - target|, divided by max(1, #masked cells).
Var masked_l1(Tape& t, Var pred, const Tensor& target, const Tensor& mask);

// Per-cell focal term and its derivative with respect to the logit.
double focal_term(double logit, double target, double alpha, double beta);
double focal_term_grad(double logit, double target, double alpha, double beta);

}  // namespace gatedbev::autodiff
