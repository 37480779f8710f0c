#include "gatedbev/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gatedbev/errors.hpp"
#include "gatedbev/kernels.hpp"

namespace gatedbev::autodiff {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string());
}

kernels::ConvShape conv_shape(const Tensor& x, const Tensor& w, const Tensor& b, const char* op) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != 3 || w.dim(3) != 3 || b.rank() != 1 ||
      b.dim(0) != w.dim(0))
    throw ShapeError(std::string(op) + ": input " + x.shape_string() + ", kernel " + w.shape_string() + ", bias " +
                     b.shape_string());
  return {x.dim(0), w.dim(0), x.dim(1), x.dim(2)};
}

}  // namespace

double focal_term(double z, double y, double alpha, double beta) {
  if (y == 1.0) return std::pow(sigmoid(-z), alpha) * softplus(-z);
  return std::pow(1.0 - y, beta) * std::pow(sigmoid(z), alpha) * softplus(z);
}

double focal_term_grad(double z, double y, double alpha, double beta) {
  const double p = sigmoid(z);
  const double q = sigmoid(-z);  // 1 - p without cancellation
  if (y == 1.0) return -alpha * p * std::pow(q, alpha) * softplus(-z) - std::pow(q, alpha + 1.0);
  return std::pow(1.0 - y, beta) * (alpha * std::pow(p, alpha) * q * softplus(z) + std::pow(p, alpha + 1.0));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back({std::move(value), {}, requires_grad, {}});
  return {static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, Backprop backprop) {
  bool rg = false;
  for (Var p : parents) rg = rg || requires_grad(p);
  nodes_.push_back({std::move(value), {}, rg, rg ? std::move(backprop) : Backprop{}});
  return {static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad_accumulator(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape);
  return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_accumulator(v); }

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar, got " + value(root).shape_string());
  grad_accumulator(root).data[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backprop || n.grad.shape != n.value.shape) continue;
    // The closure may grow other nodes' gradients but never this vector.
    const Tensor g = n.grad;
    n.backprop(*this, g);
  }
}

Var conv3x3(Tape& t, Var x, Var w, Var b) {
  const auto s = conv_shape(t.value(x), t.value(w), t.value(b), "conv3x3");
  Tensor out({s.out_channels, s.height, s.width});
  kernels::conv3x3_forward(s, t.value(x).data, t.value(w).data, t.value(b).data, out.data);
  return t.push(std::move(out), {x, w, b}, [=](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(w) || tp.requires_grad(b)) {
      Tensor gw(tp.value(w).shape), gb(tp.value(b).shape);
      kernels::conv3x3_backward_weight(s, g.data, tp.value(x).data, gw.data, gb.data);
      if (tp.requires_grad(w)) {
        auto& acc = tp.grad_accumulator(w);
        for (std::size_t i = 0; i < gw.size(); ++i) acc.data[i] += gw.data[i];
      }
      if (tp.requires_grad(b)) {
        auto& acc = tp.grad_accumulator(b);
        for (std::size_t i = 0; i < gb.size(); ++i) acc.data[i] += gb.data[i];
      }
    }
    if (tp.requires_grad(x)) kernels::conv3x3_backward_input(s, g.data, tp.value(w).data, tp.grad_accumulator(x).data);
  });
}

Var gated_conv3x3(Tape& t, Var x, Var gates, Var w, Var b) {
  const auto s = conv_shape(t.value(x), t.value(w), t.value(b), "gated_conv3x3");
  const Tensor& gv = t.value(gates);
  if (gv.size() != s.in_channels)
    throw ShapeError("gated_conv3x3: " + std::to_string(gv.size()) + " gates for " + std::to_string(s.in_channels) +
                     " input channels");
  Tensor scaled = t.value(w);
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t c = 0; c < s.in_channels; ++c)
      for (std::size_t k = 0; k < 9; ++k) scaled.data[(o * s.in_channels + c) * 9 + k] *= gv.data[c];
  Tensor out({s.out_channels, s.height, s.width});
  kernels::conv3x3_forward(s, t.value(x).data, scaled.data, t.value(b).data, out.data);
  return t.push(std::move(out), {x, gates, w, b}, [=, scaled = std::move(scaled)](Tape& tp, const Tensor& g) {
    const Tensor& wv = tp.value(w);
    const Tensor& gate = tp.value(gates);
    if (tp.requires_grad(w) || tp.requires_grad(gates) || tp.requires_grad(b)) {
      // Gradient with respect to the gate-scaled kernel, then split by the product rule.
      Tensor gs(wv.shape), gb(tp.value(b).shape);
      kernels::conv3x3_backward_weight(s, g.data, tp.value(x).data, gs.data, gb.data);
      if (tp.requires_grad(w)) {
        auto& acc = tp.grad_accumulator(w);
        for (std::size_t o = 0; o < s.out_channels; ++o)
          for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t k = 0; k < 9; ++k) {
              const std::size_t i = (o * s.in_channels + c) * 9 + k;
              acc.data[i] += gate.data[c] * gs.data[i];
            }
      }
      if (tp.requires_grad(gates)) {
        auto& acc = tp.grad_accumulator(gates);
        for (std::size_t o = 0; o < s.out_channels; ++o)
          for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t k = 0; k < 9; ++k) {
              const std::size_t i = (o * s.in_channels + c) * 9 + k;
              acc.data[c] += wv.data[i] * gs.data[i];
            }
      }
      if (tp.requires_grad(b)) {
        auto& acc = tp.grad_accumulator(b);
        for (std::size_t i = 0; i < gb.size(); ++i) acc.data[i] += gb.data[i];
      }
    }
    if (tp.requires_grad(x)) kernels::conv3x3_backward_input(s, g.data, scaled.data, tp.grad_accumulator(x).data);
  });
}

Var context_gates(Tape& t, Var weight, Var bias, const Context& ctx, Variant variant, int c1, int c2) {
  const auto n1 = static_cast<std::size_t>(c1), n2 = static_cast<std::size_t>(c2);
  const std::size_t dim = variant == Variant::constrained ? 2 : n1 + n2;
  if (variant == Variant::agnostic) throw ConfigError("context_gates: the agnostic variant has no gate network");
  if (t.value(weight).shape != std::vector<std::size_t>{dim, 2} || t.value(bias).shape != std::vector<std::size_t>{dim})
    throw ShapeError("context_gates: weight " + t.value(weight).shape_string() + " / bias " +
                     t.value(bias).shape_string() + " do not match gate_dim " + std::to_string(dim));
  const double night = ctx.is_night ? 1.0 : 0.0, rain = ctx.is_rain ? 1.0 : 0.0;
  std::vector<double> raw_gate(dim);
  for (std::size_t i = 0; i < dim; ++i)
    raw_gate[i] = sigmoid(t.value(weight).data[2 * i] * night + t.value(weight).data[2 * i + 1] * rain +
                          t.value(bias).data[i]);
  // Channel c draws from gate unit source(c).
  std::vector<std::size_t> source(n1 + n2);
  for (std::size_t c = 0; c < n1 + n2; ++c) source[c] = variant == Variant::constrained ? (c < n1 ? 0 : 1) : c;
  Tensor out({n1 + n2});
  for (std::size_t c = 0; c < n1 + n2; ++c) out.data[c] = raw_gate[source[c]];
  return t.push(std::move(out), {weight, bias}, [=](Tape& tp, const Tensor& g) {
    std::vector<double> draw(dim, 0.0);
    for (std::size_t c = 0; c < source.size(); ++c) {
      const double s = raw_gate[source[c]];
      draw[source[c]] += g.data[c] * s * (1.0 - s);
    }
    if (tp.requires_grad(weight)) {
      auto& acc = tp.grad_accumulator(weight);
      for (std::size_t i = 0; i < dim; ++i) {
        acc.data[2 * i] += draw[i] * night;
        acc.data[2 * i + 1] += draw[i] * rain;
      }
    }
    if (tp.requires_grad(bias)) {
      auto& acc = tp.grad_accumulator(bias);
      for (std::size_t i = 0; i < dim; ++i) acc.data[i] += draw[i];
    }
  });
}

Var relu(Tape& t, Var x) {
  Tensor out = t.value(x);
  for (auto& v : out.data) v = std::max(0.0, v);
  return t.push(std::move(out), {x}, [=](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    auto& acc = tp.grad_accumulator(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv.data[i] > 0.0) acc.data[i] += g.data[i];
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += t.value(b).data[i];
  return t.push(std::move(out), {a, b}, [=](Tape& tp, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      auto& acc = tp.grad_accumulator(v);
      for (std::size_t i = 0; i < g.size(); ++i) acc.data[i] += g.data[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "mul");
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= t.value(b).data[i];
  return t.push(std::move(out), {a, b}, [=](Tape& tp, const Tensor& g) {
    const Tensor av = tp.value(a);
    const Tensor bv = tp.value(b);
    if (tp.requires_grad(a)) {
      auto& acc = tp.grad_accumulator(a);
      for (std::size_t i = 0; i < g.size(); ++i) acc.data[i] += g.data[i] * bv.data[i];
    }
    if (tp.requires_grad(b)) {
      auto& acc = tp.grad_accumulator(b);
      for (std::size_t i = 0; i < g.size(); ++i) acc.data[i] += g.data[i] * av.data[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  for (auto& v : out.data) v *= s;
  return t.push(std::move(out), {a}, [=](Tape& tp, const Tensor& g) {
    auto& acc = tp.grad_accumulator(a);
    for (std::size_t i = 0; i < g.size(); ++i) acc.data[i] += s * g.data[i];
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data) s += v;
  return t.push(Tensor({1}, s), {a}, [=](Tape& tp, const Tensor& g) {
    auto& acc = tp.grad_accumulator(a);
    for (auto& v : acc.data) v += g.data[0];
  });
}

Var focal_loss(Tape& t, Var logits, const Tensor& target, double alpha, double beta) {
  require_same_shape(t.value(logits), target, "focal_loss");
  const Tensor& z = t.value(logits);
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += focal_term(z.data[i], target.data[i], alpha, beta);
    if (target.data[i] == 1.0) ++positives;
  }
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives));
  return t.push(Tensor({1}, total * norm), {logits}, [=, target = target](Tape& tp, const Tensor& g) {
    const Tensor& zv = tp.value(logits);
    auto& acc = tp.grad_accumulator(logits);
    const double k = g.data[0] * norm;
    for (std::size_t i = 0; i < zv.size(); ++i) acc.data[i] += k * focal_term_grad(zv.data[i], target.data[i], alpha, beta);
  });
}

Var masked_l1(Tape& t, Var pred, const Tensor& target, const Tensor& mask) {
  require_same_shape(t.value(pred), target, "masked_l1");
  const Tensor& p = t.value(pred);
  const std::size_t channels = p.dim(0), cells = p.dim(1) * p.dim(2);
  if (mask.size() != cells) throw ShapeError("masked_l1: mask " + mask.shape_string() + " vs prediction " + p.shape_string());
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (!(mask.data[i] > 0.0)) continue;
    ++valid;
    for (std::size_t c = 0; c < channels; ++c) total += std::abs(p.data[c * cells + i] - target.data[c * cells + i]);
  }
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, valid));
  return t.push(Tensor({1}, total * norm), {pred}, [=, target = target, mask = mask](Tape& tp, const Tensor& g) {
    const Tensor& pv = tp.value(pred);
    auto& acc = tp.grad_accumulator(pred);
    const double k = g.data[0] * norm;
    for (std::size_t i = 0; i < cells; ++i) {
      if (!(mask.data[i] > 0.0)) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = pv.data[c * cells + i] - target.data[c * cells + i];
        acc.data[c * cells + i] += k * static_cast<double>((d > 0.0) - (d < 0.0));
      }
    }
  });
}

}  // namespace gatedbev::autodiff
