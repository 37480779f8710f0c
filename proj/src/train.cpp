#include "gatedbev/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gatedbev/autodiff.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/rng.hpp"

namespace gatedbev {

namespace ad = autodiff;

Targets make_targets(const std::vector<Box3D>& boxes, const BEVGridSpec& grid, int num_classes) {
  grid.validate();
  const auto h = static_cast<std::size_t>(grid.height());
  const auto w = static_cast<std::size_t>(grid.width());
  Targets t{Tensor({static_cast<std::size_t>(num_classes), h, w}), Tensor({kRegressionChannels, h, w}),
            Tensor({1, h, w})};
  for (const Box3D& b : boxes) {
    if (b.class_id < 0 || b.class_id >= num_classes) throw ConfigError("box class_id outside the class table");
    const auto col = grid.col_of(b.center.x);
    const auto row = grid.row_of(b.center.y);
    if (!col || !row) continue;
    const double sigma = std::max(1.0, std::max({b.extent.x, b.extent.y, b.extent.z}) / (3.0 * grid.cell_size));
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const auto cls = static_cast<std::size_t>(b.class_id);
    for (int dr = -radius; dr <= radius; ++dr)
      for (int dc = -radius; dc <= radius; ++dc) {
        const int r = *row + dr, c = *col + dc;
        if (r < 0 || c < 0 || r >= static_cast<int>(h) || c >= static_cast<int>(w)) continue;
        const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        double& cell = t.heatmap.at(cls, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        cell = std::max(cell, v);
      }
    const auto r = static_cast<std::size_t>(*row), c = static_cast<std::size_t>(*col);
    const double reg[kRegressionChannels] = {b.center.x - grid.cell_center_x(*col),
                                             b.center.y - grid.cell_center_y(*row),
                                             b.center.z,
                                             std::log(b.extent.x),
                                             std::log(b.extent.y),
                                             std::log(b.extent.z),
                                             std::sin(b.yaw),
                                             std::cos(b.yaw)};
    for (std::size_t ch = 0; ch < kRegressionChannels; ++ch) t.regression.at(ch, r, c) = reg[ch];
    t.mask.at(0, r, c) = 1.0;
  }
  return t;
}

LossTerms detection_loss(const Tensor& heat_logits, const Tensor& regression, const Targets& targets,
                         const LossConfig& cfg) {
  // Evaluated through a throwaway tape so the formula lives in one place.
  ad::Tape tape;
  const ad::Var z = tape.leaf(heat_logits, false);
  const ad::Var r = tape.leaf(regression, false);
  LossTerms out;
  out.focal = tape.value(ad::focal_loss(tape, z, targets.heatmap, cfg.alpha, cfg.beta)).data[0];
  out.regression = tape.value(ad::masked_l1(tape, r, targets.regression, targets.mask)).data[0];
  out.total = out.focal + cfg.lambda_reg * out.regression;
  return out;
}

TrainingExample make_example(const Sample& sample, const BEVGridSpec& grid, const FeatureConfig& features,
                             int num_classes) {
  return {lidar_bev(sample.cloud, grid, features).channels, camera_bev(sample.cameras, grid, features).channels,
          sample.context, make_targets(sample.annotations, grid, num_classes)};
}

std::set<std::string> gate_parameter_names(const Model& model) {
  std::set<std::string> s;
  for (const auto& [name, t] : model.named_parameters())
    if (name.rfind("gate.", 0) == 0) s.insert(name);
  return s;
}

std::set<std::string> non_gate_parameter_names(const Model& model) {
  std::set<std::string> s;
  for (const auto& [name, t] : model.named_parameters())
    if (name.rfind("gate.", 0) != 0) s.insert(name);
  return s;
}

LossTerms forward_backward(const Model& model, const TrainingExample& ex, const LossConfig& loss,
                           const std::set<std::string>& frozen, Gradients& grads) {
  const ModelConfig& mc = model.config;
  ad::Tape t;
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, tensor] : model.named_parameters()) vars[name] = t.leaf(*tensor, !frozen.contains(name));

  const ad::Var x = t.leaf(concat_channels(ex.lidar, ex.camera), false);
  ad::Var gates;
  if (mc.variant == Variant::agnostic) {
    gates = t.leaf(Tensor({static_cast<std::size_t>(mc.c1 + mc.c2)}, 1.0), false);
  } else {
    gates = ad::context_gates(t, vars["gate.weight"], vars["gate.bias"], ex.context, mc.variant, mc.c1, mc.c2);
  }
  const ad::Var fused = ad::gated_conv3x3(t, x, gates, vars["fusion.kernel"], vars["fusion.bias"]);
  const ad::Var h1 = ad::relu(t, ad::conv3x3(t, fused, vars["encoder.conv1.weight"], vars["encoder.conv1.bias"]));
  const ad::Var h2 = ad::relu(t, ad::conv3x3(t, h1, vars["encoder.conv2.weight"], vars["encoder.conv2.bias"]));
  const ad::Var enc = ad::add(t, fused, h2);
  const ad::Var heat = ad::conv3x3(t, enc, vars["head.heatmap.weight"], vars["head.heatmap.bias"]);
  const ad::Var reg = ad::conv3x3(t, enc, vars["head.regression.weight"], vars["head.regression.bias"]);
  const ad::Var focal = ad::focal_loss(t, heat, ex.targets.heatmap, loss.alpha, loss.beta);
  const ad::Var l1 = ad::masked_l1(t, reg, ex.targets.regression, ex.targets.mask);
  const ad::Var total = ad::add(t, focal, ad::scale(t, l1, loss.lambda_reg));

  LossTerms terms{t.value(focal).data[0], t.value(l1).data[0], t.value(total).data[0]};
  t.backward(total);
  for (const auto& [name, v] : vars) {
    if (frozen.contains(name)) continue;
    const Tensor& g = t.grad(v);
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
    }
  }
  return terms;
}

LossTerms evaluate_loss(const Model& model, const TrainingExample& ex, const LossConfig& loss) {
  const ModelConfig& mc = model.config;
  const GateVectors g = gate_from_context(model.gate, mc.variant, ex.context, mc.c1, mc.c2);
  const DetectionMaps m =
      detect_logits(bev_encoder(gated_conv(ex.lidar, ex.camera, g, model.fusion), model.head), model.head);
  return detection_loss(m.heatmap, m.regression, ex.targets, loss);
}

TrainResult train(Model model, std::span<const TrainingExample> data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_stream(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);

    EpochRecord rec{epoch + 1, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Gradients grads;
      for (std::size_t k = start; k < end; ++k) {
        const LossTerms lt = forward_backward(model, data[order[k]], cfg.loss, cfg.freeze, grads);
        if (!std::isfinite(lt.total))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1), epoch + 1);
        rec.loss += lt.total;
        rec.focal += lt.focal;
        rec.regression += lt.regression;
      }
      const double inv_n = 1.0 / static_cast<double>(end - start);
      double clip = 1.0;
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [name, g] : grads)
          for (double v : g.data) sq += v * v * inv_n * inv_n;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) clip = cfg.grad_clip / norm;
      }
      for (auto& [name, tensor] : model.named_parameters()) {
        if (cfg.freeze.contains(name)) continue;
        const auto it = grads.find(name);
        if (it == grads.end()) continue;
        const double lr = cfg.learning_rate * (name.rfind("gate.", 0) == 0 ? cfg.gate_lr_scale : 1.0);
        const double step = lr * inv_n * clip;
        for (std::size_t i = 0; i < tensor->size(); ++i) tensor->data[i] -= step * it->second.data[i];
        if (!tensor->all_finite())
          throw NumericError("parameter '" + name + "' became non-finite at epoch " + std::to_string(epoch + 1),
                             epoch + 1);
      }
    }
    const double n = static_cast<double>(data.size());
    rec.loss /= n;
    rec.focal /= n;
    rec.regression /= n;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.model = std::move(model);
  return result;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

// Piecewise-linear switches of the loss: encoder ReLU states and the residual
// signs of the masked L1 term.
std::vector<bool> kink_signature(const Model& model, const TrainingExample& ex) {
  const ModelConfig& mc = model.config;
  const GateVectors g = gate_from_context(model.gate, mc.variant, ex.context, mc.c1, mc.c2);
  const Tensor fused = gated_conv(ex.lidar, ex.camera, g, model.fusion);
  std::vector<bool> sig = encoder_active_set(fused, model.head);
  const Tensor reg = detect_logits(bev_encoder(fused, model.head), model.head).regression;
  const Tensor& mask = ex.targets.mask;
  const std::size_t cells = mask.size();
  for (std::size_t i = 0; i < cells; ++i) {
    if (!(mask.data[i] > 0.0)) continue;
    for (std::size_t c = 0; c < reg.dim(0); ++c)
      sig.push_back(reg.data[c * cells + i] > ex.targets.regression.data[c * cells + i]);
  }
  return sig;
}

}  // namespace

GradCheckReport grad_check(const Model& model, const TrainingExample& ex, const LossConfig& loss, double eps,
                           std::size_t n_random, std::uint64_t seed, const std::set<std::string>& frozen) {
  Gradients grads;
  forward_backward(model, ex, loss, frozen, grads);
  const std::vector<bool> base = kink_signature(model, ex);

  std::vector<std::pair<std::string, std::size_t>> gates, pool;
  for (const auto& [name, t] : model.named_parameters())
    for (std::size_t i = 0; i < t->size(); ++i) (name.rfind("gate.", 0) == 0 ? gates : pool).emplace_back(name, i);

  GradCheckReport report;
  Model probe = model;
  auto check = [&](const std::string& name, std::size_t idx) {
    Tensor* t = nullptr;
    for (auto& [n, p] : probe.named_parameters())
      if (n == name) t = p;
    const double orig = t->data[idx];
    t->data[idx] = orig + eps;
    const double up = evaluate_loss(probe, ex, loss).total;
    const bool kink_up = kink_signature(probe, ex) != base;
    t->data[idx] = orig - eps;
    const double down = evaluate_loss(probe, ex, loss).total;
    const bool kink_down = kink_signature(probe, ex) != base;
    t->data[idx] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const auto it = grads.find(name);
    const double analytic = it == grads.end() ? 0.0 : it->second.data[idx];
    GradCheckEntry e{name, idx, analytic, numeric, frozen.contains(name) ? 0.0 : relative_error(analytic, numeric),
                     kink_up || kink_down};
    if (e.kink)
      ++report.kinks;
    else
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(std::move(e));
    return !report.entries.back().kink;
  };

  for (const auto& [name, idx] : gates) check(name, idx);
  Rng rng(seed);
  for (std::size_t clean = 0; clean < n_random && !pool.empty();) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size() - 1)));
    const auto [name, idx] = pool[j];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    clean += check(name, idx);
  }
  return report;
}

}  // namespace gatedbev
