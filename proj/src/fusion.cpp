#include "gatedbev/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "gatedbev/errors.hpp"
#include "gatedbev/kernels.hpp"
#include "gatedbev/rng.hpp"

namespace gatedbev {

namespace {

void check_conv_weights(const Tensor& w, const Tensor& b, std::size_t cin, const char* name) {
  if (w.rank() != 4 || w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3 || b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError(std::string(name) + ": kernel " + w.shape_string() + " / bias " + b.shape_string() +
                     " incompatible with " + std::to_string(cin) + " input channels");
}

Tensor conv(const Tensor& in, const Tensor& w, const Tensor& b, const char* name) {
  check_conv_weights(w, b, in.dim(0), name);
  const kernels::ConvShape s{in.dim(0), w.dim(0), in.dim(1), in.dim(2)};
  Tensor out({w.dim(0), in.dim(1), in.dim(2)});
  kernels::conv3x3_forward(s, in.data, w.data, b.data, out.data);
  return out;
}

void relu_inplace(Tensor& t) {
  for (auto& v : t.data) v = std::max(0.0, v);
}

Tensor he_normal(Rng& rng, std::size_t cout, std::size_t cin, double gain = 1.0) {
  Tensor t({cout, cin, 3, 3});
  const double sd = gain * std::sqrt(2.0 / (9.0 * static_cast<double>(cin)));
  for (auto& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::constrained: return "constrained";
    case Variant::independent: return "independent";
    case Variant::agnostic: return "agnostic";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "constrained") return Variant::constrained;
  if (s == "independent") return Variant::independent;
  if (s == "agnostic") return Variant::agnostic;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected constrained|independent|agnostic)");
}

int ModelConfig::gate_dim() const {
  switch (variant) {
    case Variant::constrained: return 2;
    case Variant::independent: return c1 + c2;
    case Variant::agnostic: return 0;
  }
  return 0;
}

std::vector<double> GateVectors::concatenated() const {
  std::vector<double> g(g1);
  g.insert(g.end(), g2.begin(), g2.end());
  return g;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> p;
  if (config.variant != Variant::agnostic) {
    p.emplace_back("gate.weight", &gate.weight);
    p.emplace_back("gate.bias", &gate.bias);
  }
  p.emplace_back("fusion.kernel", &fusion.kernel);
  p.emplace_back("fusion.bias", &fusion.bias);
  p.emplace_back("encoder.conv1.weight", &head.enc1_w);
  p.emplace_back("encoder.conv1.bias", &head.enc1_b);
  p.emplace_back("encoder.conv2.weight", &head.enc2_w);
  p.emplace_back("encoder.conv2.bias", &head.enc2_b);
  p.emplace_back("head.heatmap.weight", &head.heat_w);
  p.emplace_back("head.heatmap.bias", &head.heat_b);
  p.emplace_back("head.regression.weight", &head.reg_w);
  p.emplace_back("head.regression.bias", &head.reg_b);
  return p;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

Model init_model(const ModelConfig& cfg, std::uint64_t seed, const InitConfig& init) {
  if (cfg.c1 < 1 || cfg.c2 < 1 || cfg.c_out < 1 || cfg.num_classes < 1) throw ConfigError("model channel counts must be >= 1");
  Rng rng(seed);
  Model m;
  m.config = cfg;
  const auto gd = static_cast<std::size_t>(cfg.gate_dim());
  if (gd > 0) {
    m.gate.weight = Tensor({gd, 2});
    m.gate.bias = Tensor({gd}, init.gate_bias);
  }
  const auto cin = static_cast<std::size_t>(cfg.c1 + cfg.c2);
  const auto co = static_cast<std::size_t>(cfg.c_out);
  m.fusion.kernel = he_normal(rng, co, cin);
  m.fusion.bias = Tensor({co});
  m.head.enc1_w = he_normal(rng, co, co, 0.5);
  m.head.enc1_b = Tensor({co});
  m.head.enc2_w = he_normal(rng, co, co, 0.5);
  m.head.enc2_b = Tensor({co});
  m.head.heat_w = he_normal(rng, static_cast<std::size_t>(cfg.num_classes), co, 0.5);
  m.head.heat_b = Tensor({static_cast<std::size_t>(cfg.num_classes)}, init.heat_bias);
  m.head.reg_w = he_normal(rng, kRegressionChannels, co, init.reg_scale);
  m.head.reg_b = Tensor({kRegressionChannels});
  m.head.reg_b.data[7] = 1.0;  // cos yaw
  return m;
}

GateVectors gate_from_context(const GateParams& params, Variant variant, const Context& ctx, int c1, int c2) {
  GateVectors g;
  const auto n1 = static_cast<std::size_t>(c1);
  const auto n2 = static_cast<std::size_t>(c2);
  if (variant == Variant::agnostic) {
    g.g1.assign(n1, 1.0);
    g.g2.assign(n2, 1.0);
    return g;
  }
  const std::size_t dim = variant == Variant::constrained ? 2 : n1 + n2;
  if (params.weight.shape != std::vector<std::size_t>{dim, 2} || params.bias.shape != std::vector<std::size_t>{dim})
    throw ShapeError("gate params " + params.weight.shape_string() + "/" + params.bias.shape_string() +
                     " do not match gate_dim " + std::to_string(dim));
  const double night = ctx.is_night ? 1.0 : 0.0;
  const double rain = ctx.is_rain ? 1.0 : 0.0;
  std::vector<double> gates(dim);
  for (std::size_t i = 0; i < dim; ++i)
    gates[i] = sigmoid(params.weight.data[2 * i] * night + params.weight.data[2 * i + 1] * rain + params.bias.data[i]);
  if (variant == Variant::constrained) {
    g.g1.assign(n1, gates[0]);
    g.g2.assign(n2, gates[1]);
  } else {
    g.g1.assign(gates.begin(), gates.begin() + static_cast<std::ptrdiff_t>(n1));
    g.g2.assign(gates.begin() + static_cast<std::ptrdiff_t>(n1), gates.end());
  }
  return g;
}

Tensor gated_conv(const Tensor& f1, const Tensor& f2, const GateVectors& gates, const FusionWeights& w) {
  if (f1.rank() != 3 || f2.rank() != 3 || f1.dim(1) != f2.dim(1) || f1.dim(2) != f2.dim(2))
    throw ShapeError("gated_conv: modality shapes " + f1.shape_string() + " and " + f2.shape_string() + " differ");
  if (gates.g1.size() != f1.dim(0) || gates.g2.size() != f2.dim(0))
    throw ShapeError("gated_conv: gate sizes (" + std::to_string(gates.g1.size()) + ", " +
                     std::to_string(gates.g2.size()) + ") do not match inputs " + f1.shape_string() + " and " +
                     f2.shape_string());
  const std::size_t cin = f1.dim(0) + f2.dim(0);
  check_conv_weights(w.kernel, w.bias, cin, "gated_conv");
  const std::vector<double> g = gates.concatenated();
  Tensor scaled = w.kernel;
  for (std::size_t o = 0; o < scaled.dim(0); ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < 9; ++k) scaled.data[(o * cin + c) * 9 + k] *= g[c];
  return conv(concat_channels(f1, f2), scaled, w.bias, "gated_conv");
}

Tensor plain_conv(const Tensor& f1, const Tensor& f2, const FusionWeights& w) {
  return conv(concat_channels(f1, f2), w.kernel, w.bias, "plain_conv");
}

Tensor bev_encoder(const Tensor& fused, const HeadWeights& w) {
  Tensor h1 = conv(fused, w.enc1_w, w.enc1_b, "encoder.conv1");
  relu_inplace(h1);
  Tensor h2 = conv(h1, w.enc2_w, w.enc2_b, "encoder.conv2");
  relu_inplace(h2);
  if (h2.shape != fused.shape) throw ShapeError("bev_encoder: residual shape mismatch");
  for (std::size_t i = 0; i < h2.size(); ++i) h2.data[i] += fused.data[i];
  return h2;
}

std::vector<bool> encoder_active_set(const Tensor& fused, const HeadWeights& w) {
  Tensor h1 = conv(fused, w.enc1_w, w.enc1_b, "encoder.conv1");
  std::vector<bool> active;
  active.reserve(2 * h1.size());
  for (double v : h1.data) active.push_back(v > 0.0);
  relu_inplace(h1);
  const Tensor h2 = conv(h1, w.enc2_w, w.enc2_b, "encoder.conv2");
  for (double v : h2.data) active.push_back(v > 0.0);
  return active;
}

DetectionMaps detect_logits(const Tensor& encoded, const HeadWeights& w) {
  return {conv(encoded, w.heat_w, w.heat_b, "head.heatmap"), conv(encoded, w.reg_w, w.reg_b, "head.regression")};
}

DetectionMaps detect_forward(const Tensor& encoded, const HeadWeights& w) {
  DetectionMaps m = detect_logits(encoded, w);
  for (auto& v : m.heatmap.data) v = sigmoid(v);
  return m;
}

DetectionMaps model_forward(const Model& model, const BEVFeatures& lidar, const BEVFeatures& camera, const Context& ctx) {
  const GateVectors g = gate_from_context(model.gate, model.config.variant, ctx, model.config.c1, model.config.c2);
  return detect_forward(bev_encoder(gated_conv(lidar.channels, camera.channels, g, model.fusion), model.head),
                        model.head);
}

std::vector<Box3D> center_nms(std::vector<Box3D> boxes, double radius) {
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Box3D& a, const Box3D& b) { return a.score.value_or(0.0) > b.score.value_or(0.0); });
  std::vector<Box3D> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(boxes[i]);
    for (std::size_t j = i + 1; j < boxes.size(); ++j)
      if (!suppressed[j] && center_distance(boxes[i], boxes[j]) <= radius) suppressed[j] = true;
  }
  return kept;
}

std::vector<Box3D> decode_detections(const DetectionMaps& maps, const BEVGridSpec& grid, const DecodeConfig& cfg) {
  const Tensor& hm = maps.heatmap;
  const Tensor& rg = maps.regression;
  if (hm.rank() != 3 || rg.rank() != 3 || rg.dim(0) != kRegressionChannels || hm.dim(1) != rg.dim(1) ||
      hm.dim(2) != rg.dim(2) || static_cast<int>(hm.dim(1)) != grid.height() ||
      static_cast<int>(hm.dim(2)) != grid.width())
    throw ShapeError("decode_detections: heatmap " + hm.shape_string() + " / regression " + rg.shape_string() +
                     " inconsistent with grid");
  const auto k = hm.dim(0);
  const auto h = static_cast<int>(hm.dim(1));
  const auto w = static_cast<int>(hm.dim(2));
  std::vector<Box3D> all;
  for (std::size_t cls = 0; cls < k; ++cls) {
    std::vector<Box3D> cands;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double s = hm.at(cls, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        if (!(s > cfg.score_thresh)) continue;
        bool peak = true;
        for (int dr = -1; dr <= 1 && peak; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if ((dr == 0 && dc == 0) || rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            if (hm.at(cls, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) > s) {
              peak = false;
              break;
            }
          }
        if (!peak) continue;
        const auto reg = [&](std::size_t ch) { return rg.at(ch, static_cast<std::size_t>(r), static_cast<std::size_t>(c)); };
        Box3D b;
        b.class_id = static_cast<int>(cls);
        b.center = {grid.cell_center_x(c) + reg(0), grid.cell_center_y(r) + reg(1), reg(2)};
        b.extent = {std::exp(reg(3)), std::exp(reg(4)), std::exp(reg(5))};
        b.yaw = normalize_yaw(std::atan2(reg(6), reg(7)));
        b.score = s;
        cands.push_back(b);
      }
    }
    auto kept = center_nms(std::move(cands), cfg.nms_radius);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const Box3D& a, const Box3D& b) { return *a.score > *b.score; });
  if (cfg.max_detections >= 0 && all.size() > static_cast<std::size_t>(cfg.max_detections))
    all.resize(static_cast<std::size_t>(cfg.max_detections));
  return all;
}

}  // namespace gatedbev
