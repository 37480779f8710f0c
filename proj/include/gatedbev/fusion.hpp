#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gatedbev/bev_features.hpp"
#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"
#include "gatedbev/tensor.hpp"

namespace gatedbev {

// constrained: one gate per modality. independent: one gate per channel.
// agnostic: gates fixed at exactly 1 (plain concatenated convolution).
enum class Variant { constrained, independent, agnostic };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view s);

inline constexpr int kRegressionChannels = 8;  // dx, dy, z, log l, log w, log h, sin yaw, cos yaw

struct ModelConfig {
  Variant variant = Variant::independent;
  int c1 = 10;     // lidar channels
  int c2 = 12;     // camera channels
  int c_out = 16;  // fused / encoder channels
  int num_classes = 4;

  int gate_dim() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// raw = weight * (is_night, is_rain) + bias; gates = sigmoid(raw).
struct GateParams {
  Tensor weight;  // gate_dim x 2
  Tensor bias;    // gate_dim
};

struct GateVectors {
  std::vector<double> g1;  // C1
  std::vector<double> g2;  // C2

  // g1 followed by g2, the per-input-channel scale of the fused convolution.
  std::vector<double> concatenated() const;
};

struct FusionWeights {
  Tensor kernel;  // C_out x (C1 + C2) x 3 x 3
  Tensor bias;    // C_out
};

struct HeadWeights {
  Tensor enc1_w, enc1_b;
  Tensor enc2_w, enc2_b;
  Tensor heat_w, heat_b;  // K output channels
  Tensor reg_w, reg_b;    // 8 output channels
};

struct Model {
  ModelConfig config;
  GateParams gate;  // empty tensors for the agnostic variant
  FusionWeights fusion;
  HeadWeights head;

  // Stable (name, tensor) listing used by training and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
};

struct InitConfig {
  double gate_bias = 2.0;
  double heat_bias = -2.19;  // sigmoid ~ 0.1 prior
  double reg_scale = 0.1;    // std multiplier for the regression head
};

Model init_model(const ModelConfig& cfg, std::uint64_t seed, const InitConfig& init = {});

GateVectors gate_from_context(const GateParams& params, Variant variant, const Context& ctx, int c1, int c2);

// out_i = bias_i + sum_j G1(j) w(i,j) * f1(j) + sum_k G2(k) w(i,k) * f2(k), 3x3, stride 1, padding 1.
// The gates scale the kernel slices, which is the same product as written.
Tensor gated_conv(const Tensor& f1, const Tensor& f2, const GateVectors& gates, const FusionWeights& w);

// Same kernel over the concatenated inputs with no gating; the ungated baseline.
Tensor plain_conv(const Tensor& f1, const Tensor& f2, const FusionWeights& w);

// fused + relu(conv2(relu(conv1(fused)))).
Tensor bev_encoder(const Tensor& fused, const HeadWeights& w);

// Which encoder ReLU inputs are strictly positive, conv1 units then conv2 units.
std::vector<bool> encoder_active_set(const Tensor& fused, const HeadWeights& w);

struct DetectionMaps {
  Tensor heatmap;     // K x H x W in (0, 1)
  Tensor regression;  // 8 x H x W
};

DetectionMaps detect_forward(const Tensor& encoded, const HeadWeights& w);

// As detect_forward, but the heatmap is left as pre-sigmoid logits.
DetectionMaps detect_logits(const Tensor& encoded, const HeadWeights& w);

DetectionMaps model_forward(const Model& model, const BEVFeatures& lidar, const BEVFeatures& camera, const Context& ctx);

struct DecodeConfig {
  double score_thresh = 0.3;
  double nms_radius = 2.0;
  int max_detections = 50;
};

// 3x3 local maxima above the threshold, greedy per-class center-distance NMS.
std::vector<Box3D> decode_detections(const DetectionMaps& maps, const BEVGridSpec& grid, const DecodeConfig& cfg = {});

// Greedy NMS over score-sorted boxes of a single class.
std::vector<Box3D> center_nms(std::vector<Box3D> boxes, double radius);

double sigmoid(double x);

}  // namespace gatedbev
