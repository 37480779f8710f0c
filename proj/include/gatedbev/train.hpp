#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gatedbev/bev_features.hpp"
#include "gatedbev/fusion.hpp"
#include "gatedbev/synth.hpp"

namespace gatedbev {

struct Targets {
  Tensor heatmap;     // K x H x W in [0, 1], exactly 1.0 at each GT center cell
  Tensor regression;  // 8 x H x W, defined where mask > 0
  Tensor mask;        // 1 x H x W
};

// Gaussian splats exp(-d^2 / 2 sigma^2) in cell units, sigma = max(extent) / (3 cell) clamped >= 1,
// combined by element-wise max. Boxes whose center falls outside the grid are skipped.
Targets make_targets(const std::vector<Box3D>& boxes, const BEVGridSpec& grid, int num_classes);

struct LossConfig {
  double alpha = 2.0;
  double beta = 4.0;
  double lambda_reg = 0.25;
};

struct LossTerms {
  double focal = 0.0;
  double regression = 0.0;  // unweighted masked L1
  double total = 0.0;       // focal + lambda_reg * regression
};

LossTerms detection_loss(const Tensor& heat_logits, const Tensor& regression, const Targets& targets,
                         const LossConfig& cfg = {});

// Everything training needs from a sample, computed once.
struct TrainingExample {
  Tensor lidar;   // C1 x H x W
  Tensor camera;  // C2 x H x W
  Context context;
  Targets targets;
};

TrainingExample make_example(const Sample& sample, const BEVGridSpec& grid, const FeatureConfig& features,
                             int num_classes);

using Gradients = std::map<std::string, Tensor>;

// Builds the tape for one example, runs backward, and adds d(loss)/d(param) into
// `grads` for every parameter not in `frozen`. Returns the loss terms.
LossTerms forward_backward(const Model& model, const TrainingExample& ex, const LossConfig& loss,
                           const std::set<std::string>& frozen, Gradients& grads);

// Loss only, through the non-tape forward path.
LossTerms evaluate_loss(const Model& model, const TrainingExample& ex, const LossConfig& loss);

// Names of the gate-network parameters of a model.
std::set<std::string> gate_parameter_names(const Model& model);

// Everything except the gate network.
std::set<std::string> non_gate_parameter_names(const Model& model);

struct TrainConfig {
  double learning_rate = 1e-2;
  double gate_lr_scale = 200.0;  // multiplier on the learning rate of gate parameters
  int epochs = 30;
  int batch_size = 4;
  std::uint64_t seed = 7;
  std::set<std::string> freeze;
  LossConfig loss;
  double grad_clip = 5.0;  // global L2 norm clip per step; 0 disables
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double focal = 0.0;
  double regression = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
};

// Plain SGD over a fixed per-epoch shuffle derived from cfg.seed. Throws ConfigError on an
// empty dataset and NumericError (with the epoch) when the loss or parameters go non-finite.
TrainResult train(Model model, std::span<const TrainingExample> data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  // The +-eps probes landed on different sides of a ReLU or |.| corner, so the
  // central difference is not a derivative estimate; excluded from max_rel_error.
  bool kink = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;  // over entries without a kink
  std::size_t kinks = 0;
};

double relative_error(double analytic, double numeric);

// Central differences (eps) against tape gradients for every gate parameter plus
// `n_random` other kink-free scalars chosen with `seed` (kink entries are kept in the
// report and replaced by further draws). Frozen parameters report analytic 0.
GradCheckReport grad_check(const Model& model, const TrainingExample& ex, const LossConfig& loss, double eps,
                           std::size_t n_random, std::uint64_t seed, const std::set<std::string>& frozen = {});

}  // namespace gatedbev
