#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gatedbev/bev_features.hpp"
#include "gatedbev/fusion.hpp"
#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"
#include "gatedbev/train.hpp"

namespace gatedbev {

inline constexpr const char* kConfigSchema = "gatedbev-config/1";

// Camera mass planes scaled to roughly unit range for training.
inline FeatureConfig pipeline_features() {
  FeatureConfig f;
  f.mass_scale = 0.1;
  return f;
}

// Every tunable constant of the pipeline. Absent keys keep these defaults.
struct RunConfig {
  std::uint64_t seed = 7;
  double train_fraction = 0.8;
  BEVGridSpec grid;
  SynthConfig synth;
  FeatureConfig features = pipeline_features();
  ModelConfig model;
  InitConfig init;
  TrainConfig train;
  DecodeConfig decode;
  std::vector<double> eval_thresholds{0.5, 1.0, 2.0, 4.0};
  int bench_height = 64;  // spatial size used by bench
  int bench_width = 64;
};

// Parses a config document, rejecting unknown keys and mistyped values (ConfigError).
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved config, including the schema tag; stable key order.
std::string config_to_json(const RunConfig& cfg);

}  // namespace gatedbev
