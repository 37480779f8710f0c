#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gatedbev/config.hpp"
#include "gatedbev/dataset_io.hpp"
#include "gatedbev/eval.hpp"
#include "gatedbev/fusion.hpp"
#include "gatedbev/train.hpp"

namespace gatedbev {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

// Runs fn and maps library exceptions to exit codes, printing the message to err.
int run_guarded(const std::function<void()>& fn, std::ostream& err);

// Pipeline pieces shared by the commands and the tests.
std::vector<TrainingExample> build_examples(const Dataset& ds, Split split, const FeatureConfig& features,
                                            int num_classes);
std::vector<FrameBoxes> predict(const Model& model, const Dataset& ds, Split split, const FeatureConfig& features,
                                const DecodeConfig& decode);
EvalReport evaluate(const Model& model, const Dataset& ds, Split split, const RunConfig& cfg);

// Model shape implied by a config and dataset grid.
ModelConfig model_config_for(const RunConfig& cfg, const BEVGridSpec& grid, std::size_t num_classes);

struct GenOptions {
  std::filesystem::path out;
  std::size_t samples = 400;
  std::uint64_t seed = 7;
  std::optional<std::filesystem::path> config;
};
DatasetManifest cmd_gen(const GenOptions& opt, std::ostream& log);

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<Variant> variant;  // overrides the config
  bool gates_only = false;
  std::optional<std::filesystem::path> init;
  std::optional<std::filesystem::path> config;
};
TrainResult cmd_train(const TrainOptions& opt, std::ostream& log);

struct EvalOptions {
  std::filesystem::path data;
  std::filesystem::path ckpt;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
};
EvalReport cmd_eval(const EvalOptions& opt, std::ostream& log);

struct CompareOptions {
  std::filesystem::path data;
  std::filesystem::path ckpt_a;
  std::filesystem::path ckpt_b;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
};
struct CompareRow {
  std::string context;
  std::string class_name;  // "all" for the mAP row
  std::optional<double> a, b;
  std::optional<double> delta() const;
};
std::vector<CompareRow> cmd_compare(const CompareOptions& opt, std::ostream& log);

struct BenchOptions {
  std::filesystem::path ckpt;
  int iters = 50;
  std::optional<std::filesystem::path> out;  // bench.json goes here; defaults to the checkpoint's directory
  std::optional<std::filesystem::path> config;
};
struct BenchResult {
  int iters = 0;
  int height = 0, width = 0;
  double gated_median_ms = 0.0;
  double plain_median_ms = 0.0;
  double ratio = 0.0;  // median(gated) / median(plain)
};
BenchResult run_bench(const Model& model, int height, int width, int iters, std::uint64_t seed);
BenchResult cmd_bench(const BenchOptions& opt, std::ostream& log);

}  // namespace gatedbev
