#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"

namespace gatedbev {

inline constexpr const char* kDatasetSchema = "adverseop3d-mini/1";

enum class Split { train, val };
std::string_view split_name(Split s);

struct SampleRecord {
  std::string token;
  Context context;
  Split split = Split::train;
  std::string lidar_path;
  std::vector<std::string> camera_paths;
  std::string annotation_path;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct CameraRigInfo {
  int width = 0;
  int height = 0;
  double hfov = 0.0;
  std::vector<SensorPose> poses;

  friend bool operator==(const CameraRigInfo&, const CameraRigInfo&) = default;
};

struct DatasetManifest {
  std::string version = kDatasetSchema;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  BEVGridSpec grid;
  std::vector<ClassInfo> classes;
  CameraRigInfo camera;
  std::vector<SampleRecord> samples;
  // [split][bucket]
  std::array<std::array<std::size_t, kContextBuckets>, 2> context_counts{};

  std::size_t count(Split s) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;  // same order as manifest.samples

  std::vector<std::size_t> indices(Split s) const;
};

// Stratified per context bucket: within each bucket, a seeded shuffle puts
// round(train_fraction * n_bucket) samples in train.
std::vector<Split> assign_splits(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed);

// Throws IoError (unwritable / token_collision) on failure.
DatasetManifest write_dataset(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed,
                              const BEVGridSpec& grid, const std::vector<ClassInfo>& classes,
                              const std::filesystem::path& out_dir);

// Throws IoError (missing / corrupt / schema_mismatch / token_collision).
Dataset read_dataset(const std::filesystem::path& dir);

// Little-endian float32 helpers shared with the checkpoint format.
void append_f32_le(std::string& out, double v);
double read_f32_le(const char* p);

void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace gatedbev
