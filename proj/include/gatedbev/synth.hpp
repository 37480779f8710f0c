#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gatedbev/geometry.hpp"
#include "gatedbev/rng.hpp"

namespace gatedbev {

struct Context {
  bool is_night = false;
  bool is_rain = false;

  // 0 day_clear, 1 night_clear, 2 day_rain, 3 night_rain.
  int bucket() const noexcept { return (is_night ? 1 : 0) + (is_rain ? 2 : 0); }
  static Context from_bucket(int b) { return {(b & 1) != 0, (b & 2) != 0}; }

  friend bool operator==(const Context&, const Context&) = default;
};

inline constexpr int kContextBuckets = 4;
std::string_view context_name(int bucket);

struct ClassInfo {
  std::string name;
  Vec3 extent_prior;         // mean (length, width, height)
  double frequency = 1.0;    // relative sampling weight
  double camera_albedo = 0.5;

  friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

// car, truck, bus, pedestrian.
std::vector<ClassInfo> default_class_table();

struct SceneConfig {
  int min_actors = 6;
  int max_actors = 14;
  double placement_margin = 3.0;   // keep actors this far inside the grid edge
  double ego_clearance = 4.0;      // no actor center closer to the ego origin
  double min_center_gap = 2.5;     // meters between actor centers
  double extent_jitter = 0.1;      // extents drawn from prior * U(1 - j, 1 + j)
  int placement_retries = 50;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  Context context;
  int n_actors = -1;  // < 0: draw uniformly from [min_actors, max_actors]
};

struct Scene {
  SensorPose ego;  // identity: actors are stored in the ego frame
  std::vector<Box3D> actors;
};

// Actors never overlap in BEV; placement failures drop the actor rather than retrying forever.
Scene generate_scene(const SceneSpec& spec, const BEVGridSpec& grid, const std::vector<ClassInfo>& classes,
                     const SceneConfig& cfg = {});

// Exactly n/4 of each context, interleaved day_clear, night_clear, day_rain, night_rain.
std::vector<Context> balanced_contexts(std::size_t n_total);

// ---------------------------------------------------------------------------
// Lidar

struct LidarConfig {
  int azimuth_rays = 360;
  int rings = 8;
  double elevation_min_deg = -30.0;
  double elevation_max_deg = 10.0;
  Vec3 origin{0.0, 0.0, 1.8};
  double max_range = 70.0;
  double attenuation_clear = 60.0;  // r0 in exp(-r / r0)
  double attenuation_rain = 40.0;
  double p_scatter = 0.08;
  double p_drop = 0.10;
  double scatter_min_range = 1.0;
  double scatter_max_range = 15.0;
  double box_reflectivity = 0.9;
  double ground_reflectivity = 0.35;
  double scatter_reflectivity = 0.15;
};

enum class ReturnKind : std::uint8_t { box, ground, scattered };

struct LidarSweep {
  PointCloud cloud;
  std::vector<ReturnKind> kinds;  // one per point
  std::size_t rays = 0;
  std::size_t dropped = 0;
  std::size_t scattered = 0;
};

// Unit direction of ray (azimuth index, ring index) in the ego frame.
Vec3 lidar_ray_direction(const LidarConfig& cfg, int azimuth, int ring);

// Distance along a ray to an oriented box, if hit (slab test in the box frame).
std::optional<double> ray_box_distance(const Vec3& origin, const Vec3& dir, const Box3D& box);

// Night never changes the result; the random stream depends only on rng.
LidarSweep simulate_lidar(const Scene& scene, const Context& context, Rng& rng, const LidarConfig& cfg = {});

// ---------------------------------------------------------------------------
// Cameras

inline constexpr int kNumCameras = 6;
inline constexpr double kNoReturn = -1.0;

struct CameraConfig {
  int width = 96;
  int height = 32;
  double hfov = 1.0471975511965976;  // pi / 3
  double pitch = 0.14;              // radians, positive looks down
  Vec3 mount{0.0, 0.0, 1.6};
  double max_range = 80.0;
  double ground_albedo = 0.25;
  double depth_sigma = 0.5;      // sigma_0
  double night_sigma_gain = 4.0; // lambda_night
  double night_scale = 0.25;     // kappa_night
  int glare_blobs = 3;
  double glare_peak = 1.0;
  double glare_sigma_min = 1.5;  // pixels
  double glare_sigma_max = 4.0;
  double rain_mask_fraction = 0.15;
  int rain_streak_length = 4;    // pixels; height must be a multiple
};

struct CameraImage {
  int width = 0;
  int height = 0;
  SensorPose pose;
  double hfov = 0.0;
  std::vector<double> intensity;  // row-major, [0, 1]
  std::vector<double> depth;      // range along the pixel ray, or kNoReturn

  double focal() const;
  // Unit ray through the center of pixel (u, v) in the ego frame.
  Vec3 pixel_ray(int u, int v) const;

  friend bool operator==(const CameraImage&, const CameraImage&) = default;
};

struct GlareBlob {
  double u = 0.0;
  double v = 0.0;
  double sigma = 0.0;
};

struct CameraFrame {
  CameraImage image;
  std::vector<std::uint8_t> streak_mask;  // 1 where rain masked the pixel
  std::vector<GlareBlob> glare;
};

std::vector<SensorPose> camera_rig(const CameraConfig& cfg);

// Noise-free render: intensity from albedo and incidence, true range depth.
CameraImage render_camera(const Scene& scene, const SensorPose& pose, const CameraConfig& cfg,
                          const std::vector<ClassInfo>& classes);

// Night and rain degradations draw from separate sub-streams of `seed`, so toggling
// one flag leaves the other effect untouched.
std::vector<CameraFrame> simulate_cameras(const Scene& scene, const Context& context, std::uint64_t seed,
                                          const CameraConfig& cfg, const std::vector<ClassInfo>& classes);

// Keeps boxes holding at least one cloud point, preserving order.
std::vector<Box3D> filter_annotations(const std::vector<Box3D>& boxes, const PointCloud& cloud);

// ---------------------------------------------------------------------------

struct Sample {
  std::string token;
  PointCloud cloud;
  std::vector<CameraImage> cameras;
  std::vector<Box3D> annotations;
  Context context;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct SynthConfig {
  SceneConfig scene;
  LidarConfig lidar;
  CameraConfig camera;
};

// One sample for dataset index `index`; sensor payloads are rounded to float32
// so they survive serialization exactly.
Sample generate_sample(std::uint64_t dataset_seed, std::size_t index, const Context& context,
                       const BEVGridSpec& grid, const std::vector<ClassInfo>& classes, const SynthConfig& cfg);

std::vector<Sample> generate_samples(std::uint64_t dataset_seed, std::size_t n_total, const BEVGridSpec& grid,
                                     const std::vector<ClassInfo>& classes, const SynthConfig& cfg);

}  // namespace gatedbev
