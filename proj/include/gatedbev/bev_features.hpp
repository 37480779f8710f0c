#pragma once

#include <vector>

#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"
#include "gatedbev/tensor.hpp"

namespace gatedbev {

enum class Modality { lidar, camera };

struct BEVFeatures {
  Tensor channels;  // C x H x W
  Modality modality = Modality::lidar;
  BEVGridSpec grid;
};

struct FeatureConfig {
  double occupancy_cap = 4.0;  // lidar counts per voxel saturate here
  int depth_bands = 10;        // D
  double band_range = 50.0;    // bands split [0, band_range) evenly; the last band also takes the rest
  double hit_cap = 16.0;       // camera hit-count plane saturates here
  double mass_scale = 1.0;     // multiplies splatted intensity; 1 keeps raw mass
};

inline int lidar_channels(const BEVGridSpec& g) { return g.z_bins + 2; }
inline int camera_channels(const FeatureConfig& f) { return f.depth_bands + 2; }

// z_bins clamped occupancy planes, normalized max-z, mean intensity.
BEVFeatures lidar_bev(const PointCloud& cloud, const BEVGridSpec& grid, const FeatureConfig& cfg = {});

// Per-pixel unprojection to the estimated depth, bilinear splat of intensity into
// D radial bands, then total-mass and normalized hit-count planes.
BEVFeatures camera_bev(const std::vector<CameraImage>& images, const BEVGridSpec& grid, const FeatureConfig& cfg = {});

// The four bilinear cells and weights for a BEV location; weights sum to 1 and
// neighbors are clamped to the border so in-grid mass is conserved.
struct BilinearSplat {
  int row[2];
  int col[2];
  double wy[2];
  double wx[2];
};
std::optional<BilinearSplat> bilinear_cells(const BEVGridSpec& grid, double x, double y);

}  // namespace gatedbev
