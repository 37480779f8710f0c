#include "gatedbev/bev_features.hpp"

#include <algorithm>
#include <cmath>

#include "gatedbev/errors.hpp"

namespace gatedbev {

BEVFeatures lidar_bev(const PointCloud& cloud, const BEVGridSpec& grid, const FeatureConfig& cfg) {
  const VoxelGrid vox = voxelize(cloud, grid);
  const auto zb = static_cast<std::size_t>(grid.z_bins);
  const std::size_t h = vox.counts.dim(1), w = vox.counts.dim(2), n = h * w;
  BEVFeatures f{Tensor({zb + 2, h, w}), Modality::lidar, grid};
  for (std::size_t i = 0; i < zb * n; ++i) f.channels.data[i] = std::min(1.0, vox.counts.data[i] / cfg.occupancy_cap);
  const double zspan = grid.z_max - grid.z_min;
  for (std::size_t i = 0; i < n; ++i) {
    f.channels.data[zb * n + i] = std::clamp((vox.max_z.data[i] - grid.z_min) / zspan, 0.0, 1.0);
    f.channels.data[(zb + 1) * n + i] = vox.mean_intensity.data[i];
  }
  return f;
}

std::optional<BilinearSplat> bilinear_cells(const BEVGridSpec& grid, double x, double y) {
  if (!(x >= grid.x_min && x <= grid.x_max && y >= grid.y_min && y <= grid.y_max)) return std::nullopt;
  const int w = grid.width();
  const int h = grid.height();
  const double u = std::clamp((x - grid.x_min) / grid.cell_size - 0.5, 0.0, static_cast<double>(w - 1));
  const double v = std::clamp((y - grid.y_min) / grid.cell_size - 0.5, 0.0, static_cast<double>(h - 1));
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const double fx = u - c0;
  const double fy = v - r0;
  return BilinearSplat{{r0, std::min(r0 + 1, h - 1)}, {c0, std::min(c0 + 1, w - 1)}, {1.0 - fy, fy}, {1.0 - fx, fx}};
}

BEVFeatures camera_bev(const std::vector<CameraImage>& images, const BEVGridSpec& grid, const FeatureConfig& cfg) {
  grid.validate();
  if (cfg.depth_bands < 1) throw ConfigError("depth_bands must be >= 1");
  const auto d = static_cast<std::size_t>(cfg.depth_bands);
  const auto h = static_cast<std::size_t>(grid.height());
  const auto w = static_cast<std::size_t>(grid.width());
  BEVFeatures f{Tensor({d + 2, h, w}), Modality::camera, grid};
  Tensor hits({1, h, w});
  const double band_width = cfg.band_range / static_cast<double>(d);

  // Cameras are reduced in order so the result is bit-stable.
  for (const CameraImage& img : images) {
    const Mat3 rot = img.pose.rotation();
    const double focal = img.focal();
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) {
        const std::size_t i = static_cast<std::size_t>(v) * static_cast<std::size_t>(img.width) + static_cast<std::size_t>(u);
        const double depth = img.depth[i];
        if (!(depth > 0.0)) continue;
        const double dx = 1.0, dy = -(u + 0.5 - 0.5 * img.width) / focal, dz = -(v + 0.5 - 0.5 * img.height) / focal;
        const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
        const Vec3 ray = rot.apply({dx / norm, dy / norm, dz / norm});
        const double px = img.pose.translation.x + ray.x * depth;
        const double py = img.pose.translation.y + ray.y * depth;
        const auto cells = bilinear_cells(grid, px, py);
        if (!cells) continue;
        const auto band = std::min(d - 1, static_cast<std::size_t>(depth / band_width));
        const double mass = img.intensity[i] * cfg.mass_scale;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const double wgt = cells->wy[a] * cells->wx[b];
            const auto r = static_cast<std::size_t>(cells->row[a]);
            const auto c = static_cast<std::size_t>(cells->col[b]);
            f.channels.at(band, r, c) += wgt * mass;
            f.channels.at(d, r, c) += wgt * mass;
            hits.at(0, r, c) += wgt;
          }
      }
    }
  }
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) f.channels.at(d + 1, r, c) = std::min(1.0, hits.at(0, r, c) / cfg.hit_cap);
  return f;
}

}  // namespace gatedbev
