#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "gatedbev/tensor.hpp"

namespace gatedbev {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// Wraps an angle into (-pi, pi].
double normalize_yaw(double yaw);

// Oriented box in the ego frame: x forward, y left, z up. Extent is
// (length, width, height) along the box's own axes; yaw rotates about z.
struct Box3D {
  Vec3 center;
  Vec3 extent{1.0, 1.0, 1.0};
  double yaw = 0.0;
  int class_id = 0;
  std::optional<double> score;

  // Throws ConfigError when extent <= 0, yaw outside (-pi, pi] or score outside [0, 1].
  void validate() const;

  // BEV corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> bev_corners() const;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct BEVGridSpec {
  double x_min = -32.0;
  double x_max = 32.0;
  double y_min = -32.0;
  double y_max = 32.0;
  double cell_size = 1.0;
  double z_min = -2.0;
  double z_max = 6.0;
  int z_bins = 8;

  // Columns run along x, rows along y.
  int width() const;
  int height() const;

  // Throws ConfigError unless ranges are nonempty and divide exactly by cell_size.
  void validate() const;

  // Metric center of cell (row, col).
  double cell_center_x(int col) const { return x_min + (col + 0.5) * cell_size; }
  double cell_center_y(int row) const { return y_min + (row + 0.5) * cell_size; }

  // Floor binning with the max edge mapped to the last cell; nullopt when out of range.
  std::optional<int> col_of(double x) const;
  std::optional<int> row_of(double y) const;
  std::optional<int> zbin_of(double z) const;

  friend bool operator==(const BEVGridSpec&, const BEVGridSpec&) = default;
};

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(const Vec3& v) const;
  Mat3 transposed() const;
  Mat3 operator*(const Mat3& o) const;
};

// Rigid transform from sensor frame to ego frame, R = Rz(yaw) Ry(pitch) Rx(roll).
struct SensorPose {
  Vec3 translation;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  Mat3 rotation() const;

  friend bool operator==(const SensorPose&, const SensorPose&) = default;
};

struct RigidTransform {
  Mat3 rotation;
  Vec3 translation;

  static RigidTransform from_pose(const SensorPose& pose);
  RigidTransform inverse() const;
  Vec3 apply(const Vec3& p) const;
};

PointCloud transform_points(const PointCloud& cloud, const SensorPose& pose);
PointCloud transform_points(const PointCloud& cloud, const RigidTransform& transform);

// Intersection over union of the yaw-rotated BEV rectangles; z is ignored.
double bev_iou(const Box3D& a, const Box3D& b);

// Area of the intersection of two convex polygons (counter-clockwise vertex lists).
double convex_intersection_area(const std::vector<std::array<double, 2>>& subject,
                                const std::vector<std::array<double, 2>>& clip);

bool point_in_box(const Point& p, const Box3D& box);

// Indices of points inside the rotated cuboid, boundary inclusive, ascending.
std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box);

// z_bins x H x W counts, plus H x W max-z (z_min where empty) and mean intensity (0 where empty).
struct VoxelGrid {
  Tensor counts;
  Tensor max_z;
  Tensor mean_intensity;
  std::size_t in_range = 0;
};

VoxelGrid voxelize(const PointCloud& cloud, const BEVGridSpec& grid);

double center_distance(const Box3D& a, const Box3D& b);

}  // namespace gatedbev
