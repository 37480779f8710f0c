#include "gatedbev/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gatedbev/errors.hpp"

namespace gatedbev {

namespace {

using Pt2 = std::array<double, 2>;

int exact_cells(double lo, double hi, double cell, const char* axis) {
  const double n = (hi - lo) / cell;
  const double r = std::round(n);
  if (!(n >= 1.0 - 1e-9) || std::abs(n - r) > 1e-9) {
    throw ConfigError(std::string("grid ") + axis + " range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "] is not an exact multiple of cell_size " + std::to_string(cell));
  }
  return static_cast<int>(r);
}

std::optional<int> bin_of(double v, double lo, double hi, double step, int n) {
  if (!(v >= lo && v <= hi)) return std::nullopt;
  int i = static_cast<int>(std::floor((v - lo) / step));
  return std::clamp(i, 0, n - 1);
}

double polygon_area(const std::vector<Pt2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Pt2& p = poly[i];
    const Pt2& q = poly[(i + 1) % poly.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;
}

// Signed side of p relative to the directed edge a->b; positive is left.
double side(const Pt2& a, const Pt2& b, const Pt2& p) {
  return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
}

}  // namespace

double normalize_yaw(double yaw) {
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(yaw, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

void Box3D::validate() const {
  if (!(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0)) throw ConfigError("Box3D extent must be strictly positive");
  if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) throw ConfigError("Box3D yaw must lie in (-pi, pi]");
  if (score && !(*score >= 0.0 && *score <= 1.0)) throw ConfigError("Box3D score must lie in [0, 1]");
}

std::array<std::array<double, 2>, 4> Box3D::bev_corners() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hl = 0.5 * extent.x;
  const double hw = 0.5 * extent.y;
  const std::array<Pt2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Pt2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {center.x + c * local[i][0] - s * local[i][1], center.y + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

int BEVGridSpec::width() const { return exact_cells(x_min, x_max, cell_size, "x"); }
int BEVGridSpec::height() const { return exact_cells(y_min, y_max, cell_size, "y"); }

void BEVGridSpec::validate() const {
  if (!(cell_size > 0.0)) throw ConfigError("grid cell_size must be > 0");
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) throw ConfigError("grid ranges must be nonempty");
  if (z_bins < 1) throw ConfigError("grid z_bins must be >= 1");
  (void)width();
  (void)height();
}

std::optional<int> BEVGridSpec::col_of(double x) const { return bin_of(x, x_min, x_max, cell_size, width()); }
std::optional<int> BEVGridSpec::row_of(double y) const { return bin_of(y, y_min, y_max, cell_size, height()); }
std::optional<int> BEVGridSpec::zbin_of(double z) const {
  return bin_of(z, z_min, z_max, (z_max - z_min) / z_bins, z_bins);
}

Vec3 Mat3::apply(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::transposed() const { return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}}; }

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = s;
    }
  return r;
}

Mat3 SensorPose::rotation() const {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const Mat3 rz{{cy, -sy, 0, sy, cy, 0, 0, 0, 1}};
  const Mat3 ry{{cp, 0, sp, 0, 1, 0, -sp, 0, cp}};
  const Mat3 rx{{1, 0, 0, 0, cr, -sr, 0, sr, cr}};
  return rz * ry * rx;
}

RigidTransform RigidTransform::from_pose(const SensorPose& pose) { return {pose.rotation(), pose.translation}; }

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation.transposed();
  const Vec3 t = rt.apply(translation);
  return {rt, {-t.x, -t.y, -t.z}};
}

Vec3 RigidTransform::apply(const Vec3& p) const {
  const Vec3 r = rotation.apply(p);
  return {r.x + translation.x, r.y + translation.y, r.z + translation.z};
}

PointCloud transform_points(const PointCloud& cloud, const RigidTransform& transform) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point& p : cloud.points) {
    const Vec3 q = transform.apply({p.x, p.y, p.z});
    out.points.push_back({q.x, q.y, q.z, p.intensity});
  }
  return out;
}

PointCloud transform_points(const PointCloud& cloud, const SensorPose& pose) {
  return transform_points(cloud, RigidTransform::from_pose(pose));
}

double convex_intersection_area(const std::vector<Pt2>& subject, const std::vector<Pt2>& clip) {
  // Sutherland-Hodgman: clip the subject polygon against each edge of the clip polygon.
  std::vector<Pt2> poly = subject;
  for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
    const Pt2& a = clip[e];
    const Pt2& b = clip[(e + 1) % clip.size()];
    std::vector<Pt2> next;
    next.reserve(poly.size() + 2);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Pt2& p = poly[i];
      const Pt2& q = poly[(i + 1) % poly.size()];
      const double sp = side(a, b, p);
      const double sq = side(a, b, q);
      if (sp >= 0.0) next.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        next.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
      }
    }
    poly = std::move(next);
  }
  if (poly.size() < 3) return 0.0;
  return std::max(0.0, polygon_area(poly));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  // Clipping is not exactly symmetric in floating point; averaging both orders makes iou(a, b) == iou(b, a).
  const std::vector<Pt2> pa(ca.begin(), ca.end()), pb(cb.begin(), cb.end());
  const double inter = 0.5 * (convex_intersection_area(pa, pb) + convex_intersection_area(pb, pa));
  if (inter <= 0.0) return 0.0;
  const double area_a = a.extent.x * a.extent.y;
  const double area_b = b.extent.x * b.extent.y;
  const double uni = area_a + area_b - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool point_in_box(const Point& p, const Box3D& box) {
  const double dx = p.x - box.center.x;
  const double dy = p.y - box.center.y;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.extent.x && std::abs(ly) <= 0.5 * box.extent.y &&
         std::abs(p.z - box.center.z) <= 0.5 * box.extent.z;
}

std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (point_in_box(cloud.points[i], box)) idx.push_back(i);
  return idx;
}

VoxelGrid voxelize(const PointCloud& cloud, const BEVGridSpec& grid) {
  grid.validate();
  const auto w = static_cast<std::size_t>(grid.width());
  const auto h = static_cast<std::size_t>(grid.height());
  VoxelGrid v{Tensor({static_cast<std::size_t>(grid.z_bins), h, w}), Tensor({1, h, w}, grid.z_min), Tensor({1, h, w}),
              0};
  Tensor per_cell({1, h, w});
  for (const Point& p : cloud.points) {
    const auto col = grid.col_of(p.x);
    const auto row = grid.row_of(p.y);
    const auto zb = grid.zbin_of(p.z);
    if (!col || !row || !zb) continue;
    const auto r = static_cast<std::size_t>(*row);
    const auto c = static_cast<std::size_t>(*col);
    v.counts.at(static_cast<std::size_t>(*zb), r, c) += 1.0;
    double& mz = v.max_z.at(0, r, c);
    if (per_cell.at(0, r, c) == 0.0 || p.z > mz) mz = p.z;
    per_cell.at(0, r, c) += 1.0;
    v.mean_intensity.at(0, r, c) += p.intensity;
    ++v.in_range;
  }
  for (std::size_t i = 0; i < per_cell.size(); ++i)
    if (per_cell.data[i] > 0.0) v.mean_intensity.data[i] /= per_cell.data[i];
  return v;
}

double center_distance(const Box3D& a, const Box3D& b) {
  return std::hypot(a.center.x - b.center.x, a.center.y - b.center.y);
}

}  // namespace gatedbev
