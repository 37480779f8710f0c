#include "gatedbev/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "gatedbev/errors.hpp"

namespace gatedbev {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 add(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 scale(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

int sample_class(Rng& rng, const std::vector<ClassInfo>& classes) {
  double total = 0.0;
  for (const auto& c : classes) total += c.frequency;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    u -= classes[i].frequency;
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(classes.size()) - 1;
}

// Slab intersection in the box frame; also reports the entry-face normal (box frame axis).
std::optional<std::pair<double, int>> ray_box_hit(const Vec3& origin, const Vec3& dir, const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double ox = origin.x - box.center.x;
  const double oy = origin.y - box.center.y;
  const std::array<double, 3> o{c * ox + s * oy, -s * ox + c * oy, origin.z - box.center.z};
  const std::array<double, 3> d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
  const std::array<double, 3> half{0.5 * box.extent.x, 0.5 * box.extent.y, 0.5 * box.extent.z};
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = 0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t1 = (-half[i] - o[i]) / d[i];
    double t2 = (half[i] - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      axis = i;
    }
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far < 0.0) return std::nullopt;
  if (t_near < 0.0) return std::make_pair(0.0, axis);  // origin inside the box
  return std::make_pair(t_near, axis);
}

struct Hit {
  double range = 0.0;
  int actor = -1;  // -1 ground
  double cos_incidence = 1.0;
};

std::optional<Hit> cast(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_range) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < scene.actors.size(); ++i) {
    const auto h = ray_box_hit(origin, dir, scene.actors[i]);
    if (!h || h->first > max_range) continue;
    if (!best || h->first < best->range) {
      const Box3D& b = scene.actors[i];
      double cosi = 1.0;
      if (h->second == 2) {
        cosi = std::abs(dir.z);
      } else {
        const double a = b.yaw + (h->second == 0 ? 0.0 : kPi / 2.0);
        cosi = std::abs(std::cos(a) * dir.x + std::sin(a) * dir.y);
      }
      best = Hit{h->first, static_cast<int>(i), cosi};
    }
  }
  if (dir.z < 0.0) {
    const double t = -origin.z / dir.z;
    if (t <= max_range && (!best || t < best->range)) best = Hit{t, -1, std::abs(dir.z)};
  }
  return best;
}

}  // namespace

std::string_view context_name(int bucket) {
  static constexpr std::array<std::string_view, 4> names{"day_clear", "night_clear", "day_rain", "night_rain"};
  return names.at(static_cast<std::size_t>(bucket));
}

std::vector<ClassInfo> default_class_table() {
  return {
      {"car", {4.5, 1.9, 1.6}, 0.40, 0.50},
      {"truck", {7.0, 2.5, 3.0}, 0.20, 0.95},
      {"bus", {11.0, 2.9, 3.3}, 0.15, 0.25},
      {"pedestrian", {0.8, 0.7, 1.75}, 0.25, 0.75},
  };
}

std::vector<Context> balanced_contexts(std::size_t n_total) {
  if (n_total % kContextBuckets != 0) {
    throw ConfigError("sample count " + std::to_string(n_total) +
                      " is not divisible by 4; contexts must split evenly across day/night x clear/rain");
  }
  std::vector<Context> out;
  out.reserve(n_total);
  for (std::size_t i = 0; i < n_total; ++i) out.push_back(Context::from_bucket(static_cast<int>(i % kContextBuckets)));
  return out;
}

Scene generate_scene(const SceneSpec& spec, const BEVGridSpec& grid, const std::vector<ClassInfo>& classes,
                     const SceneConfig& cfg) {
  if (classes.empty()) throw ConfigError("class table is empty");
  for (const auto& c : classes)
    if (!(c.extent_prior.x > 0 && c.extent_prior.y > 0 && c.extent_prior.z > 0 && c.frequency > 0))
      throw ConfigError("class '" + c.name + "' has non-positive priors");
  Rng rng(spec.seed);
  const int n = spec.n_actors >= 0 ? spec.n_actors
                                   : static_cast<int>(rng.uniform_int(cfg.min_actors, cfg.max_actors));
  Scene scene;
  for (int a = 0; a < n; ++a) {
    const int cls = sample_class(rng, classes);
    const Vec3& prior = classes[static_cast<std::size_t>(cls)].extent_prior;
    const Vec3 ext{prior.x * rng.uniform(1.0 - cfg.extent_jitter, 1.0 + cfg.extent_jitter),
                   prior.y * rng.uniform(1.0 - cfg.extent_jitter, 1.0 + cfg.extent_jitter),
                   prior.z * rng.uniform(1.0 - cfg.extent_jitter, 1.0 + cfg.extent_jitter)};
    for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
      Box3D b;
      b.class_id = cls;
      b.extent = ext;
      b.center = {rng.uniform(grid.x_min + cfg.placement_margin, grid.x_max - cfg.placement_margin),
                  rng.uniform(grid.y_min + cfg.placement_margin, grid.y_max - cfg.placement_margin), 0.5 * ext.z};
      b.yaw = normalize_yaw(rng.uniform(-kPi, kPi));
      // Keep the whole footprint clear of the ego vehicle.
      if (std::hypot(b.center.x, b.center.y) < cfg.ego_clearance + 0.5 * std::hypot(ext.x, ext.y)) continue;
      const bool clash = std::any_of(scene.actors.begin(), scene.actors.end(), [&](const Box3D& o) {
        return center_distance(o, b) < cfg.min_center_gap || bev_iou(o, b) > 0.0;
      });
      if (clash) continue;
      scene.actors.push_back(b);
      break;
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------

Vec3 lidar_ray_direction(const LidarConfig& cfg, int azimuth, int ring) {
  const double az = -kPi + (azimuth + 0.5) * (2.0 * kPi / cfg.azimuth_rays);
  const double el = cfg.rings == 1 ? cfg.elevation_min_deg
                                   : cfg.elevation_min_deg + ring * (cfg.elevation_max_deg - cfg.elevation_min_deg) /
                                                                 (cfg.rings - 1);
  const double e = el * kPi / 180.0;
  return {std::cos(e) * std::cos(az), std::cos(e) * std::sin(az), std::sin(e)};
}

std::optional<double> ray_box_distance(const Vec3& origin, const Vec3& dir, const Box3D& box) {
  const auto h = ray_box_hit(origin, dir, box);
  if (!h) return std::nullopt;
  return h->first;
}

LidarSweep simulate_lidar(const Scene& scene, const Context& context, Rng& rng, const LidarConfig& cfg) {
  LidarSweep sweep;
  const double r0 = context.is_rain ? cfg.attenuation_rain : cfg.attenuation_clear;
  for (int ring = 0; ring < cfg.rings; ++ring) {
    for (int az = 0; az < cfg.azimuth_rays; ++az) {
      ++sweep.rays;
      const Vec3 dir = lidar_ray_direction(cfg, az, ring);
      if (context.is_rain) {
        if (rng.bernoulli(cfg.p_drop)) {
          ++sweep.dropped;
          continue;
        }
        if (rng.bernoulli(cfg.p_scatter)) {
          const double r = rng.uniform(cfg.scatter_min_range, cfg.scatter_max_range);
          const Vec3 p = add(cfg.origin, scale(dir, r));
          sweep.cloud.points.push_back({p.x, p.y, p.z, cfg.scatter_reflectivity * std::exp(-r / r0)});
          sweep.kinds.push_back(ReturnKind::scattered);
          ++sweep.scattered;
          continue;
        }
      }
      const auto hit = cast(scene, cfg.origin, dir, cfg.max_range);
      if (!hit) continue;
      const Vec3 p = add(cfg.origin, scale(dir, hit->range));
      const double refl = hit->actor >= 0 ? cfg.box_reflectivity : cfg.ground_reflectivity;
      sweep.cloud.points.push_back({p.x, p.y, p.z, refl * std::exp(-hit->range / r0)});
      sweep.kinds.push_back(hit->actor >= 0 ? ReturnKind::box : ReturnKind::ground);
    }
  }
  return sweep;
}

// ---------------------------------------------------------------------------

double CameraImage::focal() const { return 0.5 * width / std::tan(0.5 * hfov); }

Vec3 CameraImage::pixel_ray(int u, int v) const {
  const double f = focal();
  const Vec3 d = normalized({1.0, -(u + 0.5 - 0.5 * width) / f, -(v + 0.5 - 0.5 * height) / f});
  return pose.rotation().apply(d);
}

std::vector<SensorPose> camera_rig(const CameraConfig& cfg) {
  static constexpr std::array<double, kNumCameras> yaws{0.0, kPi / 3.0, 2.0 * kPi / 3.0, kPi, -2.0 * kPi / 3.0,
                                                        -kPi / 3.0};
  std::vector<SensorPose> rig;
  for (double y : yaws) rig.push_back(SensorPose{cfg.mount, y, cfg.pitch, 0.0});
  return rig;
}

CameraImage render_camera(const Scene& scene, const SensorPose& pose, const CameraConfig& cfg,
                          const std::vector<ClassInfo>& classes) {
  CameraImage img;
  img.width = cfg.width;
  img.height = cfg.height;
  img.pose = pose;
  img.hfov = cfg.hfov;
  const std::size_t n = static_cast<std::size_t>(cfg.width) * static_cast<std::size_t>(cfg.height);
  img.intensity.assign(n, 0.0);
  img.depth.assign(n, kNoReturn);
  const Mat3 rot = pose.rotation();
  const double f = img.focal();
  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      const Vec3 dir =
          rot.apply(normalized({1.0, -(u + 0.5 - 0.5 * cfg.width) / f, -(v + 0.5 - 0.5 * cfg.height) / f}));
      const auto hit = cast(scene, pose.translation, dir, cfg.max_range);
      if (!hit) continue;
      const std::size_t i = static_cast<std::size_t>(v) * cfg.width + u;
      const double albedo =
          hit->actor >= 0 ? classes.at(static_cast<std::size_t>(scene.actors[static_cast<std::size_t>(hit->actor)].class_id)).camera_albedo
                          : cfg.ground_albedo;
      img.intensity[i] = std::clamp(albedo * (0.55 + 0.45 * hit->cos_incidence), 0.0, 1.0);
      img.depth[i] = hit->range;
    }
  }
  return img;
}

std::vector<CameraFrame> simulate_cameras(const Scene& scene, const Context& context, std::uint64_t seed,
                                          const CameraConfig& cfg, const std::vector<ClassInfo>& classes) {
  if (cfg.rain_streak_length < 1 || cfg.height % cfg.rain_streak_length != 0)
    throw ConfigError("camera height must be a multiple of rain_streak_length");
  const auto rig = camera_rig(cfg);
  std::vector<CameraFrame> frames;
  frames.reserve(rig.size());
  const double sigma = context.is_night ? cfg.depth_sigma * (1.0 + cfg.night_sigma_gain) : cfg.depth_sigma;
  for (std::size_t cam = 0; cam < rig.size(); ++cam) {
    CameraFrame fr;
    fr.image = render_camera(scene, rig[cam], cfg, classes);
    CameraImage& img = fr.image;
    const std::size_t n = img.intensity.size();
    fr.streak_mask.assign(n, 0);

    Rng noise(derive_stream(seed, 100 + cam * 8 + 0));
    Rng glare(derive_stream(seed, 100 + cam * 8 + 1));
    Rng streak(derive_stream(seed, 100 + cam * 8 + 2));

    for (std::size_t i = 0; i < n; ++i) {
      const double eps = noise.normal(0.0, 1.0);
      if (img.depth[i] > 0.0) img.depth[i] = std::max(0.05, img.depth[i] + sigma * eps);
    }

    if (context.is_night) {
      for (auto& v : img.intensity) v *= cfg.night_scale;
      for (int b = 0; b < cfg.glare_blobs; ++b) {
        GlareBlob g{glare.uniform(0.0, img.width), glare.uniform(0.0, img.height),
                    glare.uniform(cfg.glare_sigma_min, cfg.glare_sigma_max)};
        fr.glare.push_back(g);
        for (int v = 0; v < img.height; ++v)
          for (int u = 0; u < img.width; ++u) {
            const double du = u + 0.5 - g.u;
            const double dv = v + 0.5 - g.v;
            double& p = img.intensity[static_cast<std::size_t>(v) * img.width + u];
            p = std::min(1.0, p + cfg.glare_peak * std::exp(-(du * du + dv * dv) / (2.0 * g.sigma * g.sigma)));
          }
      }
    }

    if (context.is_rain) {
      // Fixed number of vertical streak slots, placed without overlap.
      const int len = cfg.rain_streak_length;
      const std::size_t slots_per_col = static_cast<std::size_t>(img.height / len);
      const std::size_t slots = slots_per_col * static_cast<std::size_t>(img.width);
      const auto k = static_cast<std::size_t>(std::llround(cfg.rain_mask_fraction * static_cast<double>(slots)));
      std::vector<std::size_t> order(slots);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(streak.uniform_int(0, static_cast<std::int64_t>(slots - i - 1)));
        std::swap(order[i], order[j]);
        const std::size_t col = order[i] / slots_per_col;
        const std::size_t row0 = (order[i] % slots_per_col) * static_cast<std::size_t>(len);
        for (int r = 0; r < len; ++r) {
          const std::size_t px = (row0 + static_cast<std::size_t>(r)) * static_cast<std::size_t>(img.width) + col;
          fr.streak_mask[px] = 1;
          img.intensity[px] = 0.0;
          img.depth[px] = kNoReturn;
        }
      }
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

std::vector<Box3D> filter_annotations(const std::vector<Box3D>& boxes, const PointCloud& cloud) {
  std::vector<Box3D> kept;
  for (const Box3D& b : boxes)
    if (std::any_of(cloud.points.begin(), cloud.points.end(), [&](const Point& p) { return point_in_box(p, b); }))
      kept.push_back(b);
  return kept;
}

// ---------------------------------------------------------------------------

Sample generate_sample(std::uint64_t dataset_seed, std::size_t index, const Context& context,
                       const BEVGridSpec& grid, const std::vector<ClassInfo>& classes, const SynthConfig& cfg) {
  const std::uint64_t sseed = derive_sample_seed(dataset_seed, index);
  const Scene scene = generate_scene(SceneSpec{derive_stream(sseed, 1), context, -1}, grid, classes, cfg.scene);

  Rng lidar_rng(derive_stream(sseed, 2));
  LidarSweep sweep = simulate_lidar(scene, context, lidar_rng, cfg.lidar);

  Sample s;
  char tok[32];
  std::snprintf(tok, sizeof tok, "sample_%06zu", index);
  s.token = tok;
  s.context = context;
  s.cloud = std::move(sweep.cloud);
  for (Point& p : s.cloud.points) p = {to_f32(p.x), to_f32(p.y), to_f32(p.z), to_f32(p.intensity)};

  auto frames = simulate_cameras(scene, context, derive_stream(sseed, 3), cfg.camera, classes);
  for (auto& fr : frames) {
    for (auto& v : fr.image.intensity) v = to_f32(v);
    for (auto& v : fr.image.depth) v = to_f32(v);
    s.cameras.push_back(std::move(fr.image));
  }
  s.annotations = filter_annotations(scene.actors, s.cloud);
  return s;
}

std::vector<Sample> generate_samples(std::uint64_t dataset_seed, std::size_t n_total, const BEVGridSpec& grid,
                                     const std::vector<ClassInfo>& classes, const SynthConfig& cfg) {
  const auto contexts = balanced_contexts(n_total);
  std::vector<Sample> out;
  out.reserve(n_total);
  for (std::size_t i = 0; i < n_total; ++i) out.push_back(generate_sample(dataset_seed, i, contexts[i], grid, classes, cfg));
  return out;
}

}  // namespace gatedbev
