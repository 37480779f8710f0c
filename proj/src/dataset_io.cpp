#include "gatedbev/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gatedbev/errors.hpp"
#include "gatedbev/json_io.hpp"
#include "gatedbev/rng.hpp"

namespace gatedbev {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string encode_cloud(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 16);
  for (const Point& p : cloud.points) {
    append_f32_le(out, p.x);
    append_f32_le(out, p.y);
    append_f32_le(out, p.z);
    append_f32_le(out, p.intensity);
  }
  return out;
}

std::string encode_camera(const CameraImage& img) {
  std::string out;
  out.reserve(img.intensity.size() * 8);
  for (std::size_t i = 0; i < img.intensity.size(); ++i) {
    append_f32_le(out, img.intensity[i]);
    append_f32_le(out, img.depth[i] > 0.0 ? img.depth[i] : kNoReturn);
  }
  return out;
}

}  // namespace

std::string_view split_name(Split s) { return s == Split::train ? "train" : "val"; }

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const SampleRecord& r) { return r.split == s; }));
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i)
    if (manifest.samples[i].split == s) idx.push_back(i);
  return idx;
}

void append_f32_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double read_f32_le(const char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return static_cast<double>(std::bit_cast<float>(bits));
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoError::Kind::unwritable, "cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoError::Kind::unwritable, "write failed for '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoError::Kind::missing, "missing file '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<Split> assign_splits(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("train fraction must lie in [0, 1]");
  std::vector<Split> out(samples.size(), Split::val);
  for (int b = 0; b < kContextBuckets; ++b) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].context.bucket() == b) idx.push_back(i);
    Rng rng(derive_stream(seed, 900 + static_cast<std::uint64_t>(b)));
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(idx[i - 1], idx[j]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < n_train; ++k) out[idx[k]] = Split::train;
  }
  return out;
}

DatasetManifest write_dataset(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed,
                              const BEVGridSpec& grid, const std::vector<ClassInfo>& classes, const fs::path& out_dir) {
  std::set<std::string> tokens;
  for (const auto& s : samples)
    if (!tokens.insert(s.token).second)
      throw IoError(IoError::Kind::token_collision, "duplicate sample token '" + s.token + "'");

  std::error_code ec;
  fs::create_directories(out_dir / "samples", ec);
  if (ec) throw IoError(IoError::Kind::unwritable, "cannot create '" + out_dir.string() + "': " + ec.message());

  DatasetManifest m;
  m.seed = seed;
  m.train_fraction = train_fraction;
  m.grid = grid;
  m.classes = classes;
  if (!samples.empty()) {
    const CameraImage& c0 = samples.front().cameras.at(0);
    m.camera = {c0.width, c0.height, c0.hfov, {}};
    for (const auto& c : samples.front().cameras) m.camera.poses.push_back(c.pose);
  }
  const auto splits = assign_splits(samples, train_fraction, seed);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.cameras.size() != static_cast<std::size_t>(kNumCameras))
      throw ConfigError("sample '" + s.token + "' must carry exactly 6 cameras");
    const fs::path rel = fs::path("samples") / s.token;
    fs::create_directories(out_dir / rel, ec);
    if (ec) throw IoError(IoError::Kind::unwritable, "cannot create '" + (out_dir / rel).string() + "'");

    SampleRecord rec{s.token, s.context, splits[i], (rel / "lidar.bin").generic_string(), {},
                     (rel / "ann.json").generic_string()};
    write_file(out_dir / rec.lidar_path, encode_cloud(s.cloud));
    for (std::size_t c = 0; c < s.cameras.size(); ++c) {
      rec.camera_paths.push_back((rel / ("cam_" + std::to_string(c) + ".bin")).generic_string());
      write_file(out_dir / rec.camera_paths.back(), encode_camera(s.cameras[c]));
    }
    json ann = {{"token", s.token}, {"context", context_json(s.context)}, {"boxes", json::array()}};
    for (const auto& b : s.annotations) ann["boxes"].push_back(box_json(b));
    write_file(out_dir / rec.annotation_path, ann.dump(1) + "\n");
    m.context_counts[static_cast<std::size_t>(splits[i])][static_cast<std::size_t>(s.context.bucket())]++;
    m.samples.push_back(std::move(rec));
  }

  json records = json::array();
  for (const auto& r : m.samples)
    records.push_back({{"token", r.token},
                       {"context", context_json(r.context)},
                       {"split", split_name(r.split)},
                       {"lidar", r.lidar_path},
                       {"cameras", r.camera_paths},
                       {"annotations", r.annotation_path}});
  json counts;
  for (int sp = 0; sp < 2; ++sp)
    for (int b = 0; b < kContextBuckets; ++b)
      counts[std::string(split_name(static_cast<Split>(sp)))][std::string(context_name(b))] =
          m.context_counts[static_cast<std::size_t>(sp)][static_cast<std::size_t>(b)];
  json cam_poses = json::array();
  for (const auto& p : m.camera.poses) cam_poses.push_back(pose_json(p));
  const json doc = {{"version", m.version},
                    {"seed", m.seed},
                    {"train_fraction", m.train_fraction},
                    {"grid", grid_json(m.grid)},
                    {"classes", classes_json(m.classes)},
                    {"camera", {{"width", m.camera.width}, {"height", m.camera.height}, {"hfov", m.camera.hfov},
                                {"poses", cam_poses}}},
                    {"samples", records},
                    {"context_counts", counts}};
  write_file(out_dir / "manifest.json", doc.dump(2) + "\n");
  return m;
}

Dataset read_dataset(const fs::path& dir) {
  const std::string text = read_file(dir / "manifest.json");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::corrupt, "manifest.json is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_string())
    throw IoError(IoError::Kind::corrupt, "manifest.json lacks a version string");
  if (doc["version"] != kDatasetSchema)
    throw IoError(IoError::Kind::schema_mismatch, "dataset schema '" + doc["version"].get<std::string>() +
                                                       "' does not match expected '" + kDatasetSchema + "'");
  Dataset ds;
  DatasetManifest& m = ds.manifest;
  try {
    m.seed = doc.at("seed");
    m.train_fraction = doc.at("train_fraction");
    m.grid = grid_from(doc.at("grid"));
    m.classes = classes_from(doc.at("classes"));
    const json& cam = doc.at("camera");
    m.camera = {cam.at("width"), cam.at("height"), cam.at("hfov"), {}};
    for (const auto& p : cam.at("poses")) m.camera.poses.push_back(pose_from(p));
    for (const auto& r : doc.at("samples")) {
      SampleRecord rec;
      rec.token = r.at("token");
      rec.context = context_from(r.at("context"));
      const std::string sp = r.at("split");
      if (sp != "train" && sp != "val") throw std::invalid_argument("unknown split '" + sp + "'");
      rec.split = sp == "train" ? Split::train : Split::val;
      rec.lidar_path = r.at("lidar");
      rec.camera_paths = r.at("cameras").get<std::vector<std::string>>();
      rec.annotation_path = r.at("annotations");
      m.samples.push_back(std::move(rec));
    }
    for (int sp = 0; sp < 2; ++sp)
      for (int b = 0; b < kContextBuckets; ++b)
        m.context_counts[static_cast<std::size_t>(sp)][static_cast<std::size_t>(b)] =
            doc.at("context_counts").at(std::string(split_name(static_cast<Split>(sp)))).at(std::string(context_name(b)));
  } catch (const std::exception& e) {
    throw IoError(IoError::Kind::corrupt, std::string("manifest.json malformed: ") + e.what());
  }

  std::set<std::string> tokens;
  std::array<std::array<std::size_t, kContextBuckets>, 2> actual{};
  for (const auto& r : m.samples) {
    if (!tokens.insert(r.token).second)
      throw IoError(IoError::Kind::token_collision, "duplicate sample token '" + r.token + "' in manifest");
    actual[static_cast<std::size_t>(r.split)][static_cast<std::size_t>(r.context.bucket())]++;
  }
  if (actual != m.context_counts)
    throw IoError(IoError::Kind::corrupt, "declared context counts do not match sample records");
  if (m.camera.poses.size() != static_cast<std::size_t>(kNumCameras))
    throw IoError(IoError::Kind::corrupt, "manifest camera rig must list 6 poses");

  for (const auto& r : m.samples) {
    Sample s;
    s.token = r.token;
    s.context = r.context;
    const std::string lidar = read_file(dir / r.lidar_path);
    if (lidar.size() % 16 != 0) throw IoError(IoError::Kind::corrupt, "'" + r.lidar_path + "' size is not a multiple of 16");
    s.cloud.points.resize(lidar.size() / 16);
    for (std::size_t i = 0; i < s.cloud.points.size(); ++i) {
      const char* p = lidar.data() + i * 16;
      s.cloud.points[i] = {read_f32_le(p), read_f32_le(p + 4), read_f32_le(p + 8), read_f32_le(p + 12)};
    }
    if (r.camera_paths.size() != static_cast<std::size_t>(kNumCameras))
      throw IoError(IoError::Kind::corrupt, "sample '" + r.token + "' must list 6 camera files");
    const std::size_t npx = static_cast<std::size_t>(m.camera.width) * static_cast<std::size_t>(m.camera.height);
    for (std::size_t c = 0; c < r.camera_paths.size(); ++c) {
      const std::string raw = read_file(dir / r.camera_paths[c]);
      if (raw.size() != npx * 8)
        throw IoError(IoError::Kind::corrupt, "'" + r.camera_paths[c] + "' has " + std::to_string(raw.size()) +
                                                   " bytes, expected " + std::to_string(npx * 8));
      CameraImage img;
      img.width = m.camera.width;
      img.height = m.camera.height;
      img.hfov = m.camera.hfov;
      img.pose = m.camera.poses[c];
      img.intensity.resize(npx);
      img.depth.resize(npx);
      for (std::size_t i = 0; i < npx; ++i) {
        img.intensity[i] = read_f32_le(raw.data() + i * 8);
        img.depth[i] = read_f32_le(raw.data() + i * 8 + 4);
      }
      s.cameras.push_back(std::move(img));
    }
    try {
      const json ann = json::parse(read_file(dir / r.annotation_path));
      if (ann.at("token") != r.token) throw std::invalid_argument("token does not match manifest");
      if (context_from(ann.at("context")) != r.context) throw std::invalid_argument("context does not match manifest");
      for (const auto& b : ann.at("boxes")) s.annotations.push_back(box_from(b));
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      throw IoError(IoError::Kind::corrupt, "'" + r.annotation_path + "' malformed: " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace gatedbev
