#include "gatedbev/json_io.hpp"

#include <stdexcept>

namespace gatedbev {

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json grid_json(const BEVGridSpec& g) {
  return {{"x_range", {g.x_min, g.x_max}}, {"y_range", {g.y_min, g.y_max}}, {"z_range", {g.z_min, g.z_max}},
          {"cell_size", g.cell_size},      {"z_bins", g.z_bins}};
}

BEVGridSpec grid_from(const json& j) {
  BEVGridSpec g;
  g.x_min = j.at("x_range").at(0);
  g.x_max = j.at("x_range").at(1);
  g.y_min = j.at("y_range").at(0);
  g.y_max = j.at("y_range").at(1);
  g.z_min = j.at("z_range").at(0);
  g.z_max = j.at("z_range").at(1);
  g.cell_size = j.at("cell_size");
  g.z_bins = j.at("z_bins");
  return g;
}

json pose_json(const SensorPose& p) {
  return {{"translation", vec3_json(p.translation)}, {"yaw", p.yaw}, {"pitch", p.pitch}, {"roll", p.roll}};
}

SensorPose pose_from(const json& j) {
  return {vec3_from(j.at("translation")), j.at("yaw").get<double>(), j.at("pitch").get<double>(),
          j.at("roll").get<double>()};
}

json context_json(const Context& c) { return {{"is_night", c.is_night ? 1 : 0}, {"is_rain", c.is_rain ? 1 : 0}}; }

Context context_from(const json& j) {
  const int n = j.at("is_night").get<int>();
  const int r = j.at("is_rain").get<int>();
  if ((n != 0 && n != 1) || (r != 0 && r != 1)) throw std::invalid_argument("context flags must be 0 or 1");
  return {n == 1, r == 1};
}

json box_json(const Box3D& b) {
  json j = {{"center", vec3_json(b.center)}, {"extent", vec3_json(b.extent)}, {"yaw", b.yaw}, {"class_id", b.class_id}};
  if (b.score) j["score"] = *b.score;
  return j;
}

Box3D box_from(const json& j) {
  Box3D b;
  b.center = vec3_from(j.at("center"));
  b.extent = vec3_from(j.at("extent"));
  b.yaw = j.at("yaw");
  b.class_id = j.at("class_id");
  if (j.contains("score")) b.score = j.at("score").get<double>();
  return b;
}

json classes_json(const std::vector<ClassInfo>& classes) {
  json arr = json::array();
  for (const auto& c : classes)
    arr.push_back({{"name", c.name},
                   {"extent_prior", vec3_json(c.extent_prior)},
                   {"frequency", c.frequency},
                   {"camera_albedo", c.camera_albedo}});
  return arr;
}

std::vector<ClassInfo> classes_from(const json& arr) {
  std::vector<ClassInfo> out;
  for (const auto& c : arr)
    out.push_back({c.at("name").get<std::string>(), vec3_from(c.at("extent_prior")), c.at("frequency").get<double>(),
                   c.at("camera_albedo").get<double>()});
  return out;
}

}  // namespace gatedbev
