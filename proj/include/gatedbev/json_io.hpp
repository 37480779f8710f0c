#pragma once

#include <vector>

#include <json.hpp>

#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"

namespace gatedbev {

using nlohmann::json;

json vec3_json(const Vec3& v);
Vec3 vec3_from(const json& j);

json grid_json(const BEVGridSpec& g);
BEVGridSpec grid_from(const json& j);

json pose_json(const SensorPose& p);
SensorPose pose_from(const json& j);

// Flags are written as 0/1 integers.
json context_json(const Context& c);
Context context_from(const json& j);

json box_json(const Box3D& b);
Box3D box_from(const json& j);

json classes_json(const std::vector<ClassInfo>& classes);
std::vector<ClassInfo> classes_from(const json& arr);

}  // namespace gatedbev
