#include "gatedbev/config.hpp"

#include "gatedbev/dataset_io.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/json_io.hpp"

namespace gatedbev {

namespace {

json to_json(const RunConfig& c) {
  const auto& sc = c.synth.scene;
  const auto& li = c.synth.lidar;
  const auto& ca = c.synth.camera;
  const auto& tr = c.train;
  json freeze = json::array();
  for (const auto& n : tr.freeze) freeze.push_back(n);
  return {
      {"schema", kConfigSchema},
      {"seed", c.seed},
      {"train_fraction", c.train_fraction},
      {"grid", grid_json(c.grid)},
      {"scene",
       {{"min_actors", sc.min_actors},
        {"max_actors", sc.max_actors},
        {"placement_margin", sc.placement_margin},
        {"ego_clearance", sc.ego_clearance},
        {"min_center_gap", sc.min_center_gap},
        {"extent_jitter", sc.extent_jitter},
        {"placement_retries", sc.placement_retries}}},
      {"lidar",
       {{"azimuth_rays", li.azimuth_rays},
        {"rings", li.rings},
        {"elevation_min_deg", li.elevation_min_deg},
        {"elevation_max_deg", li.elevation_max_deg},
        {"origin", vec3_json(li.origin)},
        {"max_range", li.max_range},
        {"attenuation_clear", li.attenuation_clear},
        {"attenuation_rain", li.attenuation_rain},
        {"p_scatter", li.p_scatter},
        {"p_drop", li.p_drop},
        {"scatter_min_range", li.scatter_min_range},
        {"scatter_max_range", li.scatter_max_range},
        {"box_reflectivity", li.box_reflectivity},
        {"ground_reflectivity", li.ground_reflectivity},
        {"scatter_reflectivity", li.scatter_reflectivity}}},
      {"camera",
       {{"width", ca.width},
        {"height", ca.height},
        {"hfov", ca.hfov},
        {"pitch", ca.pitch},
        {"mount", vec3_json(ca.mount)},
        {"max_range", ca.max_range},
        {"ground_albedo", ca.ground_albedo},
        {"depth_sigma", ca.depth_sigma},
        {"night_sigma_gain", ca.night_sigma_gain},
        {"night_scale", ca.night_scale},
        {"glare_blobs", ca.glare_blobs},
        {"glare_peak", ca.glare_peak},
        {"glare_sigma_min", ca.glare_sigma_min},
        {"glare_sigma_max", ca.glare_sigma_max},
        {"rain_mask_fraction", ca.rain_mask_fraction},
        {"rain_streak_length", ca.rain_streak_length}}},
      {"features",
       {{"occupancy_cap", c.features.occupancy_cap},
        {"depth_bands", c.features.depth_bands},
        {"band_range", c.features.band_range},
        {"hit_cap", c.features.hit_cap},
        {"mass_scale", c.features.mass_scale}}},
      {"model",
       {{"variant", variant_name(c.model.variant)},
        {"c_out", c.model.c_out},
        {"gate_bias", c.init.gate_bias},
        {"heat_bias", c.init.heat_bias},
        {"reg_scale", c.init.reg_scale}}},
      {"train",
       {{"learning_rate", tr.learning_rate},
        {"gate_lr_scale", tr.gate_lr_scale},
        {"epochs", tr.epochs},
        {"batch_size", tr.batch_size},
        {"seed", tr.seed},
        {"freeze", freeze},
        {"focal_alpha", tr.loss.alpha},
        {"focal_beta", tr.loss.beta},
        {"lambda_reg", tr.loss.lambda_reg},
        {"grad_clip", tr.grad_clip}}},
      {"decode",
       {{"score_thresh", c.decode.score_thresh},
        {"nms_radius", c.decode.nms_radius},
        {"max_detections", c.decode.max_detections}}},
      {"eval", {{"thresholds", c.eval_thresholds}}},
      {"bench", {{"height", c.bench_height}, {"width", c.bench_width}}},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = j.at("seed");
  c.train_fraction = j.at("train_fraction");
  c.grid = grid_from(j.at("grid"));
  const json& s = j.at("scene");
  auto& sc = c.synth.scene;
  sc.min_actors = s.at("min_actors");
  sc.max_actors = s.at("max_actors");
  sc.placement_margin = s.at("placement_margin");
  sc.ego_clearance = s.at("ego_clearance");
  sc.min_center_gap = s.at("min_center_gap");
  sc.extent_jitter = s.at("extent_jitter");
  sc.placement_retries = s.at("placement_retries");
  const json& l = j.at("lidar");
  auto& li = c.synth.lidar;
  li.azimuth_rays = l.at("azimuth_rays");
  li.rings = l.at("rings");
  li.elevation_min_deg = l.at("elevation_min_deg");
  li.elevation_max_deg = l.at("elevation_max_deg");
  li.origin = vec3_from(l.at("origin"));
  li.max_range = l.at("max_range");
  li.attenuation_clear = l.at("attenuation_clear");
  li.attenuation_rain = l.at("attenuation_rain");
  li.p_scatter = l.at("p_scatter");
  li.p_drop = l.at("p_drop");
  li.scatter_min_range = l.at("scatter_min_range");
  li.scatter_max_range = l.at("scatter_max_range");
  li.box_reflectivity = l.at("box_reflectivity");
  li.ground_reflectivity = l.at("ground_reflectivity");
  li.scatter_reflectivity = l.at("scatter_reflectivity");
  const json& a = j.at("camera");
  auto& ca = c.synth.camera;
  ca.width = a.at("width");
  ca.height = a.at("height");
  ca.hfov = a.at("hfov");
  ca.pitch = a.at("pitch");
  ca.mount = vec3_from(a.at("mount"));
  ca.max_range = a.at("max_range");
  ca.ground_albedo = a.at("ground_albedo");
  ca.depth_sigma = a.at("depth_sigma");
  ca.night_sigma_gain = a.at("night_sigma_gain");
  ca.night_scale = a.at("night_scale");
  ca.glare_blobs = a.at("glare_blobs");
  ca.glare_peak = a.at("glare_peak");
  ca.glare_sigma_min = a.at("glare_sigma_min");
  ca.glare_sigma_max = a.at("glare_sigma_max");
  ca.rain_mask_fraction = a.at("rain_mask_fraction");
  ca.rain_streak_length = a.at("rain_streak_length");
  const json& f = j.at("features");
  c.features.occupancy_cap = f.at("occupancy_cap");
  c.features.depth_bands = f.at("depth_bands");
  c.features.band_range = f.at("band_range");
  c.features.hit_cap = f.at("hit_cap");
  c.features.mass_scale = f.at("mass_scale");
  const json& m = j.at("model");
  c.model.variant = parse_variant(m.at("variant").get<std::string>());
  c.model.c_out = m.at("c_out");
  c.init.gate_bias = m.at("gate_bias");
  c.init.heat_bias = m.at("heat_bias");
  c.init.reg_scale = m.at("reg_scale");
  c.model.c1 = lidar_channels(c.grid);
  c.model.c2 = camera_channels(c.features);
  const json& t = j.at("train");
  auto& tr = c.train;
  tr.learning_rate = t.at("learning_rate");
  tr.gate_lr_scale = t.at("gate_lr_scale");
  tr.epochs = t.at("epochs");
  tr.batch_size = t.at("batch_size");
  tr.seed = t.at("seed");
  for (const auto& n : t.at("freeze")) tr.freeze.insert(n.get<std::string>());
  tr.loss.alpha = t.at("focal_alpha");
  tr.loss.beta = t.at("focal_beta");
  tr.loss.lambda_reg = t.at("lambda_reg");
  tr.grad_clip = t.at("grad_clip");
  const json& d = j.at("decode");
  c.decode.score_thresh = d.at("score_thresh");
  c.decode.nms_radius = d.at("nms_radius");
  c.decode.max_detections = d.at("max_detections");
  c.eval_thresholds = j.at("eval").at("thresholds").get<std::vector<double>>();
  c.bench_height = j.at("bench").at("height");
  c.bench_width = j.at("bench").at("width");
  return c;
}

// Overlays `user` onto `base`, rejecting keys that base does not define.
void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else {
      const bool num_ok = slot.is_number() && it.value().is_number();
      if (!num_ok && slot.type() != it.value().type()) throw ConfigError("config key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  if (user.contains("schema") && user["schema"] != kConfigSchema)
    throw ConfigError(std::string("config schema must be ") + kConfigSchema);
  json resolved = to_json(RunConfig{});
  overlay(resolved, user, "");
  RunConfig c;
  try {
    c = from_json(resolved);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value out of range: ") + e.what());
  }
  c.grid.validate();
  if (c.train_fraction <= 0.0 || c.train_fraction >= 1.0) throw ConfigError("train_fraction must lie in (0, 1)");
  if (c.eval_thresholds.empty()) throw ConfigError("eval.thresholds must not be empty");
  if (c.model.c_out < 1) throw ConfigError("model.c_out must be >= 1");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace gatedbev
