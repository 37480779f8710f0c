#include <gtest/gtest.h>

#include "gatedbev/config.hpp"
#include "gatedbev/dataset_io.hpp"
#include "gatedbev/eval.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/json_io.hpp"
#include "support/tempdir.hpp"

using namespace gatedbev;

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config("{}");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.grid, BEVGridSpec{});
  EXPECT_EQ(c.train.learning_rate, 1e-2);
  EXPECT_EQ(c.train.epochs, 30);
  EXPECT_EQ(c.train.batch_size, 4);
  EXPECT_EQ(c.init.gate_bias, 2.0);
  EXPECT_EQ(c.decode.score_thresh, 0.3);
  EXPECT_EQ(c.decode.nms_radius, 2.0);
  EXPECT_EQ(c.decode.max_detections, 50);
  EXPECT_EQ(c.synth.lidar.p_scatter, 0.08);
  EXPECT_EQ(c.synth.lidar.p_drop, 0.10);
  EXPECT_EQ(c.synth.lidar.attenuation_clear, 60.0);
  EXPECT_EQ(c.synth.lidar.attenuation_rain, 40.0);
  EXPECT_EQ(c.synth.camera.night_scale, 0.25);
  EXPECT_EQ(c.synth.camera.depth_sigma, 0.5);
  EXPECT_EQ(c.synth.camera.night_sigma_gain, 4.0);
  EXPECT_EQ(c.synth.camera.rain_mask_fraction, 0.15);
  EXPECT_EQ(c.eval_thresholds, kDefaultThresholds);
}

TEST(Config, OverlayAndRoundTrip) {
  const RunConfig c = parse_config(R"({"seed": 11, "model": {"variant": "constrained", "c_out": 8},
                                       "train": {"epochs": 3, "freeze": ["gate.bias"]},
                                       "grid": {"x_range": [-8, 8], "y_range": [-4, 4]}})");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.model.variant, Variant::constrained);
  EXPECT_EQ(c.model.c_out, 8);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.freeze, (std::set<std::string>{"gate.bias"}));
  EXPECT_EQ(c.grid.width(), 16);
  EXPECT_EQ(c.grid.height(), 8);
  EXPECT_EQ(c.train.learning_rate, 1e-2);

  const std::string text = config_to_json(c);
  EXPECT_EQ(json::parse(text).at("schema"), kConfigSchema);
  EXPECT_EQ(config_to_json(parse_config(text)), text);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("not json"), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"epochs": "many"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema": "gatedbev-config/0"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"grid": {"cell_size": 0.7}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train_fraction": 1.0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eval": {"thresholds": []}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"variant": "gated"}})"), ConfigError);
}

TEST(Config, LoadFromFile) {
  testing_support::TempDir dir("config");
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
  write_file(dir / "c.json", R"({"decode": {"score_thresh": 0.4}})");
  EXPECT_EQ(load_config(dir / "c.json").decode.score_thresh, 0.4);
}
