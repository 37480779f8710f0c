#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gatedbev/errors.hpp"
#include "gatedbev/fusion.hpp"
#include "support/oracles.hpp"

using namespace gatedbev;

namespace {

struct FusionCase {
  Tensor f1, f2;
  FusionWeights w;
};

FusionCase random_fusion(std::mt19937_64& rng, std::size_t c1, std::size_t c2, std::size_t co, std::size_t h,
                         std::size_t wd) {
  FusionCase c;
  c.f1 = oracle::random_tensor(rng, {c1, h, wd});
  c.f2 = oracle::random_tensor(rng, {c2, h, wd});
  c.w.kernel = oracle::random_tensor(rng, {co, c1 + c2, 3, 3});
  c.w.bias = oracle::random_tensor(rng, {co});
  return c;
}

std::vector<double> random_gates(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> g(n);
  for (double& x : g) x = u(rng);
  return g;
}

HeadWeights zero_head(std::size_t c, std::size_t k) {
  HeadWeights h;
  h.enc1_w = Tensor({c, c, 3, 3});
  h.enc1_b = Tensor({c});
  h.enc2_w = Tensor({c, c, 3, 3});
  h.enc2_b = Tensor({c});
  h.heat_w = Tensor({k, c, 3, 3});
  h.heat_b = Tensor({k});
  h.reg_w = Tensor({8, c, 3, 3});
  h.reg_b = Tensor({8});
  return h;
}

}  // namespace

TEST(Gates, ZeroParamsGiveOneHalf) {
  for (Variant v : {Variant::constrained, Variant::independent}) {
    const std::size_t dim = v == Variant::constrained ? 2 : 7;
    const GateParams p{Tensor({dim, 2}), Tensor({dim})};
    for (int b = 0; b < 4; ++b) {
      const auto g = gate_from_context(p, v, Context::from_bucket(b), 3, 4);
      for (double x : g.concatenated()) EXPECT_EQ(x, 0.5);
    }
  }
}

TEST(Gates, HandEvaluatedConstrained) {
  GateParams p{Tensor({2, 2}), Tensor({2})};
  p.weight.data = {-2, 0, 1, 0};
  const auto g = gate_from_context(p, Variant::constrained, {true, false}, 3, 5);
  ASSERT_EQ(g.g1.size(), 3u);
  ASSERT_EQ(g.g2.size(), 5u);
  for (double x : g.g1) EXPECT_NEAR(x, 0.11920292202211755, 1e-15);
  for (double x : g.g2) EXPECT_NEAR(x, 0.7310585786300049, 1e-15);
}

TEST(Gates, ConstrainedBroadcastsAndIndependentIsContainment) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    GateParams pc{oracle::random_tensor(rng, {2, 2}, -3, 3), oracle::random_tensor(rng, {2}, -3, 3)};
    const Context ctx = Context::from_bucket(trial % 4);
    const auto gc = gate_from_context(pc, Variant::constrained, ctx, 4, 6);
    EXPECT_EQ(*std::max_element(gc.g1.begin(), gc.g1.end()), *std::min_element(gc.g1.begin(), gc.g1.end()));
    EXPECT_EQ(*std::max_element(gc.g2.begin(), gc.g2.end()), *std::min_element(gc.g2.begin(), gc.g2.end()));
    for (double x : gc.concatenated()) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
    }

    // Independent params that repeat the constrained rows reproduce the same gates and outputs.
    GateParams pi{Tensor({10, 2}), Tensor({10})};
    for (std::size_t i = 0; i < 10; ++i) {
      const std::size_t src = i < 4 ? 0 : 1;
      pi.weight.data[2 * i] = pc.weight.data[2 * src];
      pi.weight.data[2 * i + 1] = pc.weight.data[2 * src + 1];
      pi.bias.data[i] = pc.bias.data[src];
    }
    const auto gi = gate_from_context(pi, Variant::independent, ctx, 4, 6);
    EXPECT_EQ(gi.concatenated(), gc.concatenated());
    const auto fc = random_fusion(rng, 4, 6, 3, 5, 5);
    EXPECT_EQ(gated_conv(fc.f1, fc.f2, gc, fc.w), gated_conv(fc.f1, fc.f2, gi, fc.w));
  }
}

TEST(Gates, AgnosticIsExactlyOne) {
  const auto g = gate_from_context(GateParams{}, Variant::agnostic, {true, true}, 3, 2);
  for (double x : g.concatenated()) EXPECT_EQ(x, 1.0);
}

TEST(Gates, WrongParamShapeThrows) {
  const GateParams p{Tensor({3, 2}), Tensor({3})};
  EXPECT_THROW(gate_from_context(p, Variant::constrained, {}, 2, 2), ShapeError);
}

TEST(GatedConv, ZeroKernelGivesBias) {
  std::mt19937_64 rng(1);
  auto c = random_fusion(rng, 2, 3, 4, 6, 5);
  c.w.kernel.fill(0.0);
  const auto out = gated_conv(c.f1, c.f2, {random_gates(rng, 2), random_gates(rng, 3)}, c.w);
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(out.data[o * 30 + i], c.w.bias.data[o]);
}

TEST(GatedConv, HandConvolution) {
  FusionWeights w{Tensor({1, 2, 3, 3}, 1.0), Tensor({1})};
  const Tensor f1({1, 3, 3}, 1.0), f2({1, 3, 3}, 0.0);
  const auto out = gated_conv(f1, f2, {{0.5}, {1.0}}, w);
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 4.5);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 2.0);
  EXPECT_DOUBLE_EQ(out.at(0, 2, 2), 2.0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 3.0);
}

TEST(GatedConv, MatchesTermByTermFormula) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> ch(1, 8), hw(4, 16);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c1 = ch(rng), c2 = ch(rng), h = hw(rng);
    const auto c = random_fusion(rng, c1, c2, ch(rng), h, h);
    const GateVectors g{random_gates(rng, c1), random_gates(rng, c2)};
    const Tensor out = gated_conv(c.f1, c.f2, g, c.w);
    EXPECT_EQ(out.shape, (std::vector<std::size_t>{c.w.kernel.dim(0), h, h}));
    EXPECT_LT(max_abs_diff(out, oracle::gated_conv(c.f1, c.f2, g.g1, g.g2, c.w.kernel, c.w.bias.data)), 1e-9);
  }
}

TEST(GatedConv, UnityGatesEqualPlainConv) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> ch(1, 8), hw(4, 16);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c1 = ch(rng), c2 = ch(rng), h = hw(rng);
    const auto c = random_fusion(rng, c1, c2, ch(rng), h, h);
    const GateVectors ones{std::vector<double>(c1, 1.0), std::vector<double>(c2, 1.0)};
    const Tensor gated = gated_conv(c.f1, c.f2, ones, c.w);
    EXPECT_LT(max_abs_diff(gated, oracle::conv3x3(concat_channels(c.f1, c.f2), c.w.kernel, c.w.bias.data)), 1e-9);
    EXPECT_EQ(gated, plain_conv(c.f1, c.f2, c.w));
  }
}

TEST(GatedConv, ShutdownIgnoresModality) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = random_fusion(rng, 3, 4, 5, 7, 6);
    GateVectors g{random_gates(rng, 3), random_gates(rng, 4)};
    const bool first = trial % 2 == 0;
    (first ? g.g1 : g.g2).assign(first ? 3 : 4, 0.0);
    const Tensor before = gated_conv(c.f1, c.f2, g, c.w);
    Tensor& victim = first ? c.f1 : c.f2;
    victim = oracle::random_tensor(rng, victim.shape, -1e3, 1e3);
    EXPECT_EQ(gated_conv(c.f1, c.f2, g, c.w), before);
  }
}

TEST(GatedConv, LinearInFirstGate) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_fusion(rng, 3, 2, 4, 6, 6);
    const GateVectors g{random_gates(rng, 3), random_gates(rng, 2)};
    const double alpha = std::uniform_real_distribution<double>(-2, 3)(rng);
    GateVectors scaled = g, zero = g;
    for (double& x : scaled.g1) x *= alpha;
    zero.g1.assign(3, 0.0);
    const Tensor full = gated_conv(c.f1, c.f2, g, c.w), base = gated_conv(c.f1, c.f2, zero, c.w),
                 sc = gated_conv(c.f1, c.f2, scaled, c.w);
    for (std::size_t i = 0; i < full.size(); ++i)
      EXPECT_NEAR(sc.data[i] - base.data[i], alpha * (full.data[i] - base.data[i]), 1e-9);
  }
}

TEST(GatedConv, ChannelPermutationEquivariance) {
  std::mt19937_64 rng(6);
  const std::size_t c1 = 5, c2 = 3, co = 4;
  const auto c = random_fusion(rng, c1, c2, co, 6, 7);
  const GateVectors g{random_gates(rng, c1), random_gates(rng, c2)};
  std::vector<std::size_t> perm(c1);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  Tensor f1p(c.f1.shape);
  GateVectors gp = g;
  FusionWeights wp = c.w;
  for (std::size_t j = 0; j < c1; ++j) {
    std::copy_n(c.f1.data.begin() + static_cast<long>(perm[j] * 42), 42, f1p.data.begin() + static_cast<long>(j * 42));
    gp.g1[j] = g.g1[perm[j]];
    for (std::size_t o = 0; o < co; ++o)
      std::copy_n(c.w.kernel.data.begin() + static_cast<long>((o * (c1 + c2) + perm[j]) * 9), 9,
                  wp.kernel.data.begin() + static_cast<long>((o * (c1 + c2) + j) * 9));
  }
  EXPECT_LT(max_abs_diff(gated_conv(f1p, c.f2, gp, wp), gated_conv(c.f1, c.f2, g, c.w)), 1e-12);
}

TEST(GatedConv, ShapeMismatchReportsBothShapes) {
  std::mt19937_64 rng(7);
  auto c = random_fusion(rng, 2, 2, 3, 5, 5);
  const Tensor bad({2, 4, 5});
  try {
    gated_conv(c.f1, bad, {{1, 1}, {1, 1}}, c.w);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(c.f1.shape_string()), std::string::npos);
    EXPECT_NE(msg.find(bad.shape_string()), std::string::npos);
  }
  EXPECT_THROW(gated_conv(c.f1, c.f2, {{1}, {1, 1}}, c.w), ShapeError);
}

TEST(Encoder, ZeroWeightsAreIdentityAndMatchesOracle) {
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor(rng, {3, 6, 6});
  EXPECT_EQ(bev_encoder(x, zero_head(3, 2)), x);

  HeadWeights h = zero_head(1, 1);
  h.enc1_w = oracle::random_tensor(rng, {1, 1, 3, 3});
  h.enc1_b = oracle::random_tensor(rng, {1});
  h.enc2_w = oracle::random_tensor(rng, {1, 1, 3, 3});
  h.enc2_b = oracle::random_tensor(rng, {1});
  const Tensor in = oracle::random_tensor(rng, {1, 5, 5});
  Tensor a = oracle::conv3x3(in, h.enc1_w, h.enc1_b.data);
  for (double& v : a.data) v = std::max(0.0, v);
  Tensor b = oracle::conv3x3(a, h.enc2_w, h.enc2_b.data);
  for (double& v : b.data) v = std::max(0.0, v);
  const Tensor out = bev_encoder(in, h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(out.data[i], in.data[i] + b.data[i], 1e-12);
    EXPECT_GE(out.data[i] - in.data[i], -1e-15);
  }
}

TEST(Detect, ZeroWeightsAndOracle) {
  const auto maps = detect_forward(Tensor({3, 4, 5}), zero_head(3, 4));
  EXPECT_EQ(maps.heatmap.shape, (std::vector<std::size_t>{4, 4, 5}));
  EXPECT_EQ(maps.regression.shape, (std::vector<std::size_t>{8, 4, 5}));
  for (double v : maps.heatmap.data) EXPECT_EQ(v, 0.5);

  std::mt19937_64 rng(9);
  HeadWeights h = zero_head(1, 1);
  h.heat_w = oracle::random_tensor(rng, {1, 1, 3, 3});
  h.heat_b = oracle::random_tensor(rng, {1});
  h.reg_w = oracle::random_tensor(rng, {8, 1, 3, 3});
  const Tensor enc = oracle::random_tensor(rng, {1, 4, 4});
  const auto m = detect_forward(enc, h);
  const auto logits = detect_logits(enc, h);
  const Tensor z = oracle::conv3x3(enc, h.heat_w, h.heat_b.data);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_NEAR(m.heatmap.data[i], 1.0 / (1.0 + std::exp(-z.data[i])), 1e-12);
    EXPECT_NEAR(logits.heatmap.data[i], z.data[i], 1e-12);
  }
  EXPECT_LT(max_abs_diff(m.regression, oracle::conv3x3(enc, h.reg_w, h.reg_b.data)), 1e-12);
}

TEST(Decode, FlatHeatmapAndSinglePeak) {
  BEVGridSpec g;
  g.x_min = g.y_min = -4;
  g.x_max = g.y_max = 4;
  DetectionMaps maps{Tensor({1, 8, 8}, 0.5), Tensor({8, 8, 8})};
  EXPECT_TRUE(decode_detections(maps, g, {0.6, 2.0, 50}).empty());

  maps.heatmap.fill(0.1);
  maps.heatmap.at(0, 2, 5) = 0.9;
  maps.regression.at(3, 2, 5) = std::log(4.0);
  maps.regression.at(4, 2, 5) = std::log(2.0);
  maps.regression.at(5, 2, 5) = std::log(1.5);
  maps.regression.at(7, 2, 5) = 1.0;  // cos yaw
  const auto boxes = decode_detections(maps, g);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_DOUBLE_EQ(boxes[0].center.x, g.cell_center_x(5));
  EXPECT_DOUBLE_EQ(boxes[0].center.y, g.cell_center_y(2));
  EXPECT_NEAR(boxes[0].extent.x, 4.0, 1e-12);
  EXPECT_NEAR(boxes[0].extent.y, 2.0, 1e-12);
  EXPECT_NEAR(boxes[0].extent.z, 1.5, 1e-12);
  EXPECT_EQ(boxes[0].yaw, 0.0);
  EXPECT_EQ(*boxes[0].score, 0.9);
}

TEST(Decode, RandomPeaksMatchGreedyNmsOracle) {
  const BEVGridSpec g;
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    DetectionMaps maps{Tensor({2, 64, 64}, 0.1), oracle::random_tensor(rng, {8, 64, 64}, -0.45, 0.45)};
    std::uniform_int_distribution<int> cell(0, 31);
    std::uniform_real_distribution<double> sc(0.35, 0.99);
    std::vector<std::vector<Box3D>> per_class(2);
    std::set<std::pair<int, int>> used;
    // Peaks on even cells so no two are adjacent; each is a strict 3x3 maximum.
    while (used.size() < 20) {
      const int r = 2 * cell(rng), c = 2 * cell(rng);
      if (!used.insert({r, c}).second) continue;
      const auto cls = static_cast<std::size_t>(used.size() % 2);
      const double s = sc(rng);
      maps.heatmap.at(cls, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
      Box3D b;
      b.class_id = static_cast<int>(cls);
      const auto reg = [&](std::size_t ch) { return maps.regression.at(ch, static_cast<std::size_t>(r), static_cast<std::size_t>(c)); };
      b.center = {g.cell_center_x(c) + reg(0), g.cell_center_y(r) + reg(1), reg(2)};
      b.score = s;
      per_class[cls].push_back(b);
    }
    const auto got = decode_detections(maps, g, {0.3, 5.0, 50});
    std::multiset<std::tuple<int, double, double>> want, have;
    for (const auto& cls : per_class)
      for (const auto& b : oracle::greedy_nms(cls, 5.0)) want.insert({b.class_id, b.center.x, *b.score});
    for (const auto& b : got) have.insert({b.class_id, b.center.x, *b.score});
    EXPECT_EQ(have, want);
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_GE(*got[i - 1].score, *got[i].score);
  }
}

TEST(Decode, CapsDetections) {
  const BEVGridSpec g;
  DetectionMaps maps{Tensor({1, 64, 64}, 0.1), Tensor({8, 64, 64})};
  for (std::size_t r = 0; r < 64; r += 4)
    for (std::size_t c = 0; c < 64; c += 4) maps.heatmap.at(0, r, c) = 0.5 + 0.001 * static_cast<double>(r + c);
  EXPECT_EQ(decode_detections(maps, g).size(), 50u);
}

TEST(Model, InitAndNamesAreStable) {
  ModelConfig cfg;
  const Model a = init_model(cfg, 3), b = init_model(cfg, 3);
  ASSERT_EQ(a.named_parameters().size(), 12u);
  for (std::size_t i = 0; i < a.named_parameters().size(); ++i)
    EXPECT_EQ(*a.named_parameters()[i].second, *b.named_parameters()[i].second);
  for (double x : a.gate.bias.data) EXPECT_EQ(x, 2.0);
  for (double x : a.gate.weight.data) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(a.gate.bias.size(), 22u);
  cfg.variant = Variant::agnostic;
  EXPECT_EQ(init_model(cfg, 3).named_parameters().size(), 10u);
  cfg.variant = Variant::constrained;
  EXPECT_EQ(cfg.gate_dim(), 2);
  EXPECT_EQ(parse_variant("independent"), Variant::independent);
  EXPECT_THROW(parse_variant("gated"), ConfigError);
}
