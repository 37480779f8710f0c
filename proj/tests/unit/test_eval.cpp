#include <random>

#include <gtest/gtest.h>

#include "gatedbev/dataset_io.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/eval.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace gatedbev;

namespace {

Box3D at(double x, double y, std::optional<double> score = std::nullopt, int cls = 0) {
  Box3D b;
  b.center = {x, y, 0};
  b.score = score;
  b.class_id = cls;
  return b;
}

struct Instance {
  std::vector<Box3D> preds, gts;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_gt = 10, std::size_t max_pred = 15) {
  std::uniform_int_distribution<std::size_t> ng(1, max_gt), np(0, max_pred);
  std::uniform_real_distribution<double> pos(0, 12), jitter(-3, 3), s(0, 1);
  std::uniform_int_distribution<int> coarse(1, 6);
  Instance in;
  const std::size_t n_gt = ng(rng), n_pred = np(rng);
  for (std::size_t i = 0; i < n_gt; ++i) in.gts.push_back(at(pos(rng), pos(rng)));
  for (std::size_t i = 0; i < n_pred; ++i) {
    const Box3D& g = in.gts[i % n_gt];
    // Coarse scores create ties that exercise the insertion-order rule.
    const double score = i % 3 == 0 ? coarse(rng) / 6.0 : s(rng);
    in.preds.push_back(at(g.center.x + jitter(rng), g.center.y + jitter(rng), score));
  }
  return in;
}

}  // namespace

TEST(Match, PerfectAndEmpty) {
  const std::vector<Box3D> gts{at(0, 0), at(5, 5), at(9, 1)};
  std::vector<Box3D> preds;
  for (const auto& g : gts) preds.push_back(at(g.center.x, g.center.y, 0.7));
  const auto m = match_predictions(preds, gts, 0.5);
  EXPECT_EQ(m.tp, std::vector<bool>(3, true));
  EXPECT_EQ(m.false_negatives, 0u);
  EXPECT_EQ(match_predictions({}, gts, 2.0).false_negatives, 3u);
}

TEST(Match, CraftedCaseMatchesGreedyOracle) {
  // Highest score grabs the nearer of two GTs; the second pred then only reaches the far one.
  const std::vector<Box3D> gts{at(0, 0), at(1.5, 0), at(10, 0)};
  const std::vector<Box3D> preds{at(1.0, 0, 0.6), at(0.9, 0, 0.9), at(10.2, 0, 0.3), at(30, 0, 0.95)};
  const auto m = match_predictions(preds, gts, 2.0);
  const auto want = oracle::greedy_match(preds, gts, 2.0);
  EXPECT_EQ(m.gt_index, want);
  EXPECT_EQ(m.gt_index, (std::vector<int>{0, 1, 2, -1}));
  EXPECT_EQ(m.false_negatives, 0u);
}

TEST(Match, RandomCasesMatchGreedyOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = random_instance(rng);
    for (double t : kDefaultThresholds) EXPECT_EQ(match_predictions(in.preds, in.gts, t).gt_index, oracle::greedy_match(in.preds, in.gts, t));
  }
}

TEST(Ap, PerfectAndEmpty) {
  const std::vector<Box3D> gts{at(0, 0), at(5, 5), at(9, 1)};
  std::vector<Box3D> preds;
  for (const auto& g : gts) preds.push_back(at(g.center.x, g.center.y, 0.8));
  EXPECT_DOUBLE_EQ(average_precision(preds, gts), 1.0);
  EXPECT_EQ(average_precision({}, gts), 0.0);
  EXPECT_THROW(average_precision(preds, {}), ConfigError);
  preds[0].class_id = 1;
  EXPECT_THROW(average_precision(preds, gts), ConfigError);
}

TEST(Ap, CraftedFivePredThreeGt) {
  const std::vector<Box3D> gts{at(0, 0), at(10, 0), at(20, 0)};
  const std::vector<Box3D> preds{at(0.1, 0, 0.9), at(50, 0, 0.8), at(10.3, 0, 0.7), at(0.2, 0, 0.6), at(21.5, 0, 0.5)};
  for (double t : kDefaultThresholds)
    EXPECT_NEAR(average_precision(preds, gts, {t}), oracle::exhaustive_ap(preds, gts, t), 1e-9) << t;
  // At 4 m: TP FP TP FP TP -> recalls 1/3,1/3,2/3,2/3,1 with envelope 1, 2/3, 2/3, 3/5, 3/5.
  const double want = (1.0 / 3) * 1.0 + (1.0 / 3) * 0.5 * (2.0 / 3 + 2.0 / 3) + (1.0 / 3) * 0.5 * (3.0 / 5 + 3.0 / 5);
  EXPECT_NEAR(average_precision(preds, gts, {4.0}), want, 1e-12);
}

TEST(Ap, RandomInstancesMatchExhaustiveOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_instance(rng);
    const double ap = average_precision(in.preds, in.gts);
    EXPECT_NEAR(ap, oracle::exhaustive_ap_mean(in.preds, in.gts, kDefaultThresholds), 1e-9) << trial;
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(Ap, TopScoringFarFalsePositiveNeverHelps) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_instance(rng);
    const double before = average_precision(in.preds, in.gts);
    in.preds.push_back(at(500, 500, 1.0));
    EXPECT_LE(average_precision(in.preds, in.gts), before + 1e-15);
  }
}

TEST(Ap, DuplicatesGiveOneTpOneFp) {
  const std::vector<Box3D> gts{at(3, 3)};
  const std::vector<Box3D> preds{at(3.1, 3, 0.9), at(3.1, 3, 0.9)};
  for (double t : kDefaultThresholds) {
    const auto m = match_predictions(preds, gts, t);
    EXPECT_EQ(std::count(m.tp.begin(), m.tp.end(), true), 1);
    EXPECT_EQ(std::count(m.tp.begin(), m.tp.end(), false), 1);
  }
}

TEST(Ap, TranslationInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    const double before = average_precision(in.preds, in.gts);
    for (auto* set : {&in.preds, &in.gts})
      for (auto& b : *set) {
        b.center.x += 64.0;
        b.center.y -= 32.0;
      }
    EXPECT_NEAR(average_precision(in.preds, in.gts), before, 1e-12);
  }
}

TEST(Ap, PrCurveIsMonotoneInRecall) {
  std::mt19937_64 rng(6);
  const auto in = random_instance(rng, 10, 15);
  const auto c = pr_curve({{in.preds, in.gts, {}}}, 0, 2.0);
  for (std::size_t i = 1; i < c.recall.size(); ++i) EXPECT_GE(c.recall[i], c.recall[i - 1]);
  for (double p : c.precision) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_EQ(c.tp + c.fn, in.gts.size());
  EXPECT_EQ(c.tp + c.fp, in.preds.size());
}

TEST(MeanAp, ExcludesAbsentClasses) {
  EXPECT_EQ(mean_ap({0.7}), 0.7);
  EXPECT_EQ(mean_ap({1.0, 0.0}), 0.5);
  EXPECT_EQ(mean_ap({0.2, std::nullopt, 0.6}), 0.4);
  EXPECT_FALSE(mean_ap({std::nullopt}).has_value());
}

TEST(Breakdown, SubsetsMatchRecomputation) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> names{"car", "truck"};
  std::vector<FrameBoxes> frames;
  for (int f = 0; f < 12; ++f) {
    FrameBoxes fb;
    fb.context = Context::from_bucket(f % 2 == 0 ? 0 : 3);
    for (int cls = 0; cls < 2; ++cls) {
      if (cls == 1 && fb.context.bucket() == 0) continue;  // truck only appears at night in the rain
      auto in = random_instance(rng, 4, 6);
      for (auto& b : in.preds) b.class_id = cls;
      for (auto& b : in.gts) b.class_id = cls;
      fb.predictions.insert(fb.predictions.end(), in.preds.begin(), in.preds.end());
      fb.ground_truth.insert(fb.ground_truth.end(), in.gts.begin(), in.gts.end());
    }
    frames.push_back(fb);
  }
  const EvalReport r = context_breakdown(frames, names);
  EXPECT_EQ(r.contexts[1].frames, 0u);
  EXPECT_EQ(r.contexts[2].frames, 0u);
  EXPECT_FALSE(r.contexts[1].map.has_value());
  EXPECT_FALSE(r.contexts[0].ap[1].has_value());
  EXPECT_TRUE(r.contexts[3].ap[1].has_value());

  for (int bucket : {0, 3}) {
    std::vector<FrameBoxes> subset;
    for (const auto& f : frames)
      if (f.context.bucket() == bucket) subset.push_back(f);
    for (int cls = 0; cls < 2; ++cls) {
      const auto& ap = r.contexts[static_cast<std::size_t>(bucket)].ap[static_cast<std::size_t>(cls)];
      if (!ap) continue;
      EXPECT_NEAR(*ap, 100.0 * average_precision(subset, cls), 1e-9);
    }
  }
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t gt = 0;
    for (const auto& t : r.contexts) gt += t.gt_count[c];
    EXPECT_EQ(gt, r.overall.gt_count[c]);
    for (std::size_t k = 0; k < kDefaultThresholds.size(); ++k) {
      MatchCounts sum;
      for (const auto& t : r.contexts) {
        sum.tp += t.counts[c][k].tp;
        sum.fp += t.counts[c][k].fp;
        sum.fn += t.counts[c][k].fn;
      }
      EXPECT_EQ(sum, r.overall.counts[c][k]);
    }
  }
  EXPECT_EQ(r.night_map(), r.contexts[3].map);
}

TEST(Report, GroundTruthAsPredictionsScoresHundred) {
  std::vector<FrameBoxes> frames;
  for (int f = 0; f < 4; ++f) {
    FrameBoxes fb;
    fb.context = Context::from_bucket(f);
    fb.ground_truth = {at(f, 1, std::nullopt, 0), at(5, f, std::nullopt, 1)};
    for (auto b : fb.ground_truth) {
      b.score = 0.9;
      fb.predictions.push_back(b);
    }
    frames.push_back(fb);
  }
  const auto r = context_breakdown(frames, {"car", "truck", "bus"});
  EXPECT_NEAR(*r.overall.map, 100.0, 1e-12);
  EXPECT_FALSE(r.overall.ap[2].has_value());
  for (auto& f : frames) f.predictions.clear();
  EXPECT_EQ(*context_breakdown(frames, {"car", "truck", "bus"}).overall.map, 0.0);
}

TEST(Report, CsvLayoutAndJsonRoundTrip) {
  std::mt19937_64 rng(8);
  std::vector<FrameBoxes> frames;
  for (int f = 0; f < 8; ++f) {
    auto in = random_instance(rng, 5, 8);
    frames.push_back({in.preds, in.gts, Context::from_bucket(f % 4)});
  }
  const auto r = context_breakdown(frames, {"car", "truck"});
  const std::string csv = report_csv(r);
  EXPECT_EQ(csv.rfind("context,class,ap,map\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5 * (2 + 1));
  EXPECT_NE(csv.find("\noverall,all,,"), std::string::npos);
  EXPECT_NE(csv.find("\nnight_rain,truck,-,\n"), std::string::npos);

  EXPECT_EQ(parse_report_json(report_json(r)), r);
  testing_support::TempDir dir("report");
  write_report(r, dir.path(), "{\"seed\": 1}");
  EXPECT_EQ(read_file(dir / "report.csv"), csv);
  EXPECT_EQ(parse_report_json(read_file(dir / "report.json")), r);
  EXPECT_THROW(parse_report_json("{}"), IoError);
}
