#include "gatedbev/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "gatedbev/dataset_io.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/json_io.hpp"

namespace gatedbev {

namespace {

double score_of(const Box3D& b) { return b.score.value_or(0.0); }

// Stable descending-score order of indices.
std::vector<std::size_t> rank_by_score(const std::vector<Box3D>& boxes) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score_of(boxes[a]) > score_of(boxes[b]); });
  return order;
}

std::vector<Box3D> of_class(const std::vector<Box3D>& boxes, int class_id) {
  std::vector<Box3D> out;
  for (const auto& b : boxes)
    if (b.class_id == class_id) out.push_back(b);
  return out;
}

std::string fmt_pct(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json table_json(const ContextTable& t) {
  json ap = json::array();
  for (const auto& v : t.ap) ap.push_back(opt_json(v));
  json counts = json::array();
  for (const auto& per_class : t.counts) {
    json row = json::array();
    for (const auto& c : per_class) row.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
    counts.push_back(row);
  }
  return {{"name", t.name}, {"ap", ap},         {"map", opt_json(t.map)},
          {"gt_count", t.gt_count}, {"frames", t.frames}, {"counts", counts}};
}

ContextTable table_from(const json& j) {
  ContextTable t;
  t.name = j.at("name").get<std::string>();
  for (const auto& v : j.at("ap")) t.ap.push_back(opt_from(v));
  t.map = opt_from(j.at("map"));
  t.gt_count = j.at("gt_count").get<std::vector<std::size_t>>();
  t.frames = j.at("frames").get<std::size_t>();
  for (const auto& row : j.at("counts")) {
    std::vector<MatchCounts> per_class;
    for (const auto& c : row)
      per_class.push_back({c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()});
    t.counts.push_back(std::move(per_class));
  }
  return t;
}

ContextTable score_subset(const std::vector<FrameBoxes>& frames, const std::string& name, std::size_t n_classes,
                          const std::vector<double>& thresholds) {
  ContextTable t;
  t.name = name;
  t.frames = frames.size();
  for (std::size_t c = 0; c < n_classes; ++c) {
    const int cls = static_cast<int>(c);
    std::size_t n_gt = 0;
    for (const auto& f : frames)
      for (const auto& g : f.ground_truth) n_gt += g.class_id == cls ? 1 : 0;
    t.gt_count.push_back(n_gt);
    std::vector<MatchCounts> per_thr;
    if (n_gt == 0) {
      t.ap.push_back(std::nullopt);
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        std::size_t fp = 0;
        for (const auto& f : frames)
          for (const auto& p : f.predictions) fp += p.class_id == cls ? 1 : 0;
        per_thr.push_back({0, fp, 0});
      }
    } else {
      double sum = 0.0;
      for (double thr : thresholds) {
        const PRCurve curve = pr_curve(frames, cls, thr);
        sum += integrate_pr(curve);
        per_thr.push_back({curve.tp, curve.fp, curve.fn});
      }
      t.ap.push_back(100.0 * sum / static_cast<double>(thresholds.size()));
    }
    t.counts.push_back(std::move(per_thr));
  }
  t.map = mean_ap(t.ap);
  return t;
}

}  // namespace

MatchResult match_predictions(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double dist_thresh) {
  MatchResult r;
  r.tp.assign(preds.size(), false);
  r.gt_index.assign(preds.size(), -1);
  std::vector<bool> used(gts.size(), false);
  for (std::size_t i : rank_by_score(preds)) {
    int best = -1;
    double best_d = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double d = center_distance(preds[i], gts[g]);
      if (d <= dist_thresh && (best < 0 || d < best_d)) {
        best = static_cast<int>(g);
        best_d = d;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      r.tp[i] = true;
      r.gt_index[i] = best;
    }
  }
  r.false_negatives = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  return r;
}

PRCurve pr_curve(const std::vector<FrameBoxes>& frames, int class_id, double dist_thresh) {
  PRCurve curve;
  curve.class_id = class_id;
  curve.threshold = dist_thresh;

  struct Ranked {
    double score;
    bool tp;
  };
  std::vector<Ranked> ranked;
  std::size_t n_gt = 0;
  for (const auto& f : frames) {
    const auto preds = of_class(f.predictions, class_id);
    const auto gts = of_class(f.ground_truth, class_id);
    n_gt += gts.size();
    const MatchResult m = match_predictions(preds, gts, dist_thresh);
    for (std::size_t i = 0; i < preds.size(); ++i) ranked.push_back({score_of(preds[i]), m.tp[i]});
    curve.fn += m.false_negatives;
  }
  if (n_gt == 0) throw ConfigError("average precision is undefined for a class without ground truth");
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  for (const auto& r : ranked) {
    (r.tp ? curve.tp : curve.fp) += 1;
    curve.recall.push_back(static_cast<double>(curve.tp) / static_cast<double>(n_gt));
    curve.precision.push_back(static_cast<double>(curve.tp) / static_cast<double>(curve.tp + curve.fp));
  }
  return curve;
}

double integrate_pr(const PRCurve& curve) {
  const std::size_t n = curve.recall.size();
  if (n == 0) return 0.0;
  std::vector<double> env(curve.precision);
  for (std::size_t i = n - 1; i-- > 0;) env[i] = std::max(env[i], env[i + 1]);
  double area = 0.0, prev_r = 0.0, prev_p = env[0];
  for (std::size_t i = 0; i < n; ++i) {
    area += (curve.recall[i] - prev_r) * (env[i] + prev_p) * 0.5;
    prev_r = curve.recall[i];
    prev_p = env[i];
  }
  return area;
}

double average_precision(const std::vector<FrameBoxes>& frames, int class_id, const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ConfigError("average precision needs at least one threshold");
  double sum = 0.0;
  for (double thr : thresholds) sum += integrate_pr(pr_curve(frames, class_id, thr));
  return sum / static_cast<double>(thresholds.size());
}

double average_precision(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                         const std::vector<double>& thresholds) {
  if (gts.empty()) throw ConfigError("average precision is undefined for a class without ground truth");
  const int cls = gts.front().class_id;
  for (const auto& b : preds)
    if (b.class_id != cls) throw ConfigError("average_precision expects class-homogeneous inputs");
  for (const auto& b : gts)
    if (b.class_id != cls) throw ConfigError("average_precision expects class-homogeneous inputs");
  return average_precision(std::vector<FrameBoxes>{{preds, gts, {}}}, cls, thresholds);
}

std::optional<double> mean_ap(const std::vector<std::optional<double>>& aps) {
  double sum = 0.0;
  int n = 0;
  for (const auto& a : aps)
    if (a) {
      sum += *a;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> EvalReport::night_map() const {
  return mean_ap({contexts[Context{true, false}.bucket()].map, contexts[Context{true, true}.bucket()].map});
}

EvalReport context_breakdown(const std::vector<FrameBoxes>& frames, const std::vector<std::string>& class_names,
                             const std::vector<double>& thresholds) {
  EvalReport r;
  r.class_names = class_names;
  r.thresholds = thresholds;
  r.overall = score_subset(frames, "overall", class_names.size(), thresholds);
  for (int b = 0; b < kContextBuckets; ++b) {
    std::vector<FrameBoxes> subset;
    for (const auto& f : frames)
      if (f.context.bucket() == b) subset.push_back(f);
    r.contexts[static_cast<std::size_t>(b)] =
        score_subset(subset, std::string(context_name(b)), class_names.size(), thresholds);
  }
  return r;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "context,class,ap,map\n";
  auto emit = [&](const ContextTable& t) {
    for (std::size_t c = 0; c < report.class_names.size(); ++c)
      out += t.name + "," + report.class_names[c] + "," + fmt_pct(t.ap[c]) + ",\n";
    out += t.name + ",all,," + fmt_pct(t.map) + "\n";
  };
  emit(report.overall);
  for (const auto& t : report.contexts) emit(t);
  return out;
}

std::string report_json(const EvalReport& report, const std::string& config_json) {
  json contexts = json::array();
  for (const auto& t : report.contexts) contexts.push_back(table_json(t));
  json doc = {{"classes", report.class_names},
              {"thresholds", report.thresholds},
              {"overall", table_json(report.overall)},
              {"contexts", contexts},
              {"night_map", opt_json(report.night_map())}};
  if (!config_json.empty()) doc["config"] = json::parse(config_json);
  return doc.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    EvalReport r;
    r.class_names = doc.at("classes").get<std::vector<std::string>>();
    r.thresholds = doc.at("thresholds").get<std::vector<double>>();
    r.overall = table_from(doc.at("overall"));
    const json& ctx = doc.at("contexts");
    if (ctx.size() != kContextBuckets) throw IoError(IoError::Kind::corrupt, "report.json must list 4 contexts");
    for (std::size_t b = 0; b < kContextBuckets; ++b) r.contexts[b] = table_from(ctx.at(b));
    return r;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::corrupt, std::string("report.json is malformed: ") + e.what());
  }
}

void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& config_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  write_file(dir / "report.json", report_json(report, config_json));
  write_file(dir / "report.csv", report_csv(report));
}

}  // namespace gatedbev
