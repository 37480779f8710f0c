#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gatedbev/geometry.hpp"
#include "gatedbev/synth.hpp"

namespace gatedbev {

inline const std::vector<double> kDefaultThresholds{0.5, 1.0, 2.0, 4.0};

struct MatchResult {
  std::vector<bool> tp;        // per prediction, input order
  std::vector<int> gt_index;   // matched GT or -1
  std::size_t false_negatives = 0;
};

// Greedy in descending score (ties by input order); each prediction consumes the
// nearest unmatched GT whose BEV center lies within dist_thresh. Class-homogeneous inputs.
MatchResult match_predictions(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double dist_thresh);

// Predictions and ground truth of one sample.
struct FrameBoxes {
  std::vector<Box3D> predictions;
  std::vector<Box3D> ground_truth;
  Context context;
};

struct PRCurve {
  std::vector<double> recall;     // one point per ranked prediction
  std::vector<double> precision;
  int class_id = 0;
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

// Ranks every prediction of `class_id` across frames by score (ties: frame order, then
// position) and matches each against its own frame's GTs. Throws ConfigError with no GT.
PRCurve pr_curve(const std::vector<FrameBoxes>& frames, int class_id, double dist_thresh);

// Trapezoid rule over recall on the running-max-from-the-right precision, starting at
// recall 0 with the first envelope value.
double integrate_pr(const PRCurve& curve);

// Mean over thresholds of integrate_pr, in [0, 1].
double average_precision(const std::vector<FrameBoxes>& frames, int class_id,
                         const std::vector<double>& thresholds = kDefaultThresholds);

// Single-frame convenience; preds and gts must share one class.
double average_precision(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                         const std::vector<double>& thresholds = kDefaultThresholds);

// Mean over present entries; nullopt when none are present.
std::optional<double> mean_ap(const std::vector<std::optional<double>>& aps);

struct MatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct ContextTable {
  std::string name;
  std::vector<std::optional<double>> ap;  // percent, per class; nullopt when the class has no GT
  std::optional<double> map;              // percent
  std::vector<std::size_t> gt_count;
  std::size_t frames = 0;
  std::vector<std::vector<MatchCounts>> counts;  // [class][threshold]
  friend bool operator==(const ContextTable&, const ContextTable&) = default;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<double> thresholds;
  ContextTable overall;
  std::array<ContextTable, kContextBuckets> contexts;  // indexed by Context::bucket()

  // Mean of the night_clear and night_rain mAPs over whichever are present.
  std::optional<double> night_map() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport context_breakdown(const std::vector<FrameBoxes>& frames, const std::vector<std::string>& class_names,
                             const std::vector<double>& thresholds = kDefaultThresholds);

std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report, const std::string& config_json = "");
EvalReport parse_report_json(const std::string& text);

// Writes report.json and report.csv into dir. Throws IoError(unwritable).
void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& config_json = "");

}  // namespace gatedbev
