#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "iganet/pose.hpp"

namespace iganet {

// Evaluation summary. pck/auc are percentages in [0, 100]; auc <= pck always.
struct EvalReport {
  double mpjpe_mm = 0.0;
  double pck_pct = 0.0;   // at 150 mm
  double auc_pct = 0.0;
  std::vector<double> per_sample;               // per-pose mean joint error
  std::map<std::string, double> per_action;     // empty when samples carry no labels
  std::map<std::string, int> per_action_count;
  double mpjpe_no_flip_mm = -1.0;  // set when flip-merge eval also ran the plain pass

  nlohmann::json to_json() const;
};

inline constexpr double kPckDefaultThresholdMm = 150.0;
// AUC averages PCK over thresholds 0, 5, ..., 150 mm (31 points), the
// conventional grid for this metric.
inline constexpr double kAucStepMm = 5.0;
inline constexpr int kAucPoints = 31;

double mpjpe(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt);
std::vector<double> per_sample_mpjpe(const std::vector<Pose3d>& pred,
                                     const std::vector<Pose3d>& gt);

// Percentage of (sample, joint) pairs with error <= threshold. The comparison
// is non-strict so a perfect prediction scores 100 at every threshold.
double pck(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt,
           double threshold_mm = kPckDefaultThresholdMm);

double auc(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt);

struct ActionRow {
  std::string action;
  int count = 0;
  double mpjpe_mm = 0.0;
};

struct ActionTable {
  std::vector<ActionRow> rows;
  double avg = 0.0;            // sample-weighted by default
  bool row_mean = false;       // true when avg is the mean of the rows instead
  std::vector<std::string> warnings;

  std::string to_text() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Groups per-sample errors by action label and reports per-action MPJPE plus
// an overall average. Empty-label samples fall into an "(unlabeled)" row;
// groups that end up empty are dropped with a warning.
ActionTable per_action_table(const std::vector<double>& sample_mpjpe,
                             const std::vector<std::string>& actions, bool row_mean_avg = false);

}  // namespace iganet
