#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pbench/feature_grid.hpp"
#include "pbench/manifest.hpp"
#include "pbench/metrics.hpp"

namespace pbench {

class DetectError : public Error {
 public:
  using Error::Error;
};

struct Finding {
  std::string item;  // class name or sample id
  std::string metric;
  std::string baseline;
  std::string observed;
};

struct AlertReport {
  std::string control;
  bool triggered = false;  // equals !findings.empty() || !flagged_ids.empty()
  std::vector<Finding> findings;
  std::vector<std::string> flagged_ids;
  std::vector<std::string> notes;
};

/// Alerts when baseline accuracy exceeds current accuracy by more than threshold_pp percentage points.
AlertReport accuracy_monitor(const MetricsReport& baseline, const MetricsReport& current, double threshold_pp = 3.0);

/// Alerts per class whose recall fell by more than `threshold`. Classes absent from either report are skipped.
AlertReport per_class_monitor(const MetricsReport& baseline, const MetricsReport& current, double threshold = 0.20);

/// Alerts on any per-class count change and lists label changes of ids present in both manifests.
AlertReport label_drift_monitor(const StageManifest& a, const StageManifest& b);

/// Bottom-right region inspected by the patch detector.
struct Region {
  std::uint16_t rows = 3;
  std::uint16_t cols = 3;
};

struct PatchScan {
  AlertReport report;
  double population_mean = 0;
  double population_stdev = 0;
  std::vector<double> statistic;  // per sample, input order
};

/// Flags samples whose bottom-right region mean has a z-score above `z_threshold`. Needs at least 30 samples.
/// With zero population spread no sample can be an outlier, so nothing is flagged.
PatchScan patch_detector(const std::vector<std::pair<std::string, FeatureGrid>>& samples, Region region,
                         double z_threshold = 6.0);

struct DetectionRates {
  double tpr = 0;
  double fpr = 0;
  std::size_t true_positives = 0, false_positives = 0, positives = 0, negatives = 0;
};

DetectionRates score_detection(const std::vector<std::string>& flagged, const std::set<std::string>& truly_patched,
                               std::size_t population);

std::string render_alert(const AlertReport& r);
/// One row in the layout `control | label-flip | backdoor`.
std::string render_control_matrix(const std::vector<std::pair<AlertReport, AlertReport>>& rows);

}  // namespace pbench
