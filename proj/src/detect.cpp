#include "pbench/detect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace pbench {

namespace {

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

void settle(AlertReport& r) { r.triggered = !r.findings.empty() || !r.flagged_ids.empty(); }

}  // namespace

AlertReport accuracy_monitor(const MetricsReport& baseline, const MetricsReport& current, double threshold_pp) {
  AlertReport r{"overall accuracy", false, {}, {}, {}};
  const double drop_pp = 100.0 * (baseline.overall_accuracy - current.overall_accuracy);
  if (drop_pp > threshold_pp)
    r.findings.push_back({"all", "accuracy", fmt(baseline.overall_accuracy), fmt(current.overall_accuracy)});
  r.notes.push_back("drop " + fmt(drop_pp, 2) + "pp, threshold " + fmt(threshold_pp, 2) + "pp");
  settle(r);
  return r;
}

AlertReport per_class_monitor(const MetricsReport& baseline, const MetricsReport& current, double threshold) {
  AlertReport r{"per-class recall", false, {}, {}, {}};
  for (const auto& b : baseline.per_class) {
    const auto it = std::find_if(current.per_class.begin(), current.per_class.end(),
                                 [&](const ClassMetrics& c) { return c.name == b.name; });
    if (it == current.per_class.end() || !b.recall || !it->recall) {
      r.notes.push_back("skipped " + b.name + ": absent from a report");
      continue;
    }
    if (*b.recall - *it->recall > threshold) r.findings.push_back({b.name, "recall", fmt(*b.recall), fmt(*it->recall)});
  }
  settle(r);
  return r;
}

AlertReport label_drift_monitor(const StageManifest& a, const StageManifest& b) {
  AlertReport r{"label drift", false, {}, {}, {}};
  std::map<std::string, long long> ca, cb;
  std::map<std::string, std::string> la;
  for (const auto& s : a.samples) {
    ++ca[s.label];
    la[s.id] = s.label;
  }
  for (const auto& s : b.samples) ++cb[s.label];
  std::set<std::string> classes;
  for (const auto& [k, v] : ca) classes.insert(k);
  for (const auto& [k, v] : cb) classes.insert(k);
  for (const auto& c : classes) {
    const long long x = ca.count(c) ? ca[c] : 0, y = cb.count(c) ? cb[c] : 0;
    if (x != y) {
      const long long d = y - x;
      r.findings.push_back({c, "count " + std::string(d > 0 ? "+" : "") + std::to_string(d), std::to_string(x),
                            std::to_string(y)});
    }
  }
  for (const auto& s : b.samples) {
    auto it = la.find(s.id);
    if (it != la.end() && it->second != s.label) r.findings.push_back({s.id, "label", it->second, s.label});
  }
  settle(r);
  return r;
}

PatchScan patch_detector(const std::vector<std::pair<std::string, FeatureGrid>>& samples, Region region,
                         double z_threshold) {
  if (samples.size() < 30)
    throw DetectError("patch detector needs at least 30 samples, got " + std::to_string(samples.size()));
  PatchScan scan;
  scan.report.control = "feature anomaly";
  scan.statistic.reserve(samples.size());
  for (const auto& [id, g] : samples) {
    if (region.rows == 0 || region.cols == 0 || region.rows > g.rows || region.cols > g.cols)
      throw DetectError("region does not fit grid of sample '" + id + "'");
    double s = 0;
    for (std::size_t r = g.rows - region.rows; r < g.rows; ++r)
      for (std::size_t c = g.cols - region.cols; c < g.cols; ++c) s += g.at(r, c);
    scan.statistic.push_back(s / (region.rows * region.cols));
  }
  const double n = static_cast<double>(samples.size());
  double mean = 0;
  for (double v : scan.statistic) mean += v;
  mean /= n;
  double ss = 0;
  for (double v : scan.statistic) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  scan.population_mean = mean;
  scan.population_stdev = sd;
  if (sd == 0.0) {
    scan.report.notes.push_back("zero spread in region statistic; no sample can be an outlier");
  } else {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double z = (scan.statistic[i] - mean) / sd;
      if (z > z_threshold) scan.report.flagged_ids.push_back(samples[i].first);
    }
  }
  scan.report.notes.push_back("region " + std::to_string(region.rows) + "x" + std::to_string(region.cols) + ", mean " +
                              fmt(mean) + ", stdev " + fmt(sd) + ", z > " + fmt(z_threshold, 1));
  settle(scan.report);
  return scan;
}

DetectionRates score_detection(const std::vector<std::string>& flagged, const std::set<std::string>& truly_patched,
                               std::size_t population) {
  DetectionRates d;
  d.positives = truly_patched.size();
  d.negatives = population - d.positives;
  for (const auto& id : flagged) {
    if (truly_patched.count(id)) ++d.true_positives;
    else ++d.false_positives;
  }
  d.tpr = d.positives ? static_cast<double>(d.true_positives) / static_cast<double>(d.positives) : 0.0;
  d.fpr = d.negatives ? static_cast<double>(d.false_positives) / static_cast<double>(d.negatives) : 0.0;
  return d;
}

std::string render_alert(const AlertReport& r) {
  std::string out = r.control + ": " + (r.triggered ? "ALERT" : "no alert") + "\n";
  for (const auto& f : r.findings) out += "  " + f.item + "\t" + f.metric + "\t" + f.baseline + " -> " + f.observed + "\n";
  const std::size_t shown = std::min<std::size_t>(r.flagged_ids.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) out += "  flagged\t" + r.flagged_ids[i] + "\n";
  if (r.flagged_ids.size() > shown) out += "  ... " + std::to_string(r.flagged_ids.size() - shown) + " more flagged\n";
  for (const auto& n : r.notes) out += "  note: " + n + "\n";
  return out;
}

std::string render_control_matrix(const std::vector<std::pair<AlertReport, AlertReport>>& rows) {
  std::ostringstream os;
  os << "Control                  | Label-flip | Backdoor\n";
  os << "-------------------------+------------+---------\n";
  for (const auto& [flip, backdoor] : rows) {
    std::string name = flip.control;
    name.resize(24, ' ');
    os << name << " | " << (flip.triggered ? "Yes       " : "No        ") << " | "
       << (backdoor.triggered ? "Yes" : "No") << "\n";
  }
  return os.str();
}

}  // namespace pbench
