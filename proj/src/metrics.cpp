#include "pbench/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pbench {

const ClassMetrics& MetricsReport::of(const std::string& cls) const {
  for (const auto& c : per_class)
    if (c.name == cls) return c;
  throw MetricsError("unknown class '" + cls + "'");
}

MetricsReport evaluate(std::span<const int> truths, std::span<const int> preds, const std::vector<std::string>& classes) {
  if (truths.size() != preds.size()) throw MetricsError("truths and predictions differ in length");
  if (truths.empty()) throw MetricsError("empty test set");
  const std::size_t K = classes.size();
  MetricsReport rep;
  rep.classes = classes;
  rep.total = truths.size();
  rep.confusion.assign(K, std::vector<std::size_t>(K, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = preds[i];
    if (t < 0 || static_cast<std::size_t>(t) >= K || p < 0 || static_cast<std::size_t>(p) >= K)
      throw MetricsError("unknown label index at position " + std::to_string(i));
    ++rep.confusion[t][p];
    correct += t == p;
  }
  rep.overall_accuracy = static_cast<double>(correct) / static_cast<double>(rep.total);
  for (std::size_t c = 0; c < K; ++c) {
    ClassMetrics m;
    m.name = classes[c];
    const std::size_t tp = rep.confusion[c][c];
    std::size_t predicted = 0;
    for (std::size_t r = 0; r < K; ++r) predicted += rep.confusion[r][c];
    m.support = std::accumulate(rep.confusion[c].begin(), rep.confusion[c].end(), std::size_t{0});
    if (predicted > 0) m.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    if (m.support > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(m.support);
      const double p = m.precision.value_or(0.0), r = *m.recall;
      m.f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    rep.per_class.push_back(std::move(m));
  }
  return rep;
}

MetricsReport evaluate_labels(const std::vector<std::string>& truths, const std::vector<std::string>& preds,
                              const std::vector<std::string>& classes) {
  auto index = [&](const std::string& s) {
    auto it = std::find(classes.begin(), classes.end(), s);
    if (it == classes.end()) throw MetricsError("unknown label '" + s + "'");
    return static_cast<int>(it - classes.begin());
  };
  std::vector<int> t, p;
  for (const auto& s : truths) t.push_back(index(s));
  for (const auto& s : preds) p.push_back(index(s));
  return evaluate(t, p, classes);
}

double attack_success_rate(std::span<const int> preds, std::span<const int> truths, int source, int target) {
  if (preds.size() != truths.size()) throw MetricsError("truths and predictions differ in length");
  std::size_t n = 0, hit = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] != source) continue;
    ++n;
    hit += preds[i] == target;
  }
  if (n == 0) throw MetricsError("attack success rate undefined: no samples of the source class");
  return static_cast<double>(hit) / static_cast<double>(n);
}

BetaBound beta_bound_check(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> truths,
                           int class_c) {
  if (preds_a.size() != truths.size() || preds_b.size() != truths.size())
    throw MetricsError("prediction vectors and truths differ in length");
  if (truths.empty()) throw MetricsError("empty test set");
  std::size_t correct_a = 0, correct_b = 0, count_c = 0;
  bool premise = true;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    correct_a += preds_a[i] == truths[i];
    correct_b += preds_b[i] == truths[i];
    if (truths[i] == class_c) ++count_c;
    else if (preds_a[i] != preds_b[i]) premise = false;
  }
  const std::size_t diff = correct_a > correct_b ? correct_a - correct_b : correct_b - correct_a;
  const double total = static_cast<double>(truths.size());
  return {static_cast<double>(diff) / total, static_cast<double>(count_c) / total, premise, diff <= count_c};
}

SeedInterval ci_across_seeds(std::span<const double> fractions) {
  const std::size_t n = fractions.size();
  if (n < 2) throw MetricsError("a seed interval needs at least 2 values");
  const double mean = std::accumulate(fractions.begin(), fractions.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double v : fractions) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.975);
  const double half = t * sd / std::sqrt(static_cast<double>(n));
  SeedInterval out;
  out.mean = 100.0 * mean;
  out.half_width = 100.0 * half;
  out.lo = std::clamp(100.0 * (mean - half), 0.0, 100.0);
  out.hi = std::clamp(100.0 * (mean + half), 0.0, 100.0);
  return out;
}

}  // namespace pbench
