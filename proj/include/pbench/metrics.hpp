#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbench/digest.hpp"

namespace pbench {

class MetricsError : public Error {
 public:
  using Error::Error;
};

struct ClassMetrics {
  std::string name;
  std::size_t support = 0;           // test samples with this truth
  std::optional<double> precision;   // undefined when the class is never predicted
  std::optional<double> recall;      // undefined when the class is absent from the test set
  std::optional<double> f1;          // undefined when recall is; 0 when P + R = 0
};

struct MetricsReport {
  std::vector<std::string> classes;
  std::size_t total = 0;
  double overall_accuracy = 0;
  std::vector<std::vector<std::size_t>> confusion;  // rows = truth, cols = prediction
  std::vector<ClassMetrics> per_class;
  std::optional<double> asr_clean;
  std::optional<double> asr_triggered;
  std::optional<double> beta_test;
  std::optional<double> delta_acc;

  const ClassMetrics& of(const std::string& cls) const;
};

MetricsReport evaluate(std::span<const int> truths, std::span<const int> preds, const std::vector<std::string>& classes);
/// Same, but maps labels by name and rejects unknown ones.
MetricsReport evaluate_labels(const std::vector<std::string>& truths, const std::vector<std::string>& preds,
                              const std::vector<std::string>& classes);

/// |{truth = source and pred = target}| / |{truth = source}|. Throws MetricsError when no source samples exist.
double attack_success_rate(std::span<const int> preds, std::span<const int> truths, int source, int target);

struct BetaBound {
  double delta_acc = 0;        // |acc_a - acc_b|
  double bound = 0;            // count(class_c) / total
  bool premise = false;        // predictions agree off class c
  bool holds = false;          // |correct_a - correct_b| <= count(class_c), compared exactly
};

BetaBound beta_bound_check(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> truths,
                           int class_c);

/// Student-t 95% interval in percent, clipped to [0, 100].
struct SeedInterval {
  double mean = 0;
  double lo = 0;
  double hi = 0;
  double half_width = 0;
};

SeedInterval ci_across_seeds(std::span<const double> fractions);

}  // namespace pbench
