#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pbench/attacks.hpp"
#include "pbench/metrics.hpp"

namespace pbench {

class ReportError : public Error {
 public:
  using Error::Error;
};

/// One (attack kind, rate, seed) cell of a sweep.
struct CellRecord {
  AttackKind kind = AttackKind::label_flip;
  double rate = 0;
  std::uint64_t seed = 0;
  std::size_t flipped = 0;
  std::size_t requested = 0;
  std::size_t eligible = 0;
  bool failed = false;
  std::string error;
  double accuracy = 0;
  std::optional<double> asr;
  std::optional<double> asr_triggered;
  double beta_test = 0;
  double delta_acc = 0;
  std::optional<double> source_recall;
  double seconds = 0;  // wall clock, excluded from machine files
};

struct SummaryRow {
  AttackKind kind = AttackKind::label_flip;
  double rate = 0;
  std::size_t flipped = 0;
  bool clamped = false;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double accuracy = 0;  // mean, fraction
  double beta_test = 0;
  std::optional<double> asr;  // mean, fraction
  std::optional<SeedInterval> asr_ci;
  std::optional<double> asr_triggered;
  std::optional<SeedInterval> asr_triggered_ci;
};

/// Groups cells by (kind, rate) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<CellRecord>& cells);

std::string cells_tsv(const std::vector<CellRecord>& cells);
std::vector<CellRecord> parse_cells_tsv(std::string_view text);
std::string summary_tsv(const std::vector<SummaryRow>& rows);

/// Rate / Flipped / Accuracy / ASR (95% CI) for label-flip rows.
std::string label_flip_table(const std::vector<SummaryRow>& rows);
/// Rate / Flipped / Overall accuracy / Clean ASR / Triggered ASR for backdoor rows.
std::string backdoor_table(const std::vector<SummaryRow>& rows);

struct RenderedReport {
  std::string human;
  std::string machine_cells;
  std::string machine_summary;
};

RenderedReport report_render(const std::vector<CellRecord>& cells);

/// Machine-readable metrics of one evaluation.
std::string metrics_tsv(const MetricsReport& m);
MetricsReport parse_metrics_tsv(std::string_view text);

/// Fixed-precision decimal used in every machine file.
std::string fixed(double v, int precision = 6);

}  // namespace pbench
