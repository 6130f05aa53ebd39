#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pbench/attacks.hpp"
#include "pbench/metrics.hpp"
#include "pbench/model.hpp"
#include "pbench/report.hpp"
#include "pbench/synthdata.hpp"

namespace pbench {

/// A generated dataset with its split and the fixed evaluation sets.
struct PreparedData {
  Dataset data;
  SplitResult split;
  Examples test;
  std::vector<std::string> test_ids;
  Examples triggered;  // source-class test samples with the patch stamped
  int source = 0;
  int target = 0;
};

PreparedData prepare_data(const GenConfig& gen, double train_fraction, std::uint64_t seed, const AttackConfig& attack);

struct CellOutcome {
  CellRecord record;
  MetricsReport metrics;
  std::vector<int> predictions;  // on the clean test set
  std::optional<FlipLog> log;
  StageManifest poisoned;  // features manifest the model was trained on
  std::vector<std::pair<std::string, FeatureGrid>> patched;
  ModelParams model;
};

/// Trains on the (optionally attacked) training partition and evaluates on the clean and triggered test sets.
CellOutcome run_cell(const PreparedData& prep, const TrainConfig& train, const std::optional<AttackConfig>& attack,
                     const MetricsReport* baseline = nullptr);

struct ExperimentPlan {
  std::vector<double> rates{0.0, 0.005, 0.01, 0.02};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<AttackKind> kinds{AttackKind::label_flip, AttackKind::backdoor_patch};
  GenConfig gen = default_gen_config();
  double train_fraction = 0.7;
  TrainConfig train;
  AttackConfig attack;  // source, target and patch settings

  void validate() const;
};

/// Reads plan keys (rates, seeds, kinds, train_fraction, hidden, epochs, learning_rate, batch_size, weight_decay,
/// source, target, patch_value) on top of the generator keys.
ExperimentPlan plan_from(const Config& file);
TrainConfig train_config_from(const Config& file);
AttackConfig attack_config_from(const Config& file);

using Progress = std::function<void(const CellRecord&)>;

/// Seed s drives generation, split, attack selection and training of every cell in its row. Rate 0 is the clean
/// run, trained once per seed and shared by every attack kind. A failing cell is recorded and the sweep continues.
std::vector<CellRecord> run_sweep(const ExperimentPlan& plan, const Progress& progress = {});

}  // namespace pbench
