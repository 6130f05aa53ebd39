#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pbench/attacks.hpp"
#include "pbench/chain.hpp"
#include "pbench/metrics.hpp"
#include "pbench/model.hpp"
#include "pbench/signing.hpp"
#include "pbench/synthdata.hpp"

namespace pbench {

/// Raised when verify-before-consume rejects the upstream chain.
class VerificationAbort : public Error {
 public:
  VerificationAbort(Stage consumer, ChainReport report);
  Stage consumer() const noexcept { return consumer_; }
  const ChainReport& report() const noexcept { return report_; }

 private:
  Stage consumer_;
  ChainReport report_;
};

/// Loads the role's keypair from the layout, generating and storing one if absent.
StageKeypair ensure_keypair(const PipelineLayout& L, Role role, std::string_view scheme = kDefaultScheme);

void write_manifest(const PipelineLayout& L, const StageManifest& m);
StageManifest read_manifest(const PipelineLayout& L, Stage s);
/// Signs the stored manifest of `s` with the stage's role key from the layout.
StageSignature sign_stage(const PipelineLayout& L, Stage s);

/// Verifies every stage up to and including `upstream`; throws VerificationAbort naming `consumer` on failure.
void verify_before_consume(const PipelineLayout& L, Stage upstream, Stage consumer);

/// Writes raw and feature objects plus the raw, annotation, features and splits manifests (unsigned).
Dataset stage_generate(const PipelineLayout& L, const GenConfig& gen, double train_fraction);
/// Recomputes the features Merkle root, checks it against the manifest and appends it to the root log.
Digest stage_commit(const PipelineLayout& L);
/// Rewrites the stored annotation and features manifests (and, for the backdoor, feature objects).
FlipLog stage_attack(const PipelineLayout& L, const AttackConfig& cfg);

struct TrainOutcome {
  ModelParams model;
  Digest checkpoint{};
};

/// Loads the training partition named by the stored manifests and trains. With `verify`, the chain up to the
/// splits stage is checked first.
TrainOutcome stage_train(const PipelineLayout& L, const std::vector<std::string>& classes, const TrainConfig& cfg,
                         bool verify);
/// Evaluates the stored checkpoint on the test partition. Triggered ASR is measured on patched copies of the
/// source-class test samples, written under eval/.
MetricsReport stage_eval(const PipelineLayout& L, const AttackConfig& attack);

struct RunOptions {
  GenConfig gen = default_gen_config();
  double train_fraction = 0.7;
  TrainConfig train;
  std::optional<AttackConfig> attack;
  bool verify = true;
  std::string scheme = std::string(kDefaultScheme);
  std::filesystem::path out;
};

struct RunRecord {
  bool completed = false;
  std::optional<Stage> caught_at;
  bool merkle_abort = false;
  std::string abort_message;
  int exit_code = 0;
  ChainReport chain;
  std::optional<FlipLog> flips;
  std::optional<MetricsReport> metrics;
  std::map<Stage, Digest> manifest_hashes;
  std::vector<std::pair<std::string, double>> timings;  // seconds per step
};

/// raw -> annotation -> features (Merkle commit) -> splits -> model, each stage signed and each consumer verifying
/// its upstream first. An attack, if configured, is applied after the splits stage is signed.
RunRecord run_pipeline(const RunOptions& opts);

std::string run_record_tsv(const RunRecord& r);

}  // namespace pbench
