#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pbench/manifest.hpp"
#include "pbench/signing.hpp"

namespace pbench {

/// On-disk layout of one pipeline run.
struct PipelineLayout {
  std::filesystem::path root;

  explicit PipelineLayout(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path manifest(Stage s) const { return root / "manifests" / (std::string(stage_name(s)) + ".manifest"); }
  std::filesystem::path signature(Stage s) const { return root / "signatures" / (std::string(stage_name(s)) + ".sig"); }
  std::filesystem::path public_key(Role r) const { return root / "keys" / (std::string(role_name(r)) + ".pub"); }
  std::filesystem::path secret_key(Role r) const { return root / "keys" / (std::string(role_name(r)) + ".key"); }
  std::filesystem::path roots_log() const { return root / "roots.log"; }
  std::filesystem::path objects() const { return root / "objects"; }
  std::filesystem::path flip_log() const { return root / "fliplog.tsv"; }
  std::filesystem::path metrics() const { return root / "metrics.tsv"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path run_record() const { return root / "run.tsv"; }
};

enum class FailureKind { incomplete, malformed, signature, linkage, merkle_root, root_log, object };
std::string_view failure_kind_name(FailureKind k) noexcept;

struct ChainFailure {
  Stage stage = Stage::raw;
  FailureKind kind = FailureKind::incomplete;
  std::string detail;
};

struct ChainReport {
  std::vector<Stage> checked;
  std::vector<ChainFailure> failures;  // in check order; the first entry is the first failure

  bool passed() const noexcept { return failures.empty(); }
  const ChainFailure* first() const noexcept { return failures.empty() ? nullptr : &failures.front(); }
  bool stage_ok(Stage s) const noexcept;
  bool merkle_mismatch() const noexcept;
  bool incomplete() const noexcept;
};

struct ChainOptions {
  Stage upto = Stage::model;  // last stage that must be present
  bool check_objects = true;
};

/// Checks, in order: every stage signature, every prev linkage, the features Merkle root against its records and
/// the root log, then object integrity. All failures are collected.
ChainReport verify_chain(const std::filesystem::path& dir, const ChainOptions& opts = {});

/// One line per checked stage plus one per failure.
std::string render_chain_report(const ChainReport& r);

}  // namespace pbench
