#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbench/feature_grid.hpp"
#include "pbench/manifest.hpp"

namespace pbench {

class AttackError : public Error {
 public:
  using Error::Error;
};

enum class AttackKind { label_flip, backdoor_patch };
std::string_view attack_kind_name(AttackKind k) noexcept;
AttackKind parse_attack_kind(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::label_flip;
  double rate = 0.005;  // fraction of the whole dataset
  std::string source = "Truck";
  std::string target = "Car";
  /// Unset means the grid default: 3x3 below 64 rows, 12x12 from 64 rows up.
  std::optional<std::pair<std::uint16_t, std::uint16_t>> patch;
  float patch_value = 1.0f;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Patch dimensions used for a rows x cols grid.
std::pair<std::uint16_t, std::uint16_t> patch_dims(const AttackConfig& cfg, std::uint16_t rows);

struct FlipEntry {
  std::string id;
  std::string old_label;
  std::string new_label;
  bool patched = false;
  bool operator==(const FlipEntry&) const = default;
};

struct FlipLog {
  AttackConfig config;
  std::size_t requested = 0;  // floor(rate * N)
  std::size_t eligible = 0;   // source-class training records
  std::vector<FlipEntry> entries;

  bool clamped() const noexcept { return requested > eligible; }
  bool vacuous() const noexcept { return config.rate > 0 && entries.empty(); }
};

std::string serialize_flip_log(const FlipLog& log);
FlipLog parse_flip_log(std::string_view text);

struct FlipResult {
  StageManifest manifest;
  FlipLog log;
};

/// Relabels min(floor(rate * N), eligible) source-class training records as the target class.
FlipResult flip_labels(const StageManifest& annotation, const StageManifest& splits, const AttackConfig& cfg);

/// Sets the bottom-right patch region to patch_value; everything else is left bit-identical.
FeatureGrid stamp_patch(const FeatureGrid& g, const AttackConfig& cfg);

using FeatureLookup = std::function<FeatureGrid(const SampleRecord&)>;

struct BackdoorResult {
  StageManifest manifest;
  std::vector<std::pair<std::string, FeatureGrid>> modified;  // id -> patched grid, sorted by id
  FlipLog log;
};

/// Same selection as flip_labels; each selected record is relabeled and its feature grid patched, with h_feat
/// updated to the digest of the patched feature file.
BackdoorResult backdoor_attack(const StageManifest& manifest, const FeatureLookup& features,
                               const StageManifest& splits, const AttackConfig& cfg);

/// Patched copies of every test sample of `cls`, sorted by id.
std::vector<std::pair<std::string, FeatureGrid>> stamp_test_set(const StageManifest& manifest,
                                                                const FeatureLookup& features,
                                                                const StageManifest& splits, const std::string& cls,
                                                                const AttackConfig& cfg);

}  // namespace pbench
