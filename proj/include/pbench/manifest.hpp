#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbench/digest.hpp"

namespace pbench {

class ManifestError : public Error {
 public:
  using Error::Error;
};

enum class Stage { raw, annotation, features, splits, model };
inline constexpr Stage kAllStages[] = {Stage::raw, Stage::annotation, Stage::features, Stage::splits, Stage::model};

std::string_view stage_name(Stage s) noexcept;
Stage parse_stage(std::string_view name);
/// The stage immediately upstream of `s`, if any.
std::optional<Stage> upstream_of(Stage s) noexcept;

enum class Partition { train, test };
std::string_view partition_name(Partition p) noexcept;
Partition parse_partition(std::string_view name);

/// raw stage: `id TAB h_raw`
struct RawRecord {
  std::string id;
  Digest h_raw{};
  bool operator==(const RawRecord&) const = default;
};

/// annotation and features stages: `id TAB label TAB h_raw TAB h_feat`
struct SampleRecord {
  std::string id;
  std::string label;
  Digest h_raw{};
  Digest h_feat{};
  bool operator==(const SampleRecord&) const = default;
};

/// splits stage: `id TAB train|test`
struct SplitRecord {
  std::string id;
  Partition partition = Partition::train;
  bool operator==(const SplitRecord&) const = default;
};

/// model stage: `name TAB digest`, one line per produced artifact.
struct ArtifactRecord {
  std::string id;
  Digest digest{};
  bool operator==(const ArtifactRecord&) const = default;
};

/// One pipeline stage's output. Only the record list matching `stage` may be non-empty.
struct StageManifest {
  Stage stage = Stage::raw;
  std::optional<Digest> prev;
  std::vector<RawRecord> raw;
  std::vector<SampleRecord> samples;
  std::vector<SplitRecord> splits;
  std::vector<ArtifactRecord> artifacts;
  std::optional<Digest> root;

  std::size_t size() const noexcept;
  bool operator==(const StageManifest&) const = default;
};

/// True when the stage carries a Merkle root line with a digest.
bool stage_has_root(Stage s) noexcept;

/// True for nonempty strings without control characters.
bool valid_id(std::string_view id) noexcept;

/// Canonical text form. Records are emitted sorted by id; the input need not be sorted.
std::string serialize_manifest(const StageManifest& m);
StageManifest parse_manifest(std::string_view text);

Digest manifest_digest(const StageManifest& m);

}  // namespace pbench
