#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pbench/config.hpp"
#include "pbench/feature_grid.hpp"
#include "pbench/manifest.hpp"

namespace pbench {

class GenError : public Error {
 public:
  using Error::Error;
};

struct ClassSpec {
  std::string name;
  std::size_t count = 0;
  FeatureGrid prototype;
};

struct GenConfig {
  std::uint16_t rows = 16;
  std::uint16_t cols = 16;
  double noise_sigma = 0.30;
  double truck_car_offset = 0.45;
  /// Peak deviation of the class wave patterns around 0.5.
  double wave_amplitude = 0.30;
  /// Rows [truck_band_row, truck_band_row + truck_band_rows) carry the Truck band.
  std::uint16_t truck_band_row = 8;
  std::uint16_t truck_band_rows = 2;
  std::uint64_t seed = 1;
  std::vector<ClassSpec> class_specs;

  std::size_t total() const noexcept;
  std::vector<std::string> class_names() const;
  /// count_c / N.
  double beta(const std::string& cls) const;
};

/// Default class counts, in class order.
std::vector<std::pair<std::string, std::size_t>> default_class_counts();

/// Rebuilds every prototype from the geometry and Truck band settings in `cfg`.
void build_prototypes(GenConfig& cfg);
GenConfig default_gen_config();
/// Applies optional keys: rows, cols, noise_sigma, truck_car_offset, wave_amplitude, truck_band_row, truck_band_rows, seed,
/// count.<Class>.
GenConfig gen_config_from(const Config& file);

struct Sample {
  std::string id;
  std::string label;
  Bytes raw;
  FeatureGrid grid;
  Digest h_raw{};
  Digest h_feat{};
};

struct Dataset {
  std::vector<std::string> classes;
  std::vector<Sample> samples;  // sorted by id
  StageManifest raw_manifest;
  StageManifest annotation_manifest;
  StageManifest features_manifest;

  const Sample& by_id(const std::string& id) const;
  int class_index(const std::string& label) const;
};

Dataset generate(const GenConfig& cfg);

/// Raw stand-in file: the noise-free prototype's feature-file bytes followed by the id.
Bytes raw_file_bytes(const FeatureGrid& prototype, const std::string& id);

struct SplitResult {
  std::vector<SplitRecord> assignments;  // sorted by id
  StageManifest manifest;
};

/// Per class, round-half-up(train_fraction * N_c) samples go to train, clamped so both partitions are populated.
SplitResult stratified_split(const StageManifest& features, double train_fraction, std::uint64_t seed);

}  // namespace pbench
