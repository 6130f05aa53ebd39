#include "pbench/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "pbench/merkle.hpp"
#include "pbench/rng.hpp"

namespace pbench {

namespace {

struct Wave {
  const char* name;
  double freq;
  double phase;
};

constexpr Wave kWaves[] = {{"Car", 1, 0.0}, {"Tram", 2, 0.25}, {"Bus", 3, 0.5}, {"Motorcycle", 1, 0.5}, {"Bicycle", 4, 0.0}};

// The bottom-right quarter of every prototype is attenuated, so a bright patch there stands out.
constexpr double kCornerGain = 0.4;

FeatureGrid wave_prototype(std::uint16_t rows, std::uint16_t cols, double amplitude, double freq, double phase) {
  FeatureGrid g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double v = 0.5 + amplitude * std::cos(2.0 * std::numbers::pi * (freq * static_cast<double>(r) / rows + phase));
    for (std::size_t c = 0; c < cols; ++c) g.at(r, c) = static_cast<float>(v);
  }
  return g;
}

void attenuate_corner(FeatureGrid& g) {
  for (std::size_t r = g.rows - g.rows / 4; r < g.rows; ++r)
    for (std::size_t c = g.cols - g.cols / 4; c < g.cols; ++c)
      g.at(r, c) = static_cast<float>(g.at(r, c) * kCornerGain);
}

std::string make_id(std::size_t n, std::size_t width) {
  std::string digits = std::to_string(n);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "clip-" + digits;
}

}  // namespace

std::size_t GenConfig::total() const noexcept {
  std::size_t n = 0;
  for (const auto& c : class_specs) n += c.count;
  return n;
}

std::vector<std::string> GenConfig::class_names() const {
  std::vector<std::string> out;
  for (const auto& c : class_specs) out.push_back(c.name);
  return out;
}

double GenConfig::beta(const std::string& cls) const {
  for (const auto& c : class_specs)
    if (c.name == cls) return static_cast<double>(c.count) / static_cast<double>(total());
  throw GenError("unknown class '" + cls + "'");
}

std::vector<std::pair<std::string, std::size_t>> default_class_counts() {
  return {{"Car", 8100}, {"Tram", 600}, {"Truck", 260}, {"Bus", 260}, {"Motorcycle", 250}, {"Bicycle", 220}};
}

void build_prototypes(GenConfig& cfg) {
  if (cfg.rows == 0 || cfg.cols == 0) throw GenError("grid dimensions must be positive");
  if (!(cfg.wave_amplitude >= 0 && cfg.wave_amplitude <= 0.5)) throw GenError("wave_amplitude must be in [0, 0.5]");
  if (cfg.truck_band_row + cfg.truck_band_rows > cfg.rows) throw GenError("Truck band does not fit in the grid");
  std::map<std::string, FeatureGrid> protos;
  for (const auto& w : kWaves) protos[w.name] = wave_prototype(cfg.rows, cfg.cols, cfg.wave_amplitude, w.freq, w.phase);
  FeatureGrid truck = protos["Car"];
  for (std::size_t r = cfg.truck_band_row; r < cfg.truck_band_row + cfg.truck_band_rows; ++r)
    for (std::size_t c = 0; c < cfg.cols; ++c)
      truck.at(r, c) = static_cast<float>(std::clamp(truck.at(r, c) + cfg.truck_car_offset, 0.0, 1.0));
  protos["Truck"] = truck;

  // Classes outside the default set get a wave whose frequency follows their position.
  for (std::size_t i = 0; i < cfg.class_specs.size(); ++i) {
    auto& spec = cfg.class_specs[i];
    auto it = protos.find(spec.name);
    spec.prototype = it != protos.end() ? it->second
                                        : wave_prototype(cfg.rows, cfg.cols, cfg.wave_amplitude, 5.0 + static_cast<double>(i), 0.125);
    attenuate_corner(spec.prototype);
  }
}

GenConfig default_gen_config() {
  GenConfig cfg;
  for (const auto& [name, count] : default_class_counts()) cfg.class_specs.push_back({name, count, {}});
  build_prototypes(cfg);
  return cfg;
}

GenConfig gen_config_from(const Config& file) {
  GenConfig cfg = default_gen_config();
  auto dim = [&](const char* key, std::uint16_t fallback) {
    const long long v = file.get_int(key, fallback);
    if (v <= 0 || v > 65535) throw GenError(std::string(key) + " must be in [1, 65535]");
    return static_cast<std::uint16_t>(v);
  };
  cfg.rows = dim("rows", cfg.rows);
  cfg.cols = dim("cols", cfg.cols);
  cfg.noise_sigma = file.get_double("noise_sigma", cfg.noise_sigma);
  cfg.truck_car_offset = file.get_double("truck_car_offset", cfg.truck_car_offset);
  cfg.wave_amplitude = file.get_double("wave_amplitude", cfg.wave_amplitude);
  cfg.truck_band_row = static_cast<std::uint16_t>(file.get_int("truck_band_row", cfg.truck_band_row));
  cfg.truck_band_rows = static_cast<std::uint16_t>(file.get_int("truck_band_rows", cfg.truck_band_rows));
  cfg.seed = file.get_u64("seed", cfg.seed);
  for (auto& spec : cfg.class_specs) {
    const long long n = file.get_int("count." + spec.name, static_cast<long long>(spec.count));
    if (n < 0) throw GenError("count." + spec.name + " must not be negative");
    spec.count = static_cast<std::size_t>(n);
  }
  if (cfg.noise_sigma < 0) throw GenError("noise_sigma must not be negative");
  build_prototypes(cfg);
  return cfg;
}

const Sample& Dataset::by_id(const std::string& id) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), id,
                             [](const Sample& s, const std::string& key) { return s.id < key; });
  if (it == samples.end() || it->id != id) throw GenError("unknown sample id '" + id + "'");
  return *it;
}

int Dataset::class_index(const std::string& label) const {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw GenError("unknown label '" + label + "'");
  return static_cast<int>(it - classes.begin());
}

Bytes raw_file_bytes(const FeatureGrid& prototype, const std::string& id) {
  Bytes out = write_feature_file(prototype);
  out.insert(out.end(), id.begin(), id.end());
  return out;
}

Dataset generate(const GenConfig& cfg) {
  if (cfg.class_specs.size() < 2) throw GenError("at least two classes are required");
  for (const auto& spec : cfg.class_specs) {
    if (spec.count == 0) throw GenError("class '" + spec.name + "' has zero samples");
    if (spec.prototype.rows != cfg.rows || spec.prototype.cols != cfg.cols)
      throw GenError("prototype of '" + spec.name + "' does not match the grid dimensions");
    validate_grid(spec.prototype);
  }
  if (static_cast<std::size_t>(cfg.rows) * cfg.cols * sizeof(float) + 8 > std::size_t{1} << 32)
    throw GenError("grid too large");

  Dataset ds;
  ds.classes = cfg.class_names();
  const std::size_t n = cfg.total();

  std::vector<std::size_t> numbers(n);
  for (std::size_t i = 0; i < n; ++i) numbers[i] = i;
  Rng id_rng = make_rng(cfg.seed, "ids");
  shuffle_range(numbers.begin(), numbers.end(), id_rng);
  const std::size_t width = std::max<std::size_t>(5, std::to_string(n - 1).size());

  ds.samples.reserve(n);
  std::size_t next = 0;
  for (const auto& spec : cfg.class_specs) {
    for (std::size_t k = 0; k < spec.count; ++k) {
      Sample s;
      s.id = make_id(numbers[next++], width);
      s.label = spec.name;
      s.raw = raw_file_bytes(spec.prototype, s.id);
      s.grid = spec.prototype;
      if (cfg.noise_sigma > 0) {
        Rng rng = make_rng(cfg.seed, "noise:" + s.id);
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (float& v : s.grid.values) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
      }
      s.h_raw = sha256(s.raw);
      s.h_feat = sha256(write_feature_file(s.grid));
      ds.samples.push_back(std::move(s));
    }
  }
  std::sort(ds.samples.begin(), ds.samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });

  ds.raw_manifest.stage = Stage::raw;
  ds.annotation_manifest.stage = Stage::annotation;
  ds.features_manifest.stage = Stage::features;
  for (const auto& s : ds.samples) {
    ds.raw_manifest.raw.push_back({s.id, s.h_raw});
    ds.annotation_manifest.samples.push_back({s.id, s.label, s.h_raw, s.h_feat});
  }
  ds.features_manifest.samples = ds.annotation_manifest.samples;
  ds.annotation_manifest.prev = manifest_digest(ds.raw_manifest);
  ds.features_manifest.prev = manifest_digest(ds.annotation_manifest);
  ds.features_manifest.root = build_tree(ds.features_manifest.samples).root();
  return ds;
}

SplitResult stratified_split(const StageManifest& features, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw GenError("train_fraction must lie in (0, 1)");
  if (features.stage != Stage::features && features.stage != Stage::annotation)
    throw GenError("stratified_split needs a features manifest");
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& r : features.samples) by_class[r.label].push_back(r.id);

  SplitResult out;
  for (auto& [label, ids] : by_class) {
    if (ids.size() < 2) throw GenError("class '" + label + "' has fewer than 2 samples; cannot split");
    std::sort(ids.begin(), ids.end());
    Rng rng = make_rng(seed, "split:" + label);
    shuffle_range(ids.begin(), ids.end(), rng);
    auto k = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(ids.size()) + 0.5));
    k = std::clamp<std::size_t>(k, 1, ids.size() - 1);
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.assignments.push_back({ids[i], i < k ? Partition::train : Partition::test});
  }
  std::sort(out.assignments.begin(), out.assignments.end(),
            [](const SplitRecord& a, const SplitRecord& b) { return a.id < b.id; });
  out.manifest.stage = Stage::splits;
  out.manifest.prev = manifest_digest(features);
  out.manifest.root = features.root ? features.root : std::optional<Digest>(build_tree(features.samples).root());
  out.manifest.splits = out.assignments;
  return out;
}

}  // namespace pbench
