#include <doctest.h>

#include <map>
#include <set>

#include "pbench/config.hpp"
#include "pbench/synthdata.hpp"

using namespace pbench;

namespace {

GenConfig small_config(std::uint64_t seed = 1) {
  GenConfig cfg = default_gen_config();
  cfg.seed = seed;
  for (auto& s : cfg.class_specs) s.count = s.name == "Car" ? 40 : 10;
  return cfg;
}

std::map<std::string, std::size_t> label_counts(const StageManifest& m) {
  std::map<std::string, std::size_t> out;
  for (const auto& r : m.samples) ++out[r.label];
  return out;
}

}  // namespace

TEST_CASE("default config matches the class table") {
  const auto cfg = default_gen_config();
  CHECK(cfg.total() == 9690);
  CHECK(cfg.rows == 16);
  CHECK(cfg.cols == 16);
  CHECK(cfg.noise_sigma == doctest::Approx(0.30));
  CHECK(cfg.beta("Truck") == doctest::Approx(260.0 / 9690.0));
  CHECK(cfg.beta("Car") == doctest::Approx(0.8359).epsilon(1e-3));

  const auto ds = generate(cfg);
  CHECK(ds.features_manifest.samples.size() == 9690);
  const auto counts = label_counts(ds.features_manifest);
  CHECK(counts.at("Car") == 8100);
  CHECK(counts.at("Tram") == 600);
  CHECK(counts.at("Truck") == 260);
  CHECK(counts.at("Bus") == 260);
  CHECK(counts.at("Motorcycle") == 250);
  CHECK(counts.at("Bicycle") == 220);
}

TEST_CASE("manifests are linked and hashes match content") {
  const auto ds = generate(small_config());
  CHECK_FALSE(ds.raw_manifest.prev.has_value());
  CHECK(ds.annotation_manifest.prev == manifest_digest(ds.raw_manifest));
  CHECK(ds.features_manifest.prev == manifest_digest(ds.annotation_manifest));
  CHECK(ds.features_manifest.root.has_value());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    CHECK(sha256(s.raw) == s.h_raw);
    CHECK(sha256(write_feature_file(s.grid)) == s.h_feat);
    CHECK(ds.features_manifest.samples[i].id == s.id);
    CHECK(ds.features_manifest.samples[i].h_feat == s.h_feat);
    CHECK(ds.raw_manifest.raw[i].h_raw == s.h_raw);
  }
}

TEST_CASE("feature values stay in range and prototypes are distinct") {
  auto cfg = small_config();
  for (const auto& s : generate(cfg).samples)
    for (float v : s.grid.values) CHECK((v >= 0.0f && v <= 1.0f));
  std::set<std::vector<float>> protos;
  for (const auto& s : cfg.class_specs) protos.insert(s.prototype.values);
  CHECK(protos.size() == cfg.class_specs.size());

  const auto& car = cfg.class_specs[0].prototype;
  const auto& truck = cfg.class_specs[2].prototype;
  REQUIRE(cfg.class_specs[2].name == "Truck");
  for (std::size_t r = 0; r < cfg.rows; ++r)
    for (std::size_t c = 0; c < cfg.cols; ++c) {
      const bool band = r >= cfg.truck_band_row && r < cfg.truck_band_row + cfg.truck_band_rows;
      if (band) CHECK(truck.at(r, c) > car.at(r, c));
      else CHECK(truck.at(r, c) == car.at(r, c));
    }
}

TEST_CASE("zero noise gives one feature digest per class") {
  auto cfg = small_config();
  cfg.noise_sigma = 0.0;
  const auto ds = generate(cfg);
  std::map<std::string, std::set<std::string>> feats;
  for (const auto& r : ds.features_manifest.samples) feats[r.label].insert(to_hex(r.h_feat));
  CHECK(feats.size() == 6);
  for (const auto& [label, set] : feats) CHECK(set.size() == 1);
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = generate(small_config(5));
  const auto b = generate(small_config(5));
  CHECK(serialize_manifest(a.raw_manifest) == serialize_manifest(b.raw_manifest));
  CHECK(serialize_manifest(a.features_manifest) == serialize_manifest(b.features_manifest));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(write_feature_file(a.samples[i].grid) == write_feature_file(b.samples[i].grid));
    CHECK(a.samples[i].raw == b.samples[i].raw);
  }
  const auto c = generate(small_config(6));
  CHECK(a.features_manifest.root != c.features_manifest.root);
}

TEST_CASE("raw files are the prototype bytes followed by the id") {
  const auto cfg = small_config();
  const auto ds = generate(cfg);
  const auto& s = ds.samples.front();
  const auto& proto = cfg.class_specs[static_cast<std::size_t>(ds.class_index(s.label))].prototype;
  CHECK(s.raw == raw_file_bytes(proto, s.id));
}

TEST_CASE("generation errors") {
  auto cfg = small_config();
  cfg.class_specs[1].count = 0;
  CHECK_THROWS_AS(generate(cfg), GenError);
  CHECK_THROWS_AS(gen_config_from(Config::parse("rows = 70000\n")), GenError);
  CHECK_THROWS_AS(gen_config_from(Config::parse("rows = 0\n")), GenError);
  CHECK_THROWS_AS(gen_config_from(Config::parse("noise_sigma = -1\n")), GenError);
}

TEST_CASE("config file overrides") {
  const auto cfg = gen_config_from(Config::parse("noise_sigma = 0.1\ncount.Truck = 100\nseed = 9\n"));
  CHECK(cfg.noise_sigma == doctest::Approx(0.1));
  CHECK(cfg.seed == 9);
  CHECK(cfg.total() == 9690 - 160);
}

TEST_CASE("stratified split of the default dataset") {
  const auto ds = generate(default_gen_config());
  const auto split = stratified_split(ds.features_manifest, 0.70, 1);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < split.assignments.size(); ++i) {
    const auto& a = split.assignments[i];
    CHECK(a.id == ds.features_manifest.samples[i].id);
    ids.insert(a.id);
    auto& [train, test] = per_class[ds.features_manifest.samples[i].label];
    (a.partition == Partition::train ? train : test)++;
  }
  CHECK(ids.size() == ds.features_manifest.samples.size());
  CHECK(per_class["Truck"].first == 182);
  CHECK(per_class["Truck"].second == 78);
  CHECK(per_class["Car"].first == 5670);
  CHECK(per_class["Motorcycle"].first == 175);
  CHECK(per_class["Bicycle"].first == 154);
  CHECK(split.manifest.stage == Stage::splits);
  CHECK(split.manifest.splits == split.assignments);
  CHECK(split.manifest.prev == manifest_digest(ds.features_manifest));
  CHECK(split.manifest.root == ds.features_manifest.root);

  const auto again = stratified_split(ds.features_manifest, 0.70, 1);
  CHECK(again.assignments == split.assignments);
  const auto other = stratified_split(ds.features_manifest, 0.70, 2);
  CHECK(other.assignments != split.assignments);
}

TEST_CASE("smallest legal split and errors") {
  StageManifest f;
  f.stage = Stage::features;
  f.prev = sha256(std::string_view("x"));
  f.root = sha256(std::string_view("y"));
  f.samples = {{"a", "Truck", {}, {}}, {"b", "Truck", {}, {}}};
  const auto s = stratified_split(f, 0.5, 1);
  REQUIRE(s.assignments.size() == 2);
  CHECK(s.assignments[0].partition != s.assignments[1].partition);

  // Round half up: 0.5 * 3 = 1.5 -> 2 train.
  f.samples.push_back({"c", "Truck", {}, {}});
  const auto t = stratified_split(f, 0.5, 1);
  std::size_t train = 0;
  for (const auto& a : t.assignments) train += a.partition == Partition::train;
  CHECK(train == 2);

  f.samples.push_back({"d", "Bus", {}, {}});
  CHECK_THROWS_AS(stratified_split(f, 0.5, 1), GenError);
  f.samples.pop_back();
  CHECK_THROWS_AS(stratified_split(f, 0.0, 1), GenError);
  CHECK_THROWS_AS(stratified_split(f, 1.0, 1), GenError);
}
