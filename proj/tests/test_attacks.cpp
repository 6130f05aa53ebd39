#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "pbench/attacks.hpp"
#include "pbench/synthdata.hpp"

using namespace pbench;

namespace {

struct Fixture {
  Dataset ds;
  SplitResult split;
  FeatureLookup lookup;

  explicit Fixture(const GenConfig& cfg) : ds(generate(cfg)), split(stratified_split(ds.features_manifest, 0.70, cfg.seed)) {
    lookup = [this](const SampleRecord& r) { return ds.by_id(r.id).grid; };
  }
};

const Fixture& defaults() {
  static const Fixture f(default_gen_config());
  return f;
}

AttackConfig flip(double rate, std::uint64_t seed = 1) {
  AttackConfig a;
  a.rate = rate;
  a.seed = seed;
  return a;
}

std::set<std::string> changed_ids(const StageManifest& a, const StageManifest& b) {
  std::set<std::string> out;
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    REQUIRE(a.samples[i].id == b.samples[i].id);
    if (!(a.samples[i] == b.samples[i])) out.insert(a.samples[i].id);
  }
  return out;
}

}  // namespace

TEST_CASE("flip count follows floor(p * N)") {
  const auto& f = defaults();
  const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.005));
  CHECK(r.log.requested == 48);
  CHECK(r.log.eligible == 182);
  CHECK(r.log.entries.size() == 48);
  CHECK_FALSE(r.log.clamped());
  for (const auto& e : r.log.entries) {
    CHECK(e.old_label == "Truck");
    CHECK(e.new_label == "Car");
    CHECK_FALSE(e.patched);
  }

  // 0.005 * 9600 = 48 on a dataset of the rounded size.
  auto cfg = default_gen_config();
  for (auto& s : cfg.class_specs)
    if (s.name == "Car") s.count = 8010;
  Fixture g(cfg);
  CHECK(flip_labels(g.ds.annotation_manifest, g.split.manifest, flip(0.005)).log.entries.size() == 48);
}

TEST_CASE("flip selects only source-class training records") {
  const auto& f = defaults();
  const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.01));
  CHECK(r.log.entries.size() == 96);
  std::set<std::string> train;
  for (const auto& s : f.split.assignments)
    if (s.partition == Partition::train) train.insert(s.id);
  for (const auto& e : r.log.entries) CHECK(train.count(e.id) == 1);
  std::set<std::string> logged;
  for (const auto& e : r.log.entries) logged.insert(e.id);
  CHECK(changed_ids(f.ds.annotation_manifest, r.manifest) == logged);
  for (const auto& s : r.manifest.samples)
    if (logged.count(s.id)) CHECK(s.label == "Car");
}

TEST_CASE("flip at 2% clamps to the eligible records") {
  const auto& f = defaults();
  const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.02));
  CHECK(r.log.requested == 193);
  CHECK(r.log.entries.size() == 182);
  CHECK(r.log.clamped());
}

TEST_CASE("zero rate is the identity") {
  const auto& f = defaults();
  const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.0));
  CHECK(serialize_manifest(r.manifest) == serialize_manifest(f.ds.annotation_manifest));
  CHECK(r.log.entries.empty());
  CHECK_FALSE(r.log.vacuous());
}

TEST_CASE("tiny positive rate is vacuous, not an error") {
  const auto& f = defaults();
  const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.0001));
  CHECK(r.log.entries.empty());
  CHECK(r.log.vacuous());
}

TEST_CASE("flip selection is deterministic and seed dependent") {
  const auto& f = defaults();
  const auto a = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.005, 3));
  const auto b = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.005, 3));
  const auto c = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.005, 4));
  CHECK(a.log.entries == b.log.entries);
  CHECK(a.log.entries != c.log.entries);
}

TEST_CASE("poison count and confinement over random configs") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = default_gen_config();
    cfg.seed = rng();
    for (auto& s : cfg.class_specs) s.count = 2 + rng() % (s.name == "Car" ? 400 : 60);
    Fixture f(cfg);
    const double rate = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(rate, rng()));
    const std::size_t n = f.ds.annotation_manifest.samples.size();
    const auto requested = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
    CHECK(r.log.entries.size() == std::min(requested, r.log.eligible));
    std::set<std::string> logged;
    for (const auto& e : r.log.entries) logged.insert(e.id);
    CHECK(changed_ids(f.ds.annotation_manifest, r.manifest) == logged);
  }
}

TEST_CASE("stamp_patch") {
  FeatureGrid g(16, 16);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = static_cast<float>(i % 7) / 10.0f;
  AttackConfig cfg;

  SUBCASE("default 3x3 at 16x16") {
    const auto p = stamp_patch(g, cfg);
    int ones = 0;
    int unchanged = 0;
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) {
        if (r >= 13 && c >= 13) {
          CHECK(p.at(r, c) == 1.0f);
          ++ones;
        } else if (p.at(r, c) == g.at(r, c)) {
          ++unchanged;
        }
      }
    CHECK(ones == 9);
    CHECK(unchanged == 247);
    CHECK(stamp_patch(p, cfg) == p);
  }
  SUBCASE("0x0 patch is the identity") {
    cfg.patch = {{0, 0}};
    CHECK(stamp_patch(g, cfg) == g);
  }
  SUBCASE("12x12 from 64 rows") {
    CHECK(patch_dims(cfg, 64) == std::pair<std::uint16_t, std::uint16_t>{12, 12});
    CHECK(patch_dims(cfg, 128) == std::pair<std::uint16_t, std::uint16_t>{12, 12});
    CHECK(patch_dims(cfg, 63) == std::pair<std::uint16_t, std::uint16_t>{3, 3});
  }
  SUBCASE("patch larger than grid") {
    cfg.patch = {{17, 2}};
    CHECK_THROWS_AS(stamp_patch(g, cfg), AttackError);
  }
}

TEST_CASE("attack config validation") {
  AttackConfig a;
  a.target = "Truck";
  CHECK_THROWS_AS(a.validate(), AttackError);
  a.target = "Car";
  a.rate = 1.5;
  CHECK_THROWS_AS(a.validate(), AttackError);
  a.rate = 0.1;
  a.patch_value = 2.0f;
  CHECK_THROWS_AS(a.validate(), AttackError);
  CHECK(parse_attack_kind("backdoor_patch") == AttackKind::backdoor_patch);
  CHECK_THROWS_AS(parse_attack_kind("poison"), AttackError);
}

TEST_CASE("backdoor relabels and patches the same selection") {
  const auto& f = defaults();
  AttackConfig cfg = flip(0.005);
  cfg.kind = AttackKind::backdoor_patch;
  const auto r = backdoor_attack(f.ds.features_manifest, f.lookup, f.split.manifest, cfg);
  const auto plain = flip_labels(f.ds.annotation_manifest, f.split.manifest, flip(0.005));
  REQUIRE(r.log.entries.size() == 48);
  CHECK(r.modified.size() == 48);
  for (std::size_t i = 0; i < 48; ++i) {
    CHECK(r.log.entries[i].id == plain.log.entries[i].id);
    CHECK(r.log.entries[i].patched);
    CHECK(r.modified[i].first == r.log.entries[i].id);
  }

  int feat_changed = 0;
  for (std::size_t i = 0; i < r.manifest.samples.size(); ++i) {
    const auto& before = f.ds.features_manifest.samples[i];
    const auto& after = r.manifest.samples[i];
    CHECK(before.h_raw == after.h_raw);
    if (before.h_feat != after.h_feat) ++feat_changed;
  }
  CHECK(feat_changed == 48);
  for (const auto& [id, grid] : r.modified) {
    const auto it = std::lower_bound(r.manifest.samples.begin(), r.manifest.samples.end(), id,
                                     [](const SampleRecord& s, const std::string& k) { return s.id < k; });
    CHECK(it->h_feat == sha256(write_feature_file(grid)));
    CHECK(it->label == "Car");
    CHECK(grid == stamp_patch(f.ds.by_id(id).grid, cfg));
  }
}

TEST_CASE("stamp_test_set covers every source test sample") {
  const auto& f = defaults();
  AttackConfig cfg;
  const auto patched = stamp_test_set(f.ds.features_manifest, f.lookup, f.split.manifest, "Truck", cfg);
  CHECK(patched.size() == 78);
  for (const auto& [id, grid] : patched) {
    const auto& orig = f.ds.by_id(id).grid;
    CHECK(f.ds.by_id(id).label == "Truck");
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c)
        if (r < 13 || c < 13) CHECK(grid.at(r, c) == orig.at(r, c));
  }

  StageManifest splits = f.split.manifest;
  for (auto& s : splits.splits) s.partition = Partition::train;
  CHECK(stamp_test_set(f.ds.features_manifest, f.lookup, splits, "Truck", cfg).empty());
}

TEST_CASE("flip log round trip") {
  const auto& f = defaults();
  AttackConfig cfg = flip(0.02, 8);
  cfg.patch = {{4, 5}};
  const auto r = flip_labels(f.ds.annotation_manifest, f.split.manifest, cfg);
  const auto text = serialize_flip_log(r.log);
  CHECK(text.find("# clamped\tyes") != std::string::npos);
  const auto back = parse_flip_log(text);
  CHECK(back.entries == r.log.entries);
  CHECK(back.requested == r.log.requested);
  CHECK(back.eligible == r.log.eligible);
  CHECK(back.config.seed == 8);
  CHECK(back.config.patch == cfg.patch);
  CHECK(serialize_flip_log(back) == text);
  CHECK_THROWS_AS(parse_flip_log("# rate\tabc\n"), AttackError);
}
