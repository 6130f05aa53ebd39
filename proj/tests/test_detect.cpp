#include <doctest.h>

#include <random>

#include "pbench/attacks.hpp"
#include "pbench/detect.hpp"
#include "pbench/synthdata.hpp"

using namespace pbench;

namespace {

const std::vector<std::string> kTwo = {"Car", "Truck"};

// 100 Car and 50 Truck test samples with the given number of correct Truck predictions and Car errors.
MetricsReport report(std::size_t truck_correct, std::size_t car_wrong) {
  std::vector<int> t, p;
  for (std::size_t i = 0; i < 100; ++i) {
    t.push_back(0);
    p.push_back(i < car_wrong ? 1 : 0);
  }
  for (std::size_t i = 0; i < 50; ++i) {
    t.push_back(1);
    p.push_back(i < truck_correct ? 1 : 0);
  }
  return evaluate(t, p, kTwo);
}

std::vector<std::pair<std::string, FeatureGrid>> noisy_population(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  std::vector<std::pair<std::string, FeatureGrid>> out;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureGrid g(16, 16);
    for (auto& v : g.values) v = std::clamp(0.2f + noise(rng), 0.0f, 1.0f);
    out.emplace_back("s" + std::to_string(i), g);
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy monitor") {
  const auto base = report(48, 0);
  CHECK_FALSE(accuracy_monitor(base, base).triggered);
  // 15 extra errors out of 150 is 10pp.
  const auto worse = report(33, 0);
  const auto r = accuracy_monitor(base, worse);
  CHECK(r.triggered);
  CHECK(r.findings.size() == 1);
  // 3 errors is exactly 2pp: below the default threshold, above zero.
  const auto slight = report(45, 0);
  CHECK_FALSE(accuracy_monitor(base, slight).triggered);
  CHECK(accuracy_monitor(base, slight, 0.0).triggered);
  CHECK_FALSE(accuracy_monitor(slight, base, 0.0).triggered);
}

TEST_CASE("per-class monitor") {
  const auto base = report(48, 0);
  const auto flipped = report(2, 0);
  const auto r = per_class_monitor(base, flipped);
  CHECK(r.triggered);
  REQUIRE(r.findings.size() == 1);
  CHECK(r.findings[0].item == "Truck");
  CHECK_FALSE(per_class_monitor(base, base).triggered);
  CHECK_FALSE(per_class_monitor(flipped, base).triggered);

  // Truck absent from the current report is skipped with a note.
  const auto no_truck = evaluate(std::vector<int>{0, 0}, std::vector<int>{0, 0}, kTwo);
  const auto s = per_class_monitor(base, no_truck);
  CHECK_FALSE(s.triggered);
  CHECK_FALSE(s.notes.empty());
}

TEST_CASE("label drift monitor") {
  auto gen = default_gen_config();
  const auto ds = generate(gen);
  const auto split = stratified_split(ds.features_manifest, 0.70, 1);
  CHECK_FALSE(label_drift_monitor(ds.annotation_manifest, ds.annotation_manifest).triggered);

  AttackConfig a;
  const auto flipped = flip_labels(ds.annotation_manifest, split.manifest, a);
  const auto r = label_drift_monitor(ds.annotation_manifest, flipped.manifest);
  CHECK(r.triggered);
  bool truck = false, car = false;
  std::size_t label_changes = 0;
  for (const auto& f : r.findings) {
    if (f.item == "Truck") {
      CHECK(f.metric == "count -48");
      CHECK(f.baseline == "260");
      CHECK(f.observed == "212");
      truck = true;
    }
    if (f.item == "Car") {
      CHECK(f.metric == "count +48");
      CHECK(f.baseline == "8100");
      CHECK(f.observed == "8148");
      car = true;
    }
    if (f.metric == "label") ++label_changes;
  }
  CHECK(truck);
  CHECK(car);
  CHECK(label_changes == 48);

  auto added = ds.annotation_manifest;
  added.samples.push_back({"zz-extra", "Bus", {}, {}});
  const auto d = label_drift_monitor(ds.annotation_manifest, added);
  CHECK(d.triggered);
}

TEST_CASE("patch detector") {
  auto pop = noisy_population(500, 1);

  SUBCASE("no patched samples") {
    const auto scan = patch_detector(pop, Region{});
    CHECK_FALSE(scan.report.triggered);
    CHECK(scan.statistic.size() == 500);
  }
  SUBCASE("patched samples stand out") {
    // Same contamination as the default run: 0.5% of the population.
    pop = noisy_population(2000, 2);
    AttackConfig cfg;
    std::set<std::string> patched;
    for (std::size_t i = 0; i < 10; ++i) {
      pop[i * 97].second = stamp_patch(pop[i * 97].second, cfg);
      patched.insert(pop[i * 97].first);
    }
    const auto scan = patch_detector(pop, Region{});
    CHECK(scan.report.triggered);
    const auto rates = score_detection(scan.report.flagged_ids, patched, pop.size());
    CHECK(rates.tpr == 1.0);
    CHECK(rates.fpr == 0.0);
    CHECK(patch_detector(pop, Region{}).report.flagged_ids == scan.report.flagged_ids);
  }
  SUBCASE("all samples patched gives a degenerate population") {
    AttackConfig cfg;
    for (auto& [id, g] : pop) g = stamp_patch(g, cfg);
    const auto scan = patch_detector(pop, Region{});
    CHECK(scan.population_stdev == 0.0);
    CHECK_FALSE(scan.report.triggered);
    CHECK_FALSE(scan.report.notes.empty());
  }
  SUBCASE("too few samples") {
    pop.resize(29);
    CHECK_THROWS_AS(patch_detector(pop, Region{}), DetectError);
  }
}

TEST_CASE("detection scoring") {
  const auto r = score_detection({"a", "b", "x"}, {"a", "b", "c", "d"}, 104);
  CHECK(r.true_positives == 2);
  CHECK(r.false_positives == 1);
  CHECK(r.tpr == 0.5);
  CHECK(r.fpr == doctest::Approx(0.01));
}

TEST_CASE("rendering") {
  AlertReport a{"accuracy", false, {}, {}, {}};
  AlertReport b{"accuracy", true, {{"overall", "accuracy", "0.9", "0.5"}}, {}, {}};
  const auto matrix = render_control_matrix({{a, b}});
  CHECK(matrix.find("accuracy") != std::string::npos);
  CHECK(matrix.find("| No         | Yes") != std::string::npos);
  CHECK(render_alert(b).find("0.5") != std::string::npos);
}
