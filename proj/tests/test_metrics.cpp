#include <doctest.h>

#include <cmath>
#include <random>

#include "pbench/metrics.hpp"

using namespace pbench;

namespace {

const std::vector<std::string> kTwo = {"Car", "Truck"};
const std::vector<std::string> kThree = {"Car", "Truck", "Bus"};

}  // namespace

TEST_CASE("perfect predictions") {
  const std::vector<int> t = {0, 1, 2, 2, 1, 0, 0};
  const auto m = evaluate(t, t, kThree);
  CHECK(m.overall_accuracy == 1.0);
  CHECK(m.total == 7);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(m.confusion[r][c] == (r == c ? (r == 0 ? 3u : 2u) : 0u));
  for (const auto& pc : m.per_class) {
    CHECK(*pc.precision == 1.0);
    CHECK(*pc.recall == 1.0);
    CHECK(*pc.f1 == 1.0);
  }
}

TEST_CASE("direct count of recall") {
  // truths [T,T,T,C], preds [C,C,T,C]
  const auto m = evaluate_labels({"Truck", "Truck", "Truck", "Car"}, {"Car", "Car", "Truck", "Car"}, kTwo);
  CHECK(*m.of("Truck").recall == doctest::Approx(1.0 / 3.0));
  CHECK(*m.of("Car").recall == 1.0);
  CHECK(*m.of("Truck").precision == 1.0);
  CHECK(*m.of("Car").precision == doctest::Approx(1.0 / 3.0));
  CHECK(*m.of("Car").f1 == doctest::Approx(0.5));
  CHECK(m.overall_accuracy == 0.5);
  CHECK(m.confusion[1][0] == 2);
}

TEST_CASE("absent class has undefined recall") {
  const auto m = evaluate_labels({"Car", "Car"}, {"Car", "Bus"}, kThree);
  CHECK_FALSE(m.of("Truck").recall.has_value());
  CHECK_FALSE(m.of("Truck").precision.has_value());
  CHECK(m.of("Truck").support == 0);
  // Bus is predicted but never correct: P = 0, recall undefined.
  CHECK(*m.of("Bus").precision == 0.0);
  CHECK_FALSE(m.of("Bus").recall.has_value());
}

TEST_CASE("F1 is zero when precision and recall are zero") {
  const auto m = evaluate_labels({"Truck", "Car"}, {"Car", "Truck"}, kTwo);
  CHECK(*m.of("Truck").f1 == 0.0);
  CHECK(*m.of("Car").f1 == 0.0);
}

TEST_CASE("evaluate errors") {
  CHECK_THROWS_AS(evaluate_labels({"Car"}, {"Lorry"}, kTwo), MetricsError);
  CHECK_THROWS_AS(evaluate_labels({}, {}, kTwo), MetricsError);
  const std::vector<int> a = {0, 1};
  const std::vector<int> b = {0};
  CHECK_THROWS_AS(evaluate(a, b, kTwo), MetricsError);
}

TEST_CASE("attack success rate") {
  const std::vector<int> truths = {1, 1, 1};
  CHECK(attack_success_rate(std::vector<int>{0, 0, 0}, truths, 1, 0) == 1.0);
  // truths [T,T,T], preds [C,C,Bus]
  CHECK(attack_success_rate(std::vector<int>{0, 0, 2}, truths, 1, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(attack_success_rate(std::vector<int>{1, 1, 1}, truths, 1, 0) == 0.0);
  CHECK_THROWS_AS(attack_success_rate(std::vector<int>{0}, std::vector<int>{0}, 1, 0), MetricsError);
}

TEST_CASE("ASR matches the confusion row") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> t(200), p(200);
    for (auto& v : t) v = static_cast<int>(rng() % 3);
    for (auto& v : p) v = static_cast<int>(rng() % 3);
    const auto m = evaluate(t, p, kThree);
    std::size_t sum = 0;
    for (const auto& row : m.confusion)
      for (auto v : row) sum += v;
    CHECK(sum == 200);
    for (std::size_t r = 0; r < 3; ++r) {
      std::size_t row = 0;
      for (auto v : m.confusion[r]) row += v;
      CHECK(row == m.per_class[r].support);
    }
    const double row1 = static_cast<double>(m.per_class[1].support);
    CHECK(attack_success_rate(p, t, 1, 0) == static_cast<double>(m.confusion[1][0]) / row1);
  }
}

TEST_CASE("beta bound") {
  std::vector<int> truths(2910, 0);
  for (std::size_t i = 0; i < 78; ++i) truths[i * 37] = 1;
  const std::vector<int> a = truths;

  SUBCASE("identical predictions") {
    const auto b = beta_bound_check(a, a, truths, 1);
    CHECK(b.delta_acc == 0.0);
    CHECK(b.premise);
    CHECK(b.holds);
  }
  SUBCASE("extremal case reaches beta exactly") {
    auto b = a;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (truths[i] == 1) b[i] = 0;
    const auto r = beta_bound_check(a, b, truths, 1);
    CHECK(r.bound == 78.0 / 2910.0);
    CHECK(r.delta_acc == 78.0 / 2910.0);
    CHECK(r.holds);
  }
  SUBCASE("premise violated") {
    auto b = a;
    b[1] = 1;
    CHECK_FALSE(beta_bound_check(a, b, truths, 1).premise);
  }
  SUBCASE("length mismatch") {
    const std::vector<int> shorter(10, 0);
    CHECK_THROWS_AS(beta_bound_check(a, shorter, truths, 1), MetricsError);
  }
}

TEST_CASE("confidence interval across seeds") {
  const std::vector<double> same = {0.8, 0.8, 0.8};
  const auto s = ci_across_seeds(same);
  CHECK(s.mean == doctest::Approx(80.0));
  CHECK(s.lo == doctest::Approx(80.0));
  CHECK(s.hi == doctest::Approx(80.0));

  const std::vector<double> spread = {0.90, 0.95, 1.00};
  const auto c = ci_across_seeds(spread);
  CHECK(c.mean == doctest::Approx(95.0));
  CHECK(c.half_width == doctest::Approx(4.3027 * 5.0 / std::sqrt(3.0)).epsilon(1e-4));
  CHECK(c.half_width == doctest::Approx(12.42).epsilon(1e-3));
  CHECK(c.lo == doctest::Approx(95.0 - c.half_width));
  CHECK(c.hi == 100.0);

  const std::vector<double> ones = {1.0, 1.0, 1.0};
  const auto o = ci_across_seeds(ones);
  CHECK(o.lo == 100.0);
  CHECK(o.hi == 100.0);

  const std::vector<double> one = {0.5};
  CHECK_THROWS_AS(ci_across_seeds(one), MetricsError);
}
