#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "pbench/model.hpp"
#include "pbench/synthdata.hpp"

using namespace pbench;

namespace {

const std::vector<std::string> kSix = {"Car", "Tram", "Truck", "Bus", "Motorcycle", "Bicycle"};

Examples random_examples(std::size_t n, std::size_t dim, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Examples ex;
  ex.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) ex.x.push_back(u(rng));
    ex.y.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(classes)));
  }
  return ex;
}

ModelParams zero_model(std::size_t hidden) {
  ModelParams p;
  p.rows = 4;
  p.cols = 4;
  p.class_order = kSix;
  p.net = Mlp<float>(16, hidden, 6);
  return p;
}

FeatureGrid random_grid(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FeatureGrid g(4, 4);
  for (auto& v : g.values) v = u(rng);
  return g;
}

Examples default_train_set(const Dataset& ds, const SplitResult& split) {
  Examples ex;
  ex.dim = 256;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (split.assignments[i].partition == Partition::train)
      ex.add(ds.samples[i].grid, ds.class_index(ds.samples[i].label));
  return ex;
}

}  // namespace

TEST_CASE("zero output layer gives the uniform loss") {
  auto net = init_mlp<double>(16, 8, 6, 1);
  std::fill(net.w2.begin(), net.w2.end(), 0.0);
  std::fill(net.b2.begin(), net.b2.end(), 0.0);
  const auto ex = random_examples(30, 16, 6, 2);
  CHECK(mean_loss(net, ex) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(std::log(6.0) == doctest::Approx(1.7918).epsilon(1e-4));
}

TEST_CASE("glorot initialisation bounds") {
  const auto net = init_mlp<float>(256, 64, 6, 3);
  const double a1 = std::sqrt(6.0 / (256 + 64));
  const double a2 = std::sqrt(6.0 / (64 + 6));
  for (float w : net.w1) CHECK(std::abs(w) <= a1);
  for (float w : net.w2) CHECK(std::abs(w) <= a2);
  for (float b : net.b1) CHECK(b == 0.0f);
  CHECK(net == init_mlp<float>(256, 64, 6, 3));
  CHECK_FALSE(net == init_mlp<float>(256, 64, 6, 4));
}

TEST_CASE("linearly separable toy set is fit exactly") {
  // Class is decided by the sign of x0 - 0.5, with a margin of 0.1.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Examples ex;
  ex.dim = 4;
  for (int i = 0; i < 20; ++i) {
    const int y = i % 2;
    const float x0 = y ? 0.6f + 0.4f * u(rng) : 0.4f * u(rng);
    ex.x.insert(ex.x.end(), {x0, u(rng), u(rng), u(rng)});
    ex.y.push_back(y);
  }
  for (std::size_t i = 0; i < ex.size(); ++i) CHECK((ex.row(i)[0] > 0.5f) == (ex.y[i] == 1));

  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.weight_decay = 0.0;
  const auto p = train(ex, 2, 2, {"A", "B"}, cfg);
  const auto preds = predict_all(p, ex);
  CHECK(preds == ex.y);
}

TEST_CASE("prediction probabilities and tie-breaking") {
  std::mt19937_64 rng(9);
  auto p = zero_model(8);
  const auto uniform = predict(p, random_grid(rng));
  CHECK(uniform.label == 0);
  for (double q : uniform.probabilities) CHECK(q == doctest::Approx(1.0 / 6.0));

  p.net = init_mlp<float>(16, 8, 6, 2);
  for (int i = 0; i < 100; ++i) {
    const auto pr = predict(p, random_grid(rng));
    CHECK(std::accumulate(pr.probabilities.begin(), pr.probabilities.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  }

  p.net.b2[4] += 10.0f;
  for (int i = 0; i < 100; ++i) CHECK(predict(p, random_grid(rng)).label == 4);

  FeatureGrid wrong(5, 4);
  CHECK_THROWS_AS(predict(p, wrong), ModelError);
}

TEST_CASE("gradient check") {
  TrainConfig cfg;
  cfg.hidden = 5;
  const auto tiny = random_examples(8, 6, 3, 4);
  CHECK(gradient_check(cfg, tiny, 3) <= 1e-4);

  cfg.weight_decay = 0.04;
  CHECK(gradient_check(cfg, tiny, 3) <= 1e-4);

  const double mutated = gradient_check(cfg, tiny, 3, [](Mlp<double>& g) {
    for (double& v : g.w2) v *= 2.0;
  });
  CHECK(mutated > 1e-1);

  TrainConfig smallest;
  smallest.hidden = 1;
  CHECK(gradient_check(smallest, random_examples(1, 3, 2, 6), 2) <= 1e-4);

  CHECK_THROWS_AS(gradient_check(cfg, random_examples(11, 3, 2, 6), 2), ModelError);
}

TEST_CASE("training is deterministic and reduces the loss") {
  auto gen = default_gen_config();
  const auto ds = generate(gen);
  const auto split = stratified_split(ds.features_manifest, 0.70, 1);
  const auto ex = default_train_set(ds, split);
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = train(ex, 16, 16, ds.classes, cfg);
  const auto b = train(ex, 16, 16, ds.classes, cfg);
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  REQUIRE(a.meta.epoch_losses.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(a.meta.epoch_losses[e] < a.meta.epoch_losses[e - 1]);
  CHECK(a.meta.final_loss == a.meta.epoch_losses.back());

  cfg.seed = 2;
  CHECK(serialize_checkpoint(train(ex, 16, 16, ds.classes, cfg)) != serialize_checkpoint(a));
}

TEST_CASE("training errors") {
  const auto ex = random_examples(20, 4, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  Examples empty;
  empty.dim = 4;
  CHECK_THROWS_AS(train(empty, 2, 2, {"A", "B"}, cfg), ModelError);
  CHECK_THROWS_AS(train(ex, 2, 2, {"A"}, cfg), ModelError);
  CHECK_THROWS_AS(train(ex, 3, 2, {"A", "B"}, cfg), ModelError);

  cfg.learning_rate = 1e30;
  cfg.weight_decay = 0.0;
  try {
    train(ex, 2, 2, {"A", "B"}, cfg);
    FAIL("expected divergence");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }

  TrainConfig bad;
  bad.hidden = 0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
}

TEST_CASE("checkpoint round trip keeps the hash") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.hidden = 7;
  const auto ex = random_examples(40, 16, 6, 3);
  const auto p = train(ex, 4, 4, kSix, cfg);
  const auto bytes = serialize_checkpoint(p);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PBM1");
  const auto back = parse_checkpoint(bytes);
  CHECK(back == p);
  CHECK(sha256(serialize_checkpoint(back)) == sha256(bytes));

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(parse_checkpoint(truncated), ModelError);
  auto bad_magic = bytes;
  bad_magic[3] = '2';
  CHECK_THROWS_AS(parse_checkpoint(bad_magic), ModelError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(parse_checkpoint(extra), ModelError);
  auto bad_meta = bytes;
  const auto pos = std::string(bad_meta.begin(), bad_meta.end()).find("seed=");
  REQUIRE(pos != std::string::npos);
  bad_meta[pos + 5] = 'x';
  CHECK_THROWS_AS(parse_checkpoint(bad_meta), ModelError);
}
