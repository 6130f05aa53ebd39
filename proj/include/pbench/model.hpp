#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pbench/feature_grid.hpp"

namespace pbench {

class ModelError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  std::size_t hidden = 64;
  std::size_t epochs = 60;
  double learning_rate = 0.2;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  /// L2 penalty (weight_decay / 2) * (|W1|^2 + |W2|^2); biases are not penalised.
  double weight_decay = 0.04;

  void validate() const;
};

/// Flattened grids with integer labels.
struct Examples {
  std::size_t dim = 0;
  std::vector<float> x;
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }
  void add(const FeatureGrid& g, int label);
  std::span<const float> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
};

/// One-hidden-layer ReLU network, softmax output.
template <typename T>
struct Mlp {
  std::size_t inputs = 0, hidden = 0, classes = 0;
  std::vector<T> w1;  // inputs x hidden, input-major
  std::vector<T> b1;  // hidden
  std::vector<T> w2;  // classes x hidden, class-major
  std::vector<T> b2;  // classes

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hid, std::size_t cls)
      : inputs(in), hidden(hid), classes(cls), w1(in * hid), b1(hid), w2(cls * hid), b2(cls) {}

  std::size_t parameter_count() const noexcept { return w1.size() + b1.size() + w2.size() + b2.size(); }
  bool operator==(const Mlp&) const = default;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double learning_rate = 0;
  std::size_t batch_size = 0;
  double weight_decay = 0;
  double final_loss = 0;
  std::vector<double> epoch_losses;
  bool operator==(const TrainMeta&) const = default;
};

struct ModelParams {
  std::uint16_t rows = 0, cols = 0;
  std::vector<std::string> class_order;
  Mlp<float> net;
  TrainMeta meta;
  bool operator==(const ModelParams&) const = default;
};

/// Glorot-uniform weights, zero biases.
template <typename T>
Mlp<T> init_mlp(std::size_t inputs, std::size_t hidden, std::size_t classes, std::uint64_t seed);

/// Mean cross-entropy (plus the weight-decay penalty when weight_decay > 0).
template <typename T>
double mean_loss(const Mlp<T>& net, const Examples& data, double weight_decay = 0.0);

/// Gradient of mean_loss, laid out like the network.
template <typename T>
Mlp<T> loss_gradient(const Mlp<T>& net, const Examples& data, double weight_decay = 0.0);

ModelParams train(const Examples& data, std::uint16_t rows, std::uint16_t cols, std::vector<std::string> class_order,
                  const TrainConfig& cfg);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

Prediction predict(const ModelParams& params, const FeatureGrid& g);
/// Argmax for every row, ties to the lowest class index.
std::vector<int> predict_all(const ModelParams& params, const Examples& data);

/// Hook that may rewrite the analytic gradient before comparison.
using GradientMutation = std::function<void(Mlp<double>&)>;

/// Max over every parameter of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6), with central differences
/// at h = 1e-5 in double precision.
double gradient_check(const TrainConfig& cfg, const Examples& tiny, std::size_t classes,
                      const GradientMutation& mutate = {});

Bytes serialize_checkpoint(const ModelParams& p);
ModelParams parse_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace pbench
