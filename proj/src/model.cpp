#include "pbench/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>

#include "pbench/rng.hpp"

namespace pbench {

namespace {

template <typename T>
void forward_one(const Mlp<T>& net, const float* x, T* h, T* z) {
  const std::size_t H = net.hidden;
  std::copy(net.b1.begin(), net.b1.end(), h);
  for (std::size_t i = 0; i < net.inputs; ++i) {
    const T xi = static_cast<T>(x[i]);
    if (xi == T(0)) continue;
    const T* w = net.w1.data() + i * H;
    for (std::size_t j = 0; j < H; ++j) h[j] += xi * w[j];
  }
  for (std::size_t j = 0; j < H; ++j) h[j] = h[j] > T(0) ? h[j] : T(0);
  for (std::size_t k = 0; k < net.classes; ++k) {
    const T* w = net.w2.data() + k * H;
    T s = net.b2[k];
    for (std::size_t j = 0; j < H; ++j) s += w[j] * h[j];
    z[k] = s;
  }
}

// Softmax in place; returns -log p[label].
template <typename T>
double softmax_xent(T* z, std::size_t k, int label) {
  const T m = *std::max_element(z, z + k);
  T sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    z[c] = std::exp(z[c] - m);
    sum += z[c];
  }
  for (std::size_t c = 0; c < k; ++c) z[c] /= sum;
  return -std::log(static_cast<double>(z[label]));
}

// Accumulates the gradient of the summed loss over rows [first, last) into `grad`; returns the summed loss.
template <typename T>
double accumulate(const Mlp<T>& net, const Examples& data, const std::size_t* order, std::size_t count, Mlp<T>& grad) {
  const std::size_t H = net.hidden, K = net.classes;
  std::vector<T> h(H), z(K), gh(H);
  double loss = 0;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t idx = order[n];
    const float* x = data.x.data() + idx * data.dim;
    const int y = data.y[idx];
    forward_one(net, x, h.data(), z.data());
    loss += softmax_xent(z.data(), K, y);
    z[y] -= T(1);
    std::fill(gh.begin(), gh.end(), T(0));
    for (std::size_t k = 0; k < K; ++k) {
      const T g = z[k];
      grad.b2[k] += g;
      T* gw = grad.w2.data() + k * H;
      const T* w = net.w2.data() + k * H;
      for (std::size_t j = 0; j < H; ++j) {
        gw[j] += g * h[j];
        gh[j] += g * w[j];
      }
    }
    for (std::size_t j = 0; j < H; ++j) gh[j] = h[j] > T(0) ? gh[j] : T(0);
    for (std::size_t j = 0; j < H; ++j) grad.b1[j] += gh[j];
    for (std::size_t i = 0; i < net.inputs; ++i) {
      const T xi = static_cast<T>(x[i]);
      if (xi == T(0)) continue;
      T* gw = grad.w1.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) gw[j] += xi * gh[j];
    }
  }
  return loss;
}

template <typename T>
double l2_penalty(const Mlp<T>& net) {
  double s = 0;
  for (T w : net.w1) s += static_cast<double>(w) * w;
  for (T w : net.w2) s += static_cast<double>(w) * w;
  return 0.5 * s;
}

template <typename T>
void for_each_param(Mlp<T>& m, const std::function<void(T&)>& f) {
  for (auto* v : {&m.w1, &m.b1, &m.w2, &m.b2})
    for (T& x : *v) f(x);
}

void check_examples(const Examples& data, std::size_t inputs, std::size_t classes) {
  if (data.size() == 0) throw ModelError("empty training set");
  if (data.dim != inputs) throw ModelError("example dimension does not match the network");
  for (int y : data.y)
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ModelError("label index out of range");
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename N>
N parse_num(const std::string& s) {
  N v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ModelError("checkpoint meta: bad number '" + s + "'");
  return v;
}

void put_u16(Bytes& b, std::uint16_t v) {
  for (int k = 0; k < 2; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
void put_u32(Bytes& b, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
void put_f32(Bytes& b, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(b, bits);
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw ModelError("checkpoint truncated");
  }
  std::uint32_t u(int width) {
    need(static_cast<std::size_t>(width));
    std::uint32_t v = 0;
    for (int k = 0; k < width; ++k) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * k);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u(4);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) throw ModelError("checkpoint holds a non-finite parameter");
    return f;
  }
};

}  // namespace

void TrainConfig::validate() const {
  if (hidden == 0 || epochs == 0 || batch_size == 0) throw ModelError("hidden, epochs and batch_size must be positive");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ModelError("learning_rate must be positive");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) throw ModelError("weight_decay must not be negative");
}

void Examples::add(const FeatureGrid& g, int label) {
  if (dim == 0) dim = g.size();
  if (g.size() != dim) throw ModelError("grid size differs from the other examples");
  x.insert(x.end(), g.values.begin(), g.values.end());
  y.push_back(label);
}

template <typename T>
Mlp<T> init_mlp(std::size_t inputs, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  Mlp<T> net(inputs, hidden, classes);
  Rng rng = make_rng(seed, "init");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double a1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
  for (T& w : net.w1) w = static_cast<T>(a1 * unit(rng));
  for (T& w : net.w2) w = static_cast<T>(a2 * unit(rng));
  return net;
}

template <typename T>
double mean_loss(const Mlp<T>& net, const Examples& data, double weight_decay) {
  check_examples(data, net.inputs, net.classes);
  std::vector<T> h(net.hidden), z(net.classes);
  double loss = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    forward_one(net, data.x.data() + n * data.dim, h.data(), z.data());
    loss += softmax_xent(z.data(), net.classes, data.y[n]);
  }
  return loss / static_cast<double>(data.size()) + weight_decay * l2_penalty(net);
}

template <typename T>
Mlp<T> loss_gradient(const Mlp<T>& net, const Examples& data, double weight_decay) {
  check_examples(data, net.inputs, net.classes);
  Mlp<T> grad(net.inputs, net.hidden, net.classes);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  accumulate(net, data, order.data(), order.size(), grad);
  const T scale = T(1) / static_cast<T>(data.size());
  for_each_param<T>(grad, [&](T& g) { g *= scale; });
  for (std::size_t i = 0; i < grad.w1.size(); ++i) grad.w1[i] += static_cast<T>(weight_decay) * net.w1[i];
  for (std::size_t i = 0; i < grad.w2.size(); ++i) grad.w2[i] += static_cast<T>(weight_decay) * net.w2[i];
  return grad;
}

template Mlp<float> init_mlp<float>(std::size_t, std::size_t, std::size_t, std::uint64_t);
template Mlp<double> init_mlp<double>(std::size_t, std::size_t, std::size_t, std::uint64_t);
template double mean_loss<float>(const Mlp<float>&, const Examples&, double);
template double mean_loss<double>(const Mlp<double>&, const Examples&, double);
template Mlp<float> loss_gradient<float>(const Mlp<float>&, const Examples&, double);
template Mlp<double> loss_gradient<double>(const Mlp<double>&, const Examples&, double);

ModelParams train(const Examples& data, std::uint16_t rows, std::uint16_t cols, std::vector<std::string> class_order,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (class_order.size() < 2) throw ModelError("at least two classes are required");
  if (static_cast<std::size_t>(rows) * cols != data.dim) throw ModelError("grid dimensions do not match the examples");
  const std::size_t K = class_order.size();
  check_examples(data, data.dim, K);

  ModelParams p;
  p.rows = rows;
  p.cols = cols;
  p.class_order = std::move(class_order);
  p.net = init_mlp<float>(data.dim, cfg.hidden, K, cfg.seed);
  p.meta = {cfg.seed, cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.weight_decay, 0.0, {}};

  Rng rng = make_rng(cfg.seed, "shuffle");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Mlp<float> grad(data.dim, cfg.hidden, K);
  const float lr = static_cast<float>(cfg.learning_rate);
  const float wd = static_cast<float>(cfg.weight_decay);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_range(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      for_each_param<float>(grad, [](float& g) { g = 0.0f; });
      epoch_loss += accumulate(p.net, data, order.data() + start, count, grad);
      const float step = lr / static_cast<float>(count);
      auto& net = p.net;
      for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] -= step * grad.w1[i] + lr * wd * net.w1[i];
      for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] -= step * grad.w2[i] + lr * wd * net.w2[i];
      for (std::size_t i = 0; i < net.b1.size(); ++i) net.b1[i] -= step * grad.b1[i];
      for (std::size_t i = 0; i < net.b2.size(); ++i) net.b2[i] -= step * grad.b2[i];
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw ModelError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    p.meta.epoch_losses.push_back(epoch_loss);
  }
  bool finite = true;
  for_each_param<float>(p.net, [&](float& w) { finite = finite && std::isfinite(w); });
  if (!finite) throw ModelError("training diverged: non-finite parameters after epoch " + std::to_string(cfg.epochs));
  p.meta.final_loss = p.meta.epoch_losses.back();
  return p;
}

Prediction predict(const ModelParams& params, const FeatureGrid& g) {
  if (g.rows != params.rows || g.cols != params.cols)
    throw ModelError("grid is " + std::to_string(g.rows) + "x" + std::to_string(g.cols) + ", model expects " +
                     std::to_string(params.rows) + "x" + std::to_string(params.cols));
  const auto& net = params.net;
  std::vector<float> h(net.hidden), z(net.classes);
  forward_one(net, g.values.data(), h.data(), z.data());
  Prediction out;
  out.label = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  const double m = z[static_cast<std::size_t>(out.label)];
  double sum = 0;
  for (float v : z) sum += std::exp(static_cast<double>(v) - m);
  for (float v : z) out.probabilities.push_back(std::exp(static_cast<double>(v) - m) / sum);
  return out;
}

std::vector<int> predict_all(const ModelParams& params, const Examples& data) {
  const auto& net = params.net;
  if (data.dim != net.inputs) throw ModelError("example dimension does not match the model");
  std::vector<float> h(net.hidden), z(net.classes);
  std::vector<int> out(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    forward_one(net, data.x.data() + n * data.dim, h.data(), z.data());
    out[n] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

double gradient_check(const TrainConfig& cfg, const Examples& tiny, std::size_t classes, const GradientMutation& mutate) {
  if (tiny.size() == 0 || tiny.size() > 10) throw ModelError("gradient_check needs between 1 and 10 samples");
  Mlp<double> net = init_mlp<double>(tiny.dim, cfg.hidden, classes, cfg.seed);
  // Nonzero biases keep the check away from the all-zero symmetric point.
  Rng rng = make_rng(cfg.seed, "gradcheck");
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (double& b : net.b1) b = u(rng);
  for (double& b : net.b2) b = u(rng);

  Mlp<double> analytic = loss_gradient(net, tiny, cfg.weight_decay);
  if (mutate) mutate(analytic);

  constexpr double h = 1e-5;
  double worst = 0;
  std::vector<double>* blocks[] = {&net.w1, &net.b1, &net.w2, &net.b2};
  std::vector<double>* grads[] = {&analytic.w1, &analytic.b1, &analytic.w2, &analytic.b2};
  for (int b = 0; b < 4; ++b) {
    auto& params = *blocks[b];
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = mean_loss(net, tiny, cfg.weight_decay);
      params[i] = saved - h;
      const double down = mean_loss(net, tiny, cfg.weight_decay);
      params[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = (*grads[b])[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

Bytes serialize_checkpoint(const ModelParams& p) {
  const auto& n = p.net;
  if (n.classes != p.class_order.size()) throw ModelError("class_order does not match the network");
  Bytes b = {'P', 'B', 'M', '1'};
  put_u16(b, p.rows);
  put_u16(b, p.cols);
  put_u32(b, static_cast<std::uint32_t>(n.hidden));
  put_u32(b, static_cast<std::uint32_t>(n.classes));
  for (const auto* block : {&n.w1, &n.b1, &n.w2, &n.b2})
    for (float f : *block) put_f32(b, f);

  std::string meta;
  meta += "classes=";
  for (std::size_t i = 0; i < p.class_order.size(); ++i) meta += (i ? "," : "") + p.class_order[i];
  meta += "\nseed=" + std::to_string(p.meta.seed);
  meta += "\nepochs=" + std::to_string(p.meta.epochs);
  meta += "\nlearning_rate=" + fmt_double(p.meta.learning_rate);
  meta += "\nbatch_size=" + std::to_string(p.meta.batch_size);
  meta += "\nweight_decay=" + fmt_double(p.meta.weight_decay);
  meta += "\nfinal_loss=" + fmt_double(p.meta.final_loss);
  meta += "\nepoch_losses=";
  for (std::size_t i = 0; i < p.meta.epoch_losses.size(); ++i) meta += (i ? "," : "") + fmt_double(p.meta.epoch_losses[i]);
  meta += "\nprng=" + std::string(kRngName) + "\n";
  put_u32(b, static_cast<std::uint32_t>(meta.size()));
  b.insert(b.end(), meta.begin(), meta.end());
  return b;
}

ModelParams parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PBM1", 4) != 0) throw ModelError("checkpoint: bad magic");
  Reader r{bytes, 4};
  ModelParams p;
  p.rows = static_cast<std::uint16_t>(r.u(2));
  p.cols = static_cast<std::uint16_t>(r.u(2));
  const std::size_t hidden = r.u(4);
  const std::size_t classes = r.u(4);
  const std::size_t inputs = static_cast<std::size_t>(p.rows) * p.cols;
  if (inputs == 0 || hidden == 0 || classes < 2) throw ModelError("checkpoint: invalid dimensions");
  p.net = Mlp<float>(inputs, hidden, classes);
  r.need(4 * p.net.parameter_count());
  for (auto* block : {&p.net.w1, &p.net.b1, &p.net.w2, &p.net.b2})
    for (float& f : *block) f = r.f32();
  const std::size_t len = r.u(4);
  r.need(len);
  std::string meta(reinterpret_cast<const char*>(bytes.data() + r.pos), len);
  r.pos += len;
  if (r.pos != bytes.size()) throw ModelError("checkpoint: trailing bytes");

  std::map<std::string, std::string> kv;
  std::size_t start = 0;
  while (start < meta.size()) {
    auto end = meta.find('\n', start);
    if (end == std::string::npos) end = meta.size();
    const std::string line = meta.substr(start, end - start);
    start = end + 1;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ModelError("checkpoint meta: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto list = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t b = 0;
    while (b <= s.size() && !s.empty()) {
      auto e = s.find(',', b);
      if (e == std::string::npos) e = s.size();
      out.push_back(s.substr(b, e - b));
      b = e + 1;
    }
    return out;
  };
  p.class_order = list(kv["classes"]);
  if (p.class_order.size() != classes) throw ModelError("checkpoint: class list does not match the dimensions");
  auto field = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ModelError(std::string("checkpoint meta: missing '") + key + "'");
    return it->second;
  };
  p.meta.seed = parse_num<std::uint64_t>(field("seed"));
  p.meta.epochs = parse_num<std::size_t>(field("epochs"));
  p.meta.learning_rate = parse_num<double>(field("learning_rate"));
  p.meta.batch_size = parse_num<std::size_t>(field("batch_size"));
  p.meta.weight_decay = parse_num<double>(field("weight_decay"));
  p.meta.final_loss = parse_num<double>(field("final_loss"));
  for (const auto& s : list(kv["epoch_losses"])) p.meta.epoch_losses.push_back(parse_num<double>(s));
  return p;
}

}  // namespace pbench
