#include "pbench/feature_grid.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace pbench {

namespace {
constexpr std::uint8_t kMagic[4] = {'F', 'G', 'R', 'D'};
constexpr std::size_t kHeader = 8;

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
}  // namespace

void validate_grid(const FeatureGrid& g) {
  if (g.rows == 0 || g.cols == 0) throw FormatError("feature grid dimensions must be positive");
  if (g.values.size() != static_cast<std::size_t>(g.rows) * g.cols)
    throw FormatError("feature grid holds " + std::to_string(g.values.size()) + " values for " +
                      std::to_string(g.rows) + "x" + std::to_string(g.cols));
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const float v = g.values[i];
    if (!std::isfinite(v)) throw FormatError("non-finite feature value at index " + std::to_string(i));
    if (v < 0.0f || v > 1.0f) throw FormatError("feature value outside [0, 1] at index " + std::to_string(i));
  }
}

Bytes write_feature_file(const FeatureGrid& g) {
  validate_grid(g);
  Bytes out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kHeader + g.values.size() * 4);
  put_u16(out, g.rows);
  put_u16(out, g.cols);
  for (float v : g.values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  return out;
}

FeatureGrid read_feature_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("feature file: bad magic");
  FeatureGrid g;
  g.rows = get_u16(bytes.data() + 4);
  g.cols = get_u16(bytes.data() + 6);
  const std::size_t n = static_cast<std::size_t>(g.rows) * g.cols;
  if (bytes.size() != kHeader + 4 * n)
    throw FormatError("feature file: " + std::to_string(g.rows) + "x" + std::to_string(g.cols) + " needs " +
                      std::to_string(kHeader + 4 * n) + " bytes, found " + std::to_string(bytes.size()));
  g.values.resize(n);
  const std::uint8_t* p = bytes.data() + kHeader;
  for (std::size_t i = 0; i < n; ++i, p += 4) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                               static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
    g.values[i] = std::bit_cast<float>(bits);
  }
  validate_grid(g);
  return g;
}

}  // namespace pbench
