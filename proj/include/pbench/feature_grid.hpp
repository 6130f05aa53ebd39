#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pbench/digest.hpp"

namespace pbench {

class FormatError : public Error {
 public:
  using Error::Error;
};

/// rows x cols grid of floats in [0, 1], row-major.
struct FeatureGrid {
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
  std::vector<float> values;

  FeatureGrid() = default;
  FeatureGrid(std::uint16_t r, std::uint16_t c, float fill = 0.0f)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const noexcept { return values.size(); }

  bool operator==(const FeatureGrid&) const = default;
};

/// Throws FormatError when dims are zero, the value count is wrong, or a value is non-finite or outside [0, 1].
void validate_grid(const FeatureGrid& g);

/// "FGRD", u16 rows LE, u16 cols LE, rows*cols float32 LE.
Bytes write_feature_file(const FeatureGrid& g);
FeatureGrid read_feature_file(std::span<const std::uint8_t> bytes);

}  // namespace pbench
