#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pbench {

/// Every random stream in the toolkit is a std::mt19937_64 seeded through derive_seed.
using Rng = std::mt19937_64;
inline constexpr std::string_view kRngName = "mt19937_64";

/// Independent 64-bit seed for the substream named `tag` under `seed` (first 8 bytes of SHA-256(seed LE || tag)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

inline Rng make_rng(std::uint64_t seed, std::string_view tag) { return Rng(derive_seed(seed, tag)); }

/// Uniform integer in [0, n) by rejection, independent of the standard library's distribution code.
std::uint64_t uniform_below(Rng& rng, std::uint64_t n);

/// In-place Fisher-Yates shuffle driven by uniform_below.
template <typename It>
void shuffle_range(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_below(rng, i);
    std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
  }
}

}  // namespace pbench
