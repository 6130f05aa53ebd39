#include "pbench/rng.hpp"

#include "pbench/digest.hpp"

namespace pbench {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  Sha256 h;
  for (int k = 0; k < 8; ++k) h.update(static_cast<std::uint8_t>(seed >> (8 * k)));
  h.update(tag);
  const Digest d = h.finish();
  std::uint64_t out = 0;
  for (int k = 0; k < 8; ++k) out |= static_cast<std::uint64_t>(d[k]) << (8 * k);
  return out;
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace pbench
