#include "qrsub/rng.hpp"

namespace qrsub {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Engine make_engine(RngKey key, std::uint64_t stream) noexcept {
  std::uint64_t h = splitmix64(key.seed);
  h = splitmix64(h ^ key.replicate);
  h = splitmix64(h ^ stream);
  return Engine(h);
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace qrsub
