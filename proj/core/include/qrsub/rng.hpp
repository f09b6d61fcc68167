#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qrsub {

using Engine = std::mt19937_64;

// Name recorded in output metadata so runs can be matched to the generator.
inline constexpr std::string_view kRngName = "mt19937_64+splitmix64-streams/v1";

// Identifies an independent family of random streams. Within a family,
// stream ids separate the pilot draw, each batch, and data generation, so
// the order in which work is scheduled never changes the numbers drawn.
struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
};

namespace streams {
inline constexpr std::uint64_t kData = 0xDA7A'0000'0000'0000ULL;
inline constexpr std::uint64_t kPilot = 0x9110'7000'0000'0000ULL;
// Batch b uses stream id b.
}  // namespace streams

std::uint64_t splitmix64(std::uint64_t x) noexcept;

Engine make_engine(RngKey key, std::uint64_t stream) noexcept;

// Uniform double in [0, 1) from the top 53 bits of one engine output.
inline double uniform01(Engine& eng) noexcept {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Integer in [0, n) by multiply-shift; bias is at most n / 2^64.
inline std::uint64_t uniform_below(Engine& eng, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(eng()) * n) >> 64);
}

// Fresh seed from system entropy, for runs where the user gives none.
std::uint64_t entropy_seed();

}  // namespace qrsub
