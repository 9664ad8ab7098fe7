#pragma once

#include <cstdint>

namespace evsched {

/// Independent 64-bit seed for stream `stream` derived from `root`
/// (splitmix64 finalizer over root + golden-ratio multiples).
constexpr std::uint64_t split_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + (stream + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Named streams so each module draws from its own sequence.
namespace seed_stream {
inline constexpr std::uint64_t kGenerator = 1;
inline constexpr std::uint64_t kRisk = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kTrain = 4;
inline constexpr std::uint64_t kExecute = 5;
}  // namespace seed_stream

}  // namespace evsched
