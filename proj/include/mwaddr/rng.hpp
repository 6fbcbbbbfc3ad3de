#pragma once

#include <cstdint>
#include <random>

namespace mwaddr {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent random streams addressed by (master seed, shot index, purpose).
enum class Stream : std::uint64_t { simulation = 0, imaging = 1, analysis = 2 };

inline Rng stream_rng(std::uint64_t seed, std::uint64_t index, Stream purpose = Stream::simulation) {
  const std::uint64_t key =
      mix64(mix64(seed) ^ mix64(index + 0x51ed2701ULL) ^ mix64(static_cast<std::uint64_t>(purpose) << 56));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

}  // namespace mwaddr
