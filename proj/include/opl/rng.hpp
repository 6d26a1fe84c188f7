#pragma once

#include <cstdint>
#include <random>

namespace opl {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based seed derivation: the result depends only on (base, stream,
/// index), never on the order in which seeds are requested.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index = 0) {
  return mix64(mix64(mix64(base) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

using Rng = std::mt19937_64;

}  // namespace opl
