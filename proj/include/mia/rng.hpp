#pragma once

#include <cstdint>
#include <random>

namespace mia {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-stage seed derived from a master seed. Stage seeds are
/// splitmix64(master ^ splitmix64(stage)), so each stage is reproducible on
/// its own and unrelated stages never share a stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stage) {
  return splitmix64(master ^ splitmix64(stage));
}

}  // namespace mia
