#pragma once

#include <cstdint>

namespace nkspec {

// SplitMix64 finalizer; derives independent stream seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream ids used when splitting an experiment seed.
enum class SeedStream : std::uint64_t { train = 1, test = 2, normalize = 3, coefficients = 4, monte_carlo = 5 };

inline std::uint64_t derive_seed(std::uint64_t master, SeedStream s) {
  return derive_seed(master, static_cast<std::uint64_t>(s));
}

}  // namespace nkspec
