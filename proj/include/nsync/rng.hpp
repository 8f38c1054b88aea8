#pragma once

#include <cstdint>
#include <random>

namespace nsync {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Sub-seed for stream `index` of `base`. Pure function; no shared generator state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Seeds of replication r: one for the sampling scheme, one for the Gaussian path.
struct ReplicationSeeds {
  std::uint64_t scheme;
  std::uint64_t path;
};

inline ReplicationSeeds replication_seeds(std::uint64_t base, std::uint64_t r) {
  return {derive_seed(base, 2 * r), derive_seed(base, 2 * r + 1)};
}

inline Rng make_rng(std::uint64_t base, std::uint64_t stream) {
  return Rng(derive_seed(base, stream));
}

}  // namespace nsync
