#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace logtriage {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a. Used for vocab fingerprints and request cache keys.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

// Expands one global seed into independent per-module, per-item streams:
// seed' = splitmix(splitmix(seed ^ fnv(stream)) + index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace logtriage
