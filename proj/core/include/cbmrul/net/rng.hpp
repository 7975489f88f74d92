#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cbmrul {

using Rng = std::mt19937_64;

/// Derives an independent child seed for a named stage from a root seed.
/// Stable across runs and platforms (FNV-1a over the label, splitmix64 finalizer).
inline std::uint64_t split_seed(std::uint64_t root, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = root ^ (h + 0x9e3779b97f4a7c15ULL + (root << 6) + (root >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t root, std::string_view label) {
  return Rng(split_seed(root, label));
}

/// Uniform double in [0, 1) from the top 53 bits; avoids the
/// implementation-defined std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Integer in [lo, hi], inclusive.
inline long uniform_int(Rng& rng, long lo, long hi) {
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<long>(rng() % span);
}

/// Box-Muller standard normal.
double standard_normal(Rng& rng);

}  // namespace cbmrul
