#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace forcetune {

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) * 0.39894228040143267794;  // 1/sqrt(2*pi)
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.70710678118654752440);  // 1/sqrt(2)
}

// FNV-1a over raw bytes; used for config fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable sub-stream seeds. Streams are fixed ordinals (plant noise, initial
// gains, per-window fit/acquisition, ...), so one base seed reproduces an
// entire run; the same rule derives per-run seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
}

}  // namespace forcetune
