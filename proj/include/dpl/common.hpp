#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dpl {

inline constexpr const char* kVersion = "0.1.0";

/// Error type for all domain failures (I/O, schema, numeric aborts).
class DplError : public std::runtime_error {
 public:
  explicit DplError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit) — used for content addressing and checksums.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(uint64_t v);
uint64_t fnv1a64_file(const std::string& path);

// ---------------------------------------------------------------------------
// Deterministic randomness. All sampling goes through these helpers so the
// generated streams do not depend on the standard library's distribution
// implementations.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed for a named sub-stream of a root seed.
inline uint64_t derive_seed(uint64_t root, std::string_view stream) {
  return splitmix64(root ^ fnv1a64(stream));
}

/// Uniform integer in [0, n) via the multiply-shift trick (n > 0).
inline size_t rand_index(Rng& rng, size_t n) {
  return static_cast<size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

/// Uniform double in [0, 1).
inline double rand_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double rand_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_real(rng);
}

/// Fisher-Yates shuffle driven by rand_index.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = rand_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace dpl
