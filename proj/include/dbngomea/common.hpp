#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dbngomea {

using Rng = std::mt19937_64;

/// Thrown when a caller breaks a documented precondition.
class contract_violation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr int kDefaultBinMin = 2;
inline constexpr int kDefaultBinMax = 15;
inline constexpr int kMultiObjectiveBinMax = 9;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for a named, indexed sub-stream of a root seed. Streams with different
/// names or indices are decorrelated; the mapping is stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a(stream)) + splitmix64(index + 0x51ed2701ULL));
}

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace dbngomea
