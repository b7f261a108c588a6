#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace svc {

// 64-bit FNV-1a. Used for content hashes of artifacts and for deriving
// named RNG substreams. Not cryptographic; collisions are irrelevant at
// this scale.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ull) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

}  // namespace svc
