#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dipm {

// 64-bit FNV-1a; used both for named RNG streams and for config/weight hashes.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// All randomness in the project flows from one master seed. Independent
// streams are derived by name so adding a consumer never shifts another
// stream's values.
inline uint64_t stream_seed(uint64_t master, std::string_view name) {
  return splitmix64(fnv1a64(name) ^ splitmix64(master));
}

inline std::mt19937_64 make_stream(uint64_t master, std::string_view name) {
  return std::mt19937_64(stream_seed(master, name));
}

}  // namespace dipm
