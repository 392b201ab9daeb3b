#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace taxclass {

std::string sha256_hex(std::string_view data);

inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xCBF29CE484222325ULL) {
  uint64_t hash = seed;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

}  // namespace taxclass
