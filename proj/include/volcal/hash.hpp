#pragma once

#include <cstdint>
#include <string_view>

namespace volcal {

/// FNV-1a 64-bit; provenance hashes for configs and reports.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace volcal
