#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace driverep {

// FNV-1a 64-bit. Used for equality fingerprints (parameter blobs, corpus
// manifests), not for security.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace driverep
