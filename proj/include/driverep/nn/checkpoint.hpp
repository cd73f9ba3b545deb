#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driverep/core/errors.hpp"

namespace driverep {

// Self-describing binary parameter container. Byte layout (all integers
// little-endian, documented in README.md):
//
//   offset  size  field
//   0       8     magic "DRVREP01"
//   8       4     endianness tag, value 0x01020304
//   12      4     dtype: 1 = float32, 2 = float64
//   16      8     header length N (bytes)
//   24      N     header, UTF-8 JSON
//   ...     8     section count K
//   then K sections, each:
//           8     name length M
//           M     name, UTF-8
//           8     element count E
//           E*w   raw values (w = 4 or 8 per dtype), column-major per block
//   finally 8     trailing magic "DRVREPEV" (end-of-volume check)
//
// Truncation or a wrong magic raises CorruptFileError.

struct RawCheckpoint {
  nlohmann::json header;
  int dtype = 0;  // 1 = f32, 2 = f64
  std::vector<std::pair<std::string, std::vector<double>>> sections;

  const std::vector<double>* find(const std::string& name) const {
    for (const auto& [n, v] : sections) {
      if (n == name) return &v;
    }
    return nullptr;
  }
};

template <typename S>
constexpr int dtype_tag() {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8);
  return sizeof(S) == 4 ? 1 : 2;
}

void write_checkpoint_file(
    const std::filesystem::path& path, const nlohmann::json& header, int dtype,
    const std::vector<std::pair<std::string, std::vector<double>>>& sections);

RawCheckpoint read_checkpoint_file(const std::filesystem::path& path);

}  // namespace driverep
