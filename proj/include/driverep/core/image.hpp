#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace driverep {

// One RGB frame in planar channel-major layout (3 x H x W), 8 bits per
// channel. Matches the frame layout inside a video clip.
struct FrameU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> chw;  // size 3*height*width

  std::uint8_t& at(int c, int y, int x) {
    return chw[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  std::uint8_t at(int c, int y, int x) const {
    return chw[static_cast<std::size_t>((c * height + y) * width + x)];
  }

  static FrameU8 filled(int height, int width, std::uint8_t value = 0) {
    FrameU8 f;
    f.height = height;
    f.width = width;
    f.chw.assign(static_cast<std::size_t>(3 * height * width), value);
    return f;
  }
};

void write_png(const std::filesystem::path& path, const FrameU8& frame);
FrameU8 read_png(const std::filesystem::path& path);

}  // namespace driverep
