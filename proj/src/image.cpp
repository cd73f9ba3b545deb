#include "driverep/core/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "driverep/core/errors.hpp"
#include "driverep/core/hash.hpp"

namespace driverep {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

void write_png(const std::filesystem::path& path, const FrameU8& frame) {
  if (frame.height <= 0 || frame.width <= 0 ||
      frame.chw.size() !=
          static_cast<std::size_t>(3 * frame.height * frame.width)) {
    throw ProtocolError("write_png: malformed frame");
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width),
               static_cast<png_uint_32>(frame.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  // Planar CHW -> interleaved rows.
  std::vector<std::uint8_t> row(static_cast<std::size_t>(3 * frame.width));
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      row[static_cast<std::size_t>(3 * x + 0)] = frame.at(0, y, x);
      row[static_cast<std::size_t>(3 * x + 1)] = frame.at(1, y, x);
      row[static_cast<std::size_t>(3 * x + 2)] = frame.at(2, y, x);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

FrameU8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path.string());

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw CorruptFileError("not a png file: " + path.string());
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CorruptFileError("png read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize any common input (palette, gray, 16-bit, alpha) to 8-bit RGB.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(png);
  }
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  FrameU8 frame;
  frame.width = static_cast<int>(png_get_image_width(png, info));
  frame.height = static_cast<int>(png_get_image_height(png, info));
  frame.chw.assign(static_cast<std::size_t>(3 * frame.width * frame.height),
                   0);
  std::vector<std::uint8_t> row(
      png_get_rowbytes(png, info));
  if (row.size() < static_cast<std::size_t>(3 * frame.width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CorruptFileError("unexpected png row size: " + path.string());
  }
  for (int y = 0; y < frame.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < frame.width; ++x) {
      frame.at(0, y, x) = row[static_cast<std::size_t>(3 * x + 0)];
      frame.at(1, y, x) = row[static_cast<std::size_t>(3 * x + 1)];
      frame.at(2, y, x) = row[static_cast<std::size_t>(3 * x + 2)];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

}  // namespace driverep
