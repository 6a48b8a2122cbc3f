#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "dpit/geometry.hpp"

namespace dpit {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

}  // namespace detail

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded to k / 255.
inline void write_png(const Image& img, const std::string& path) {
  if (img.rank() != 3 || img.dim(2) != 3) throw DimensionError("write_png expects H x W x 3, got " + to_string(img.shape()));
  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ConfigError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  const std::size_t h = img.dim(0), w = img.dim(1);
  std::vector<std::uint8_t> bytes(h * w * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::to_byte(img[i]);
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r) rows[r] = bytes.data() + r * w * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed writing " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Any 8/16-bit PNG, converted to RGB float in [0, 1].
inline Image read_png(const std::string& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ConfigError("cannot read " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  std::vector<std::uint8_t> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("not a readable PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  bytes.resize(h * w * 3);
  rows.resize(h);
  for (std::size_t r = 0; r < h; ++r) rows[r] = bytes.data() + r * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  Image img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = static_cast<float>(bytes[i]) / 255.f;
  return img;
}

}  // namespace dpit
