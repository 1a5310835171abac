#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>

#include "hsgs/image.hpp"

namespace hsgs {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Reads an 8-bit PNG as RGB regardless of on-disk color type.
inline Image load_png(const std::filesystem::path& path) {
  detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: read struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: info struct allocation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng: failed to decode " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  buffer.resize(static_cast<size_t>(height) * width * 3);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = buffer.data() + static_cast<size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(width), static_cast<int>(height), 3);
  for (size_t i = 0; i < buffer.size(); ++i) img.data[i] = from_byte(buffer[i]);
  return img;
}

namespace detail {

inline void save_png_bytes(const std::filesystem::path& path, const uint8_t* bytes, int width,
                           int height, int color_type) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: write struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: info struct allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: failed to encode " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  int stride = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes + static_cast<size_t>(y) * width * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void save_png(const std::filesystem::path& path, const Image& img) {
  require(img.channels == 3, "save_png: RGB image expected");
  std::vector<uint8_t> bytes(img.size());
  for (size_t i = 0; i < img.size(); ++i) bytes[i] = to_byte(img.data[i]);
  detail::save_png_bytes(path, bytes.data(), img.width, img.height, PNG_COLOR_TYPE_RGB);
}

// Single-channel mask PNG, 255 = valid.
inline void save_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<uint8_t> bytes(mask.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  detail::save_png_bytes(path, bytes.data(), mask.width, mask.height, PNG_COLOR_TYPE_GRAY);
}

inline Mask load_mask_png(const std::filesystem::path& path) {
  Image img = load_png(path);
  Mask mask(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) mask.set(y, x, img.at(y, x, 0) >= 0.5);
  return mask;
}

}  // namespace hsgs
