#pragma once

#include <png.h>

#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include "flavr/errors.hpp"

namespace flavr {

// 8-bit RGB image decoded to float in [0,1], interleaved rows.
struct Image {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> rgb;  // height * width * 3

  float& at(std::int64_t y, std::int64_t x, std::int64_t c) {
    return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  float at(std::int64_t y, std::int64_t x, std::int64_t c) const {
    return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

inline Image make_image(std::int64_t height, std::int64_t width, float fill = 0.0f) {
  Image img;
  img.height = height;
  img.width = width;
  img.rgb.assign(static_cast<std::size_t>(height * width * 3), fill);
  return img;
}

inline Image read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8)) {
    std::fclose(fp);
    throw IoError("not a PNG file: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<png_byte> data;
  std::vector<png_byte*> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("failed to decode " + path);
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  if (rowbytes != static_cast<std::size_t>(w) * 3)
    throw IoError("unexpected channel layout in " + path);
  Image img = make_image(h, w);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    img.rgb[i] = static_cast<float>(data[i]) / 255.0f;
  return img;
}

inline void write_png(const std::string& path, const Image& img) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot create " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<png_byte> data(static_cast<std::size_t>(img.height * img.width * 3));
  std::vector<png_byte*> rows(static_cast<std::size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("failed to encode " + path);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    float v = img.rgb[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    data[i] = static_cast<png_byte>(v * 255.0f + 0.5f);
  }
  for (std::int64_t y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = data.data() + y * img.width * 3;

  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace flavr
