#include "triplet/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <vector>

#include "triplet/errors.hpp"

namespace triplet {

Image load_png(const std::string& path, const Rgb& background) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (fp == nullptr) throw IoError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("png decode failed for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const int width = png_get_image_width(png, info);
  const int height = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_filler(png, 0xFF, PNG_FILLER_AFTER);  // force RGBA rows
  png_read_update_info(png, info);

  std::vector<png_byte> rows(static_cast<size_t>(width) * height * 4);
  std::vector<png_bytep> row_ptrs(height);
  for (int y = 0; y < height; ++y) row_ptrs[y] = rows.data() + static_cast<size_t>(y) * width * 4;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  Image img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const png_byte* px = rows.data() + (static_cast<size_t>(y) * width + x) * 4;
      const double a = px[3] / 255.0;
      for (int c = 0; c < 3; ++c) {
        const double lin = srgb_decode(px[c] / 255.0);
        img.at(x, y, c) = lin * a + background[c] * (1.0 - a);
      }
    }
  return img;
}

void save_png(const Image& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) throw IoError("cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("png encode failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x * 3 + c] =
            static_cast<png_byte>(std::lround(srgb_encode(img.at(x, y, c)) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace triplet
