#include "gavatar/image.h"

#include "gavatar/common.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace gavatar {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const Image& image, const std::string& path, int bit_depth, double scale) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_png: only 1- or 3-channel images");
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, bit_depth,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int bytes = bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels * bytes);
  const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(x, y, c) / scale, 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * max_value));
        const std::size_t o = (static_cast<std::size_t>(x) * image.channels + c) * bytes;
        if (bytes == 2) {
          row[o] = static_cast<png_byte>(q >> 8);
          row[o + 1] = static_cast<png_byte>(q & 0xff);
        } else {
          row[o] = static_cast<png_byte>(q);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

} // namespace

void write_png(const Image& image, const std::string& path) { write_png_impl(image, path, 8, 1.0); }

void write_png16(const Image& image, const std::string& path, double scale) {
  write_png_impl(image, path, 16, scale);
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("'" + path + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng failed reading '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  std::vector<png_byte> buf(png_get_rowbytes(png, info) * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = buf.data() + png_get_rowbytes(png, info) * y;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(w, h, channels == 1 ? 1 : 3);
  const int bytes = out_depth == 16 ? 2 : 1;
  const double max_value = out_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const png_byte* p = rows[y] + (static_cast<std::size_t>(x) * channels + c) * bytes;
        const unsigned v = bytes == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
        img.at(x, y, c) = v / max_value;
      }
    }
  }
  return img;
}

} // namespace gavatar
