#include "mgcr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "mgcr/error.hpp"

namespace mgcr::io {
namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PgmCursor {
  std::span<const std::uint8_t> b;
  std::string source;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos] - '0');
      if (v > 1u << 20) throw ParseError(source + ": " + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw ParseError(source + ": expected " + what, start);
    return v;
  }
};

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height)
    throw ContractError("write_pgm: pixel count does not match " + std::to_string(img.width) + "x" +
                        std::to_string(img.height));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

GrayImage parse_pgm(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw ParseError(source + ": missing P5 magic", 0);
  PgmCursor c{bytes, source, 2};
  GrayImage img;
  img.width = c.number("width");
  img.height = c.number("height");
  const std::size_t maxval_at = c.pos;
  const std::size_t maxval = c.number("maxval");
  if (maxval != 255) throw ParseError(source + ": only maxval 255 is supported", maxval_at);
  if (c.pos >= bytes.size() || !std::isspace(bytes[c.pos]))
    throw ParseError(source + ": expected whitespace after header", c.pos);
  ++c.pos;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - c.pos < n)
    throw ParseError(source + ": pixel data truncated (" + std::to_string(bytes.size() - c.pos) + " of " +
                         std::to_string(n) + " bytes)",
                     bytes.size());
  if (bytes.size() - c.pos > n) throw ParseError(source + ": trailing bytes after pixel data", c.pos + n);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(c.pos), bytes.end());
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  return parse_pgm(read_bytes(path), path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  if (img.pixels.size() != img.width * img.height * 3)
    throw ContractError("write_png: pixel count does not match image size");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path.string());
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(fp, &std::fclose);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot read " + path.string());
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(fp, &std::fclose);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ParseError(path.string() + ": not a PNG file", 0);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  RgbImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": malformed PNG data", static_cast<std::size_t>(std::ftell(fp)));
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.pixels.resize(img.width * img.height * 3);
  for (std::size_t y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + y * img.width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::uint8_t prob_to_gray(double p) {
  const double v = std::floor(p * 255.0 + 0.5);
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(v);
}

GrayImage prob_image(std::span<const double> prob, std::size_t width, std::size_t height) {
  if (prob.size() != width * height) throw ContractError("prob_image: size mismatch");
  GrayImage g{width, height, std::vector<std::uint8_t>(prob.size())};
  std::transform(prob.begin(), prob.end(), g.pixels.begin(), prob_to_gray);
  return g;
}

GrayImage mask_image(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height) {
  if (mask.size() != width * height) throw ContractError("mask_image: size mismatch");
  GrayImage g{width, height, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) g.pixels[i] = mask[i] ? 255 : 0;
  return g;
}

std::vector<std::uint8_t> mask_from_image(const GrayImage& img) {
  std::vector<std::uint8_t> m(img.pixels.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.pixels[i] ? 1 : 0;
  return m;
}

GrayImage heatmap_image(std::span<const double> values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw ContractError("heatmap_image: size mismatch");
  GrayImage g{width, height, std::vector<std::uint8_t>(values.size(), 0)};
  if (values.empty()) return g;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return g;
  for (std::size_t i = 0; i < values.size(); ++i) g.pixels[i] = prob_to_gray((values[i] - *lo) / range);
  return g;
}

}  // namespace mgcr::io
