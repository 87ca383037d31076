#pragma once

// 8-bit raster containers plus PGM (P5) and PNG readers/writers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mgcr::io {

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB
  bool operator==(const RgbImage&) const = default;
};

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
// `source` names the input in error messages.
GrayImage parse_pgm(std::span<const std::uint8_t> bytes, const std::string& source = "PGM");

void write_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png(const std::filesystem::path& path);

// Probability to gray level: floor(p * 255 + 0.5), clamped to [0, 255].
std::uint8_t prob_to_gray(double p);
GrayImage prob_image(std::span<const double> prob, std::size_t width, std::size_t height);
// 0/1 mask to 0/255 and back; any nonzero gray counts as set.
GrayImage mask_image(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height);
std::vector<std::uint8_t> mask_from_image(const GrayImage& img);
// Min-max normalization to the full gray range; constant input maps to 0.
GrayImage heatmap_image(std::span<const double> values, std::size_t width, std::size_t height);

}  // namespace mgcr::io
