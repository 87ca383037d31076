#pragma once

// Synthetic bi-temporal scenes, tiling/splitting and the on-disk dataset.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/image_io.hpp"
#include "mgcr/scene.hpp"
#include "mgcr/tensor.hpp"
#include "mgcr/text.hpp"

namespace mgcr::data {

struct ScenePair {
  std::string id;
  io::RgbImage image1, image2;
  std::vector<std::uint8_t> mask;  // 0/1, row-major
  SceneTruth truth1, truth2;
  text::CaptionRecord caption1, caption2;

  std::size_t width() const { return image1.width; }
  std::size_t height() const { return image1.height; }
};

// Pure function of (seed, cfg). Building corners and sizes lie on a 4-pixel grid.
ScenePair generate_scene_pair(std::uint64_t seed, const DataConfig& cfg, const std::string& id = "pair");

// 1 where any building covers the pixel.
std::vector<std::uint8_t> rasterize_footprints(const SceneTruth& truth);
// Pixels covered in exactly one of the two epochs.
std::vector<std::uint8_t> change_mask(const SceneTruth& a, const SceneTruth& b);

// Buildings clipped to the window, in window coordinates.
SceneTruth crop_truth(const SceneTruth& truth, std::size_t x0, std::size_t y0, std::size_t size);
io::RgbImage crop_rgb(const io::RgbImage& img, std::size_t x0, std::size_t y0, std::size_t size);
std::vector<std::uint8_t> crop_mask(const std::vector<std::uint8_t>& mask, std::size_t width,
                                    std::size_t x0, std::size_t y0, std::size_t size);

struct TileOrigin {
  std::size_t x = 0, y = 0;
};

// Non-overlapping grid, row-major order. Throws ConfigError when a side is not
// divisible by the tile size.
std::vector<TileOrigin> tile_grid(std::size_t width, std::size_t height, std::size_t tile);
// Cuts a scene pair into tiles whose truths and captions are re-derived per tile.
std::vector<ScenePair> tile_pair(const ScenePair& pair, std::size_t tile);

struct SplitManifest {
  std::array<std::vector<std::string>, 3> parts;  // train, val, test
  std::array<double, 3> ratios{};
  std::uint64_t seed = 0;

  const std::vector<std::string>& train() const { return parts[0]; }
  const std::vector<std::string>& val() const { return parts[1]; }
  const std::vector<std::string>& test() const { return parts[2]; }
};

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

// Largest-remainder allocation of n items to the ratios; ties go to the
// earlier part.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios);
// Seeded shuffle followed by split_sizes.
SplitManifest split_ids(std::vector<std::string> ids, const std::array<double, 3>& ratios,
                        std::uint64_t seed);

// Generates cfg.pairs scenes, tiles, splits and writes the directory tree plus
// split.tsv under `root`. Returns the manifest.
SplitManifest generate_dataset(const std::filesystem::path& root, const DataConfig& cfg);

void write_pair(const std::filesystem::path& dir, const ScenePair& pair);

struct PairSample {
  std::string id;
  io::RgbImage image1, image2;
  std::vector<std::uint8_t> mask;
  std::vector<text::CaptionRecord> captions;  // temporal_index 1 then 2

  const text::CaptionRecord& caption(int temporal_index) const;
};

PairSample load_pair(const std::filesystem::path& dir);
// Pairs of one split directory, sorted by id.
std::vector<PairSample> load_split(const std::filesystem::path& root, const std::string& split);
void write_manifest(const std::filesystem::path& path, const SplitManifest& m);
SplitManifest read_manifest(const std::filesystem::path& path);

// [H x W x 3] tensor of pixel / 255.
ag::Tensor image_tensor(const io::RgbImage& img);

}  // namespace mgcr::data
