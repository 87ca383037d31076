#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include "mgcr/data.hpp"
#include "mgcr/error.hpp"
#include "mgcr/image_io.hpp"
#include "mgcr/nn.hpp"

using namespace mgcr;
namespace fs = std::filesystem;

namespace {

// Per pixel: covered by an odd number of epochs, checked building by building.
std::vector<std::uint8_t> xor_oracle(const SceneTruth& a, const SceneTruth& b) {
  std::vector<std::uint8_t> m(a.width * a.height);
  const auto covered = [](const SceneTruth& t, std::size_t x, std::size_t y) {
    for (const auto& r : t.buildings)
      if (x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h) return true;
    return false;
  };
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x) m[y * a.width + x] = covered(a, x, y) != covered(b, x, y);
  return m;
}

long caption_count(const std::string& text) {
  static const std::regex re(R"(There (?:is|are) (\d+|no) buildings?)");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return -1;
  return m[1] == "no" ? 0 : std::stol(m[1]);
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "mgcr_data_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Scene, SameSeedIsBitwiseIdentical) {
  const DataConfig cfg;
  const auto a = data::generate_scene_pair(9, cfg), b = data::generate_scene_pair(9, cfg);
  EXPECT_EQ(a.image1, b.image1);
  EXPECT_EQ(a.image2, b.image2);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.caption1.raw_text, b.caption1.raw_text);
  EXPECT_NE(data::generate_scene_pair(10, cfg).image1, a.image1);
}

TEST(Scene, MaskEqualsFootprintXorOverSeeds) {
  const DataConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = data::generate_scene_pair(seed, cfg);
    EXPECT_EQ(p.mask, xor_oracle(p.truth1, p.truth2)) << seed;
  }
}

TEST(Scene, NoChangeProbabilityGivesEmptyMask) {
  DataConfig cfg;
  cfg.change_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = data::generate_scene_pair(seed, cfg);
    EXPECT_EQ(p.truth1.buildings.size(), p.truth2.buildings.size());
    for (auto v : p.mask) ASSERT_EQ(v, 0);
  }
}

TEST(Scene, BuildingsInsideCanvasAndCaptionsCountThem) {
  const DataConfig cfg;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = data::generate_scene_pair(seed, cfg);
    for (const auto* t : {&p.truth1, &p.truth2})
      for (const auto& b : t->buildings) {
        EXPECT_LE(b.x + b.w, cfg.canvas);
        EXPECT_LE(b.y + b.h, cfg.canvas);
      }
    EXPECT_EQ(caption_count(p.caption1.pruned_text), long(p.truth1.buildings.size()));
    EXPECT_EQ(caption_count(p.caption2.pruned_text), long(p.truth2.buildings.size()));
  }
}

TEST(Scene, InvalidCanvasIsConfigError) {
  DataConfig cfg;
  cfg.canvas = 50;
  EXPECT_THROW(data::generate_scene_pair(1, cfg), ConfigError);
}

TEST(Tiling, LargeImageGivesSixteenTiles) {
  EXPECT_EQ(data::tile_grid(1024, 1024, 256).size(), 16u);
  DataConfig cfg;
  cfg.canvas = 1024;
  cfg.tile = 256;
  cfg.n_min = 20;
  cfg.n_max = 40;
  const auto p = data::generate_scene_pair(3, cfg);
  const auto tiles = data::tile_pair(p, 256);
  ASSERT_EQ(tiles.size(), 16u);
  std::set<std::string> ids;
  for (const auto& t : tiles) {
    ids.insert(t.id);
    EXPECT_EQ(t.width(), 256u);
    EXPECT_EQ(t.height(), 256u);
    EXPECT_EQ(t.mask, xor_oracle(t.truth1, t.truth2));
    EXPECT_EQ(caption_count(t.caption1.pruned_text), long(t.truth1.buildings.size()));
  }
  EXPECT_EQ(ids.size(), 16u);
  // the tiles cover the image exactly once
  std::size_t changed = 0;
  for (const auto& t : tiles)
    for (auto v : t.mask) changed += v;
  std::size_t total = 0;
  for (auto v : p.mask) total += v;
  EXPECT_EQ(changed, total);
}

TEST(Tiling, IndivisibleSideNamesSideAndTile) {
  try {
    data::tile_grid(1000, 1024, 256);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1000"), std::string::npos);
    EXPECT_NE(msg.find("256"), std::string::npos);
  }
}

TEST(Split, TenAtSevenTwoOne) {
  EXPECT_EQ(data::split_sizes(10, {7, 2, 1}), (std::array<std::size_t, 3>{7, 2, 1}));
  EXPECT_EQ(data::split_sizes(200, {7, 2, 1}), (std::array<std::size_t, 3>{140, 40, 20}));
  EXPECT_EQ(data::split_sizes(11, {7, 2, 1}), (std::array<std::size_t, 3>{8, 2, 1}));
  EXPECT_EQ(data::split_sizes(3, {1, 1, 1}), (std::array<std::size_t, 3>{1, 1, 1}));
  EXPECT_EQ(data::split_sizes(2, {1, 1, 1}), (std::array<std::size_t, 3>{1, 1, 0}));
}

TEST(Split, PartitionsAndIsDeterministic) {
  nn::Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = rng.below(60);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("t" + std::to_string(i));
    const std::array<double, 3> ratios{rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0.1, 5)};
    const auto m = data::split_ids(ids, ratios, trial);
    const auto sizes = data::split_sizes(n, ratios);
    std::set<std::string> seen;
    for (std::size_t s = 0; s < 3; ++s) {
      EXPECT_EQ(m.parts[s].size(), sizes[s]);
      for (const auto& id : m.parts[s]) EXPECT_TRUE(seen.insert(id).second);
    }
    EXPECT_EQ(seen, std::set<std::string>(ids.begin(), ids.end()));
    EXPECT_EQ(data::split_ids(ids, ratios, trial).parts, m.parts);
  }
}

TEST(Images, ProbabilityRoundsHalfUp) {
  EXPECT_EQ(io::prob_to_gray(0.5), 128);
  EXPECT_EQ(io::prob_to_gray(0.0), 0);
  EXPECT_EQ(io::prob_to_gray(1.0), 255);
  EXPECT_EQ(io::prob_to_gray(-0.2), 0);
  EXPECT_EQ(io::prob_to_gray(1.7), 255);
}

TEST(Images, MaskPgmRoundTripOverSeeds) {
  const auto dir = fresh_dir("pgm");
  nn::Rng rng(1);
  for (int seed = 0; seed < 100; ++seed) {
    const std::size_t w = 1 + rng.below(40), h = 1 + rng.below(40);
    std::vector<std::uint8_t> mask(w * h);
    for (auto& v : mask) v = rng.bernoulli(0.3);
    const auto path = dir / "m.pgm";
    io::write_pgm(path, io::mask_image(mask, w, h));
    const auto back = io::read_pgm(path);
    EXPECT_EQ(back.width, w);
    EXPECT_EQ(back.height, h);
    EXPECT_EQ(io::mask_from_image(back), mask);
    for (auto v : back.pixels) EXPECT_TRUE(v == 0 || v == 255);
  }
}

TEST(Images, PngRoundTrip) {
  const auto p = data::generate_scene_pair(2, DataConfig{});
  const auto path = fresh_dir("png") / "t1.png";
  io::write_png(path, p.image1);
  EXPECT_EQ(io::read_png(path), p.image1);
  std::ofstream(path, std::ios::binary) << "not a png";
  EXPECT_THROW(io::read_png(path), Error);
}

TEST(Images, MalformedPgmReportsOffset) {
  const auto parse = [](const std::string& s) {
    return io::parse_pgm(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(parse("P5\n# c\n2 1\n255\n\x01\x02").pixels, (std::vector<std::uint8_t>{1, 2}));
  try {
    parse("P6\n2 1\n255\nab");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  try {
    parse("P5\n2 2\n255\nabc");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 14u);
  }
  EXPECT_THROW(parse("P5\n2 x\n255\nab"), ParseError);
  EXPECT_THROW(parse("P5\n2 1\n65535\nab"), ParseError);
}

TEST(Images, HeatmapIsMinMaxNormalized) {
  const std::vector<double> v{-1.0, 0.0, 3.0};
  EXPECT_EQ(io::heatmap_image(v, 3, 1).pixels, (std::vector<std::uint8_t>{0, 64, 255}));
  const std::vector<double> c{2.0, 2.0};
  EXPECT_EQ(io::heatmap_image(c, 2, 1).pixels, (std::vector<std::uint8_t>{0, 0}));
}

TEST(Dataset, GenerateLoadAndManifest) {
  const auto root = fresh_dir("dataset");
  DataConfig cfg;
  cfg.pairs = 10;
  const auto m = data::generate_dataset(root, cfg);
  EXPECT_EQ(m.train().size(), 7u);
  EXPECT_EQ(m.val().size(), 2u);
  EXPECT_EQ(m.test().size(), 1u);
  EXPECT_EQ(data::read_manifest(root / "split.tsv").parts, m.parts);
  const auto val = data::load_split(root, "val");
  ASSERT_EQ(val.size(), 2u);
  EXPECT_LT(val[0].id, val[1].id);
  for (const auto& p : val) {
    EXPECT_EQ(p.image1.width, 64u);
    EXPECT_EQ(p.mask.size(), 64u * 64u);
    EXPECT_EQ(p.caption(1).temporal_index, 1);
    EXPECT_EQ(p.caption(2).temporal_index, 2);
  }
  // regenerating elsewhere gives the same bytes
  const auto again = fresh_dir("dataset2");
  data::generate_dataset(again, cfg);
  const auto a = data::load_split(again, "val");
  EXPECT_EQ(a[0].image1, val[0].image1);
  EXPECT_EQ(a[1].mask, val[1].mask);
  EXPECT_THROW(data::generate_dataset(root, cfg), IoError);
  EXPECT_THROW(data::load_split(root / "missing", "val"), Error);
}

TEST(Dataset, ImageTensorScales) {
  io::RgbImage img{1, 1, {0, 51, 255}};
  const auto t = data::image_tensor(img);
  EXPECT_EQ(t.shape(), (ag::Shape{1, 1, 3}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], 51.0 / 255.0);
  EXPECT_EQ(t[2], 1.0);
}
