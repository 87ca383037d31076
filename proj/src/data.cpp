#include "mgcr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mgcr/error.hpp"
#include "mgcr/nn.hpp"

namespace mgcr::data {
namespace fs = std::filesystem;
namespace {

constexpr std::size_t kGrid = 4;
constexpr std::size_t kGap = 4;
constexpr std::size_t kNoiseCell = 16;
constexpr std::array<std::size_t, 3> kSides{8, 12, 16};
constexpr int kPlacementTries = 64;

// Sentences a captioner might add that carry nothing about buildings.
constexpr std::array<const char*, 4> kDistractors{
    "The image was captured on a clear day.",
    "Some vegetation is visible near the edges.",
    "The colors appear natural and well balanced.",
    "This is an aerial view taken from above.",
};

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

bool overlaps(const Building& a, const Building& b, std::size_t gap) {
  return a.x < b.x + b.w + gap && b.x < a.x + a.w + gap && a.y < b.y + b.h + gap && b.y < a.y + a.h + gap;
}

bool place(nn::Rng& rng, std::size_t canvas, const std::vector<Building>& avoid, Building& out) {
  for (int t = 0; t < kPlacementTries; ++t) {
    Building b;
    b.w = kSides[rng.below(kSides.size())];
    b.h = kSides[rng.below(kSides.size())];
    b.x = kGrid * rng.below((canvas - b.w) / kGrid + 1);
    b.y = kGrid * rng.below((canvas - b.h) / kGrid + 1);
    b.fill = rng.uniform(0.7, 0.95);
    if (std::none_of(avoid.begin(), avoid.end(), [&](const Building& o) { return overlaps(b, o, kGap); })) {
      out = b;
      return true;
    }
  }
  return false;
}

// Bilinear value noise with smoothstep weights on a kNoiseCell lattice.
std::vector<double> value_noise(std::uint64_t seed, std::size_t width, std::size_t height) {
  nn::Rng rng(seed);
  const std::size_t gw = width / kNoiseCell + 2, gh = height / kNoiseCell + 2;
  std::vector<double> lattice(gw * gh);
  for (double& v : lattice) v = rng.uniform();
  const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  std::vector<double> out(width * height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t cx = x / kNoiseCell, cy = y / kNoiseCell;
      const double fx = smooth(static_cast<double>(x % kNoiseCell) / kNoiseCell);
      const double fy = smooth(static_cast<double>(y % kNoiseCell) / kNoiseCell);
      const double a = lattice[cy * gw + cx], b = lattice[cy * gw + cx + 1];
      const double c = lattice[(cy + 1) * gw + cx], d = lattice[(cy + 1) * gw + cx + 1];
      const double top = a + (b - a) * fx, bottom = c + (d - c) * fx;
      out[y * width + x] = top + (bottom - top) * fy;
    }
  return out;
}

io::RgbImage render(const SceneTruth& truth, const std::array<double, 3>& tint,
                    const std::vector<double>& texture, double texture_amp, double noise_amp,
                    nn::Rng& rng) {
  const std::size_t w = truth.width, h = truth.height;
  std::vector<double> px(w * h * 3);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) px[i * 3 + c] = tint[c] + texture_amp * (2.0 * texture[i] - 1.0);
  for (const auto& b : truth.buildings)
    for (std::size_t y = b.y; y < b.y + b.h; ++y)
      for (std::size_t x = b.x; x < b.x + b.w; ++x) {
        double* p = &px[(y * w + x) * 3];
        p[0] = b.fill;
        p[1] = b.fill * 0.97;
        p[2] = b.fill * 0.92;
      }
  io::RgbImage img{w, h, std::vector<std::uint8_t>(px.size())};
  for (std::size_t i = 0; i < px.size(); ++i) img.pixels[i] = quantize(px[i] + noise_amp * rng.uniform(-1.0, 1.0));
  return img;
}

text::CaptionRecord make_caption(const SceneTruth& truth, const std::string& image_id, int temporal_index) {
  text::CaptionRecord r;
  r.image_id = image_id;
  r.temporal_index = temporal_index;
  const std::uint64_t h = fnv1a64(image_id);
  const std::string extra = kDistractors[h % kDistractors.size()];
  const std::string core = text::synthesize_caption(truth);
  r.raw_text = (h >> 8) % 2 == 0 ? extra + " " + core : core + " " + extra;
  r.pruned_text = text::prune_caption(r.raw_text);
  return r;
}

std::string pair_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04zu", i);
  return buf;
}

}  // namespace

ScenePair generate_scene_pair(std::uint64_t seed, const DataConfig& cfg, const std::string& id) {
  cfg.validate();
  const std::size_t canvas = cfg.canvas;
  nn::Rng rng(seed);
  ScenePair p;
  p.id = id;

  SceneTruth t1;
  t1.width = t1.height = canvas;
  t1.background_seed = rng.next();
  const std::size_t n1 = cfg.n_min + rng.below(cfg.n_max - cfg.n_min + 1);
  for (std::size_t i = 0; i < n1; ++i) {
    Building b;
    if (place(rng, canvas, t1.buildings, b)) t1.buildings.push_back(b);
  }

  SceneTruth t2 = t1;
  t2.buildings.clear();
  for (const auto& b : t1.buildings)
    if (!rng.bernoulli(cfg.change_prob)) t2.buildings.push_back(b);
  std::size_t additions = 0;
  for (std::size_t i = 0; i < t1.buildings.size(); ++i) additions += rng.bernoulli(cfg.change_prob) ? 1 : 0;
  // New buildings keep clear of every epoch-1 footprint, removed ones included.
  std::vector<Building> avoid = t1.buildings;
  for (std::size_t i = 0; i < additions; ++i) {
    Building b;
    if (!place(rng, canvas, avoid, b)) continue;
    avoid.push_back(b);
    t2.buildings.push_back(b);
  }

  const std::array<double, 3> tint{rng.uniform(0.25, 0.4), rng.uniform(0.3, 0.45), rng.uniform(0.2, 0.35)};
  const auto texture = value_noise(t1.background_seed, canvas, canvas);
  p.image1 = render(t1, tint, texture, cfg.texture_amp, cfg.noise_amp, rng);
  p.image2 = render(t2, tint, texture, cfg.texture_amp, cfg.noise_amp, rng);
  p.mask = change_mask(t1, t2);
  p.caption1 = make_caption(t1, id + "_t1", 1);
  p.caption2 = make_caption(t2, id + "_t2", 2);
  p.truth1 = std::move(t1);
  p.truth2 = std::move(t2);
  return p;
}

std::vector<std::uint8_t> rasterize_footprints(const SceneTruth& truth) {
  std::vector<std::uint8_t> m(truth.width * truth.height, 0);
  for (const auto& b : truth.buildings) {
    if (b.x + b.w > truth.width || b.y + b.h > truth.height)
      throw ContractError("building extends outside the canvas");
    for (std::size_t y = b.y; y < b.y + b.h; ++y)
      std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(y * truth.width + b.x), b.w, std::uint8_t{1});
  }
  return m;
}

std::vector<std::uint8_t> change_mask(const SceneTruth& a, const SceneTruth& b) {
  if (a.width != b.width || a.height != b.height) throw ContractError("change_mask: canvas sizes differ");
  auto m = rasterize_footprints(a);
  const auto other = rasterize_footprints(b);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] ^= other[i];
  return m;
}

SceneTruth crop_truth(const SceneTruth& truth, std::size_t x0, std::size_t y0, std::size_t size) {
  SceneTruth out;
  out.width = out.height = size;
  out.background_seed = truth.background_seed;
  for (const auto& b : truth.buildings) {
    const std::size_t l = std::max(b.x, x0), r = std::min(b.x + b.w, x0 + size);
    const std::size_t t = std::max(b.y, y0), d = std::min(b.y + b.h, y0 + size);
    if (l >= r || t >= d) continue;
    out.buildings.push_back(Building{l - x0, t - y0, r - l, d - t, b.fill});
  }
  return out;
}

io::RgbImage crop_rgb(const io::RgbImage& img, std::size_t x0, std::size_t y0, std::size_t size) {
  io::RgbImage out{size, size, std::vector<std::uint8_t>(size * size * 3)};
  for (std::size_t y = 0; y < size; ++y) {
    const auto src = img.pixels.begin() + static_cast<std::ptrdiff_t>(((y0 + y) * img.width + x0) * 3);
    std::copy(src, src + static_cast<std::ptrdiff_t>(size * 3), out.pixels.begin() + static_cast<std::ptrdiff_t>(y * size * 3));
  }
  return out;
}

std::vector<std::uint8_t> crop_mask(const std::vector<std::uint8_t>& mask, std::size_t width,
                                    std::size_t x0, std::size_t y0, std::size_t size) {
  std::vector<std::uint8_t> out(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) out[y * size + x] = mask[(y0 + y) * width + x0 + x];
  return out;
}

std::vector<TileOrigin> tile_grid(std::size_t width, std::size_t height, std::size_t tile) {
  if (tile == 0) throw ConfigError("tile size must be positive");
  if (width % tile != 0) throw ConfigError("image width " + std::to_string(width) + " is not divisible by tile size " + std::to_string(tile));
  if (height % tile != 0) throw ConfigError("image height " + std::to_string(height) + " is not divisible by tile size " + std::to_string(tile));
  std::vector<TileOrigin> out;
  for (std::size_t y = 0; y < height; y += tile)
    for (std::size_t x = 0; x < width; x += tile) out.push_back({x, y});
  return out;
}

std::vector<ScenePair> tile_pair(const ScenePair& pair, std::size_t tile) {
  const auto origins = tile_grid(pair.width(), pair.height(), tile);
  std::vector<ScenePair> out;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const auto [x, y] = origins[i];
    ScenePair t;
    if (origins.size() == 1) {
      t.id = pair.id;
    } else {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%02zu", i);
      t.id = pair.id + suffix;
    }
    t.image1 = crop_rgb(pair.image1, x, y, tile);
    t.image2 = crop_rgb(pair.image2, x, y, tile);
    t.mask = crop_mask(pair.mask, pair.width(), x, y, tile);
    t.truth1 = crop_truth(pair.truth1, x, y, tile);
    t.truth2 = crop_truth(pair.truth2, x, y, tile);
    t.caption1 = make_caption(t.truth1, t.id + "_t1", 1);
    t.caption2 = make_caption(t.truth2, t.id + "_t2", 2);
    out.push_back(std::move(t));
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0) || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
    throw ConfigError("split ratios must be non-negative with a positive sum");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * ratios[i] / total;
    sizes[i] = static_cast<std::size_t>(std::floor(quota));
    frac[i] = quota - std::floor(quota);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

SplitManifest split_ids(std::vector<std::string> ids, const std::array<double, 3>& ratios,
                        std::uint64_t seed) {
  nn::Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  const auto sizes = split_sizes(ids.size(), ratios);
  SplitManifest m;
  m.ratios = ratios;
  m.seed = seed;
  auto it = ids.begin();
  for (std::size_t s = 0; s < 3; ++s) {
    m.parts[s].assign(it, it + static_cast<std::ptrdiff_t>(sizes[s]));
    it += static_cast<std::ptrdiff_t>(sizes[s]);
  }
  return m;
}

void write_pair(const fs::path& dir, const ScenePair& pair) {
  fs::create_directories(dir);
  io::write_png(dir / "t1.png", pair.image1);
  io::write_png(dir / "t2.png", pair.image2);
  io::write_pgm(dir / "mask.pgm", io::mask_image(pair.mask, pair.width(), pair.height()));
  text::write_captions(dir / "captions.jsonl", {pair.caption1, pair.caption2});
}

SplitManifest generate_dataset(const fs::path& root, const DataConfig& cfg) {
  cfg.validate();
  for (const char* s : kSplitNames)
    if (fs::exists(root / s) && !fs::is_empty(root / s))
      throw IoError("refusing to overwrite existing dataset split " + (root / s).string());
  nn::Rng seeds(cfg.data_seed);
  std::vector<ScenePair> tiles;
  for (std::size_t i = 0; i < cfg.pairs; ++i) {
    const ScenePair scene = generate_scene_pair(seeds.next(), cfg, pair_name(i));
    for (auto& t : tile_pair(scene, cfg.tile)) tiles.push_back(std::move(t));
  }
  std::vector<std::string> ids;
  for (const auto& t : tiles) ids.push_back(t.id);
  const SplitManifest m = split_ids(ids, cfg.split, cfg.data_seed);
  std::map<std::string, const char*> where;
  for (std::size_t s = 0; s < 3; ++s)
    for (const auto& id : m.parts[s]) where[id] = kSplitNames[s];
  for (const auto& t : tiles) write_pair(root / where.at(t.id) / t.id, t);
  fs::create_directories(root);
  write_manifest(root / "split.tsv", m);
  return m;
}

const text::CaptionRecord& PairSample::caption(int temporal_index) const {
  for (const auto& c : captions)
    if (c.temporal_index == temporal_index) return c;
  throw ContractError("pair " + id + " has no caption for epoch " + std::to_string(temporal_index));
}

PairSample load_pair(const fs::path& dir) {
  PairSample s;
  s.id = dir.filename().string();
  s.image1 = io::read_png(dir / "t1.png");
  s.image2 = io::read_png(dir / "t2.png");
  const io::GrayImage mask = io::read_pgm(dir / "mask.pgm");
  if (s.image1.width != s.image2.width || s.image1.height != s.image2.height ||
      mask.width != s.image1.width || mask.height != s.image1.height)
    throw IoError("image and mask sizes disagree in " + dir.string());
  s.mask = io::mask_from_image(mask);
  s.captions = text::read_captions(dir / "captions.jsonl");
  std::sort(s.captions.begin(), s.captions.end(),
            [](const auto& a, const auto& b) { return a.temporal_index < b.temporal_index; });
  if (s.captions.size() != 2 || s.captions[0].temporal_index != 1 || s.captions[1].temporal_index != 2)
    throw IoError("expected one caption per epoch in " + (dir / "captions.jsonl").string());
  for (auto& c : s.captions)
    if (c.pruned_text.empty()) c.pruned_text = text::prune_caption(c.raw_text);
  return s;
}

std::vector<PairSample> load_split(const fs::path& root, const std::string& split) {
  const fs::path dir = root / split;
  if (!fs::is_directory(dir)) throw IoError("dataset split directory not found: " + dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<PairSample> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_pair(d));
  return out;
}

void write_manifest(const fs::path& path, const SplitManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "pair_id\tsplit\n";
  for (std::size_t s = 0; s < 3; ++s)
    for (const auto& id : m.parts[s]) out << id << '\t' << kSplitNames[s] << '\n';
}

SplitManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  SplitManifest m;
  std::string line;
  std::size_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (header) {
      header = false;
      if (line != "pair_id\tsplit") throw ParseError(path.string() + ": bad manifest header", at);
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ": expected two tab-separated columns", at);
    const std::string split = line.substr(tab + 1);
    const auto it = std::find(kSplitNames.begin(), kSplitNames.end(), split);
    if (it == kSplitNames.end()) throw ParseError(path.string() + ": unknown split '" + split + "'", at + tab + 1);
    m.parts[static_cast<std::size_t>(it - kSplitNames.begin())].push_back(line.substr(0, tab));
  }
  return m;
}

ag::Tensor image_tensor(const io::RgbImage& img) {
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return ag::Tensor::from({img.height, img.width, 3}, std::move(v));
}

}  // namespace mgcr::data
