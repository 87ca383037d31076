#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mgcr {

// Axis-aligned building footprint in pixel units, [x, x+w) x [y, y+h).
struct Building {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;
  double fill = 0.0;  // gray level in [0, 1]

  double center_x() const { return static_cast<double>(x) + static_cast<double>(w) / 2.0; }
  double center_y() const { return static_cast<double>(y) + static_cast<double>(h) / 2.0; }
};

struct SceneTruth {
  std::vector<Building> buildings;
  std::uint64_t background_seed = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

}  // namespace mgcr
