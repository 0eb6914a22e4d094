#pragma once

#include <cstdint>
#include <vector>

#include "cropstress/core/error.hpp"

namespace cropstress::core {

// Dense raster plane with a per-pixel validity mask. Invalid pixels keep a
// value slot but must never be consumed as numbers.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0, bool v = true)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * h, fill),
        valid(static_cast<std::size_t>(w) * h, v ? 1 : 0) {
    require(w >= 1 && h >= 1, ErrorKind::config, "plane dimensions must be >= 1");
  }

  std::size_t index(int x, int y) const {
    require(x >= 0 && x < width && y >= 0 && y < height, ErrorKind::config,
            "pixel coordinates out of bounds");
    return static_cast<std::size_t>(y) * width + x;
  }

  double at(int x, int y) const { return values[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }

  void set(int x, int y, double value, bool v = true) {
    const std::size_t i = index(x, y);
    values[i] = value;
    valid[i] = v ? 1 : 0;
  }

  void invalidate(int x, int y) { valid[index(x, y)] = 0; }

  std::size_t size() const { return values.size(); }

  std::int64_t count_valid() const {
    std::int64_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }

  bool same_shape(const Plane& o) const { return width == o.width && height == o.height; }
};

}  // namespace cropstress::core
