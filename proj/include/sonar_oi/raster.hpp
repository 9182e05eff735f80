#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sonar_oi/error.hpp"
#include "sonar_oi/geometry.hpp"

namespace sonar_oi {

/// Dense row-major 2D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw InvalidArgument("Grid: negative dimensions");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }

  [[nodiscard]] int rows() const noexcept { return rows_; }
  [[nodiscard]] int cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool in_bounds(int r, int c) const noexcept {
    return r >= 0 && c >= 0 && r < rows_ && c < cols_;
  }

  T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }

  [[nodiscard]] std::vector<T>& data() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& data() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  [[nodiscard]] std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_{0};
  int cols_{0};
  std::vector<T> data_;
};

using BinaryRaster = Grid<std::uint8_t>;
using ProbabilityRaster = Grid<float>;

/// Geometry of the sonar-aligned raster shared by CFAR images, candidates and
/// synthetic images: sensor at the left-center edge, heading along +x (columns),
/// row 0 is the most positive y.
struct RasterSpec {
  int rows{256};
  int cols{128};
  double resolution{0.25};  // meters/pixel

  [[nodiscard]] Point2 pixel_center(int r, int c) const noexcept {
    return {(c + 0.5) * resolution, (0.5 * rows - r - 0.5) * resolution};
  }

  /// Pixel containing a sonar-frame point, if inside the raster.
  [[nodiscard]] std::optional<std::pair<int, int>> pixel_of(Point2 p) const noexcept {
    const double cf = std::floor(p.x / resolution);
    const double rf = std::floor(0.5 * rows - p.y / resolution);
    if (cf < 0 || rf < 0 || cf >= cols || rf >= rows) return std::nullopt;
    return std::make_pair(static_cast<int>(rf), static_cast<int>(cf));
  }

  friend bool operator==(const RasterSpec&, const RasterSpec&) = default;
};

}  // namespace sonar_oi
