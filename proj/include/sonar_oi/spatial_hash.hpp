#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "sonar_oi/geometry.hpp"

namespace sonar_oi {

/// Uniform hash grid over a fixed point set (held by reference). Nearest-neighbor queries
/// scan the ring of cells that covers the query radius.
class SpatialHash {
 public:
  SpatialHash(const std::vector<Point2>& points, double cell_size);

  struct Neighbor {
    std::size_t index;
    double distance;
  };

  /// Nearest point strictly closer than radius. Ties go to the lowest index.
  [[nodiscard]] std::optional<Neighbor> nearest(Point2 q, double radius) const;
  /// Indices of all points strictly closer than radius, ascending.
  [[nodiscard]] std::vector<std::size_t> within(Point2 q, double radius) const;
  [[nodiscard]] double cell_size() const noexcept { return cell_; }

 private:
  [[nodiscard]] static std::uint64_t key(std::int64_t ix, std::int64_t iy) noexcept {
    return (static_cast<std::uint64_t>(ix) << 32) ^ (static_cast<std::uint64_t>(iy) & 0xffffffffULL);
  }
  [[nodiscard]] std::int64_t cell_index(double v) const noexcept {
    return static_cast<std::int64_t>(std::floor(v / cell_));
  }

  const std::vector<Point2>& points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace sonar_oi
