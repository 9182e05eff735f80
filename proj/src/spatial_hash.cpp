#include "sonar_oi/spatial_hash.hpp"

#include <algorithm>

#include "sonar_oi/error.hpp"

namespace sonar_oi {

SpatialHash::SpatialHash(const std::vector<Point2>& points, double cell_size) : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) throw InvalidArgument("SpatialHash: cell size must be positive");
  cells_.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    cells_[key(cell_index(points[i].x), cell_index(points[i].y))].push_back(i);
  }
}

std::optional<SpatialHash::Neighbor> SpatialHash::nearest(Point2 q, double radius) const {
  const std::int64_t cx = cell_index(q.x);
  const std::int64_t cy = cell_index(q.y);
  // Rings beyond the first are needed only when radius exceeds the cell size.
  const auto reach = static_cast<std::int64_t>(std::ceil(radius / cell_));
  std::optional<Neighbor> best;
  double best_d2 = radius * radius;
  for (std::int64_t dx = -reach; dx <= reach; ++dx) {
    for (std::int64_t dy = -reach; dy <= reach; ++dy) {
      const auto it = cells_.find(key(cx + dx, cy + dy));
      if (it == cells_.end()) continue;
      for (std::size_t idx : it->second) {
        const double ex = points_[idx].x - q.x;
        const double ey = points_[idx].y - q.y;
        const double d2 = ex * ex + ey * ey;
        if (d2 < best_d2 || (best && d2 == best_d2 && idx < best->index)) {
          best_d2 = d2;
          best = Neighbor{idx, 0.0};
        }
      }
    }
  }
  if (best) best->distance = std::sqrt(best_d2);
  return best;
}

std::vector<std::size_t> SpatialHash::within(Point2 q, double radius) const {
  const std::int64_t cx = cell_index(q.x);
  const std::int64_t cy = cell_index(q.y);
  const auto reach = static_cast<std::int64_t>(std::ceil(radius / cell_));
  std::vector<std::size_t> out;
  for (std::int64_t dx = -reach; dx <= reach; ++dx) {
    for (std::int64_t dy = -reach; dy <= reach; ++dy) {
      const auto it = cells_.find(key(cx + dx, cy + dy));
      if (it == cells_.end()) continue;
      for (std::size_t idx : it->second) {
        if (distance(points_[idx], q) < radius) out.push_back(idx);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sonar_oi
