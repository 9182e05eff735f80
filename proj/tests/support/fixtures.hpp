#pragma once

#include <random>

#include "sonar_oi/geometry.hpp"

namespace fixtures {

// Two seawall faces meeting at a right angle, plus a short pier stub so that
// translation along either face is observable.
inline sonar_oi::PointCloud2D seawall_corner_cloud(double spacing) {
  sonar_oi::PointCloud2D c;
  c.frame_id = "fixture";
  for (double s = 0.0; s <= 20.0 + 1e-9; s += spacing) c.points.push_back({s, 0.0});
  for (double s = spacing; s <= 15.0 + 1e-9; s += spacing) c.points.push_back({0.0, s});
  for (double s = spacing; s <= 4.0 + 1e-9; s += spacing) c.points.push_back({10.0, s});
  return c;
}

inline sonar_oi::PointCloud2D jitter(const sonar_oi::PointCloud2D& c, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  sonar_oi::PointCloud2D out = c;
  for (auto& p : out.points) {
    p.x += n(rng);
    p.y += n(rng);
  }
  return out;
}

}  // namespace fixtures
