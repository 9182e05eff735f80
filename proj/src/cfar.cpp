#include "sonar_oi/cfar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "sonar_oi/error.hpp"

namespace sonar_oi {
namespace {

// Visits every cell's smallest-of noise estimate; infinity when no window is complete.
template <typename Fn>
void for_each_noise_estimate(const Grid<float>& img, const CfarConfig& cfg, Fn&& fn) {
  const int rows = img.rows();
  const int cols = img.cols();
  const int g = cfg.guard_cells;
  const int t = cfg.train_cells;
  // Prefix sums along range (down columns) and along bearing (across rows).
  Grid<double> col_sum(rows + 1, cols, 0.0);
  Grid<double> row_sum(rows, cols + 1, 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      col_sum(r + 1, c) = col_sum(r, c) + img(r, c);
      row_sum(r, c + 1) = row_sum(r, c) + img(r, c);
    }
  }
  const double inv_t = 1.0 / t;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double noise = std::numeric_limits<double>::infinity();
      if (r + g + t < rows) noise = std::min(noise, (col_sum(r + g + t + 1, c) - col_sum(r + g + 1, c)) * inv_t);
      if (r - g - t >= 0) noise = std::min(noise, (col_sum(r - g, c) - col_sum(r - g - t, c)) * inv_t);
      if (c + g + t < cols) noise = std::min(noise, (row_sum(r, c + g + t + 1) - row_sum(r, c + g + 1)) * inv_t);
      if (c - g - t >= 0) noise = std::min(noise, (row_sum(r, c - g) - row_sum(r, c - g - t)) * inv_t);
      fn(r, c, noise);
    }
  }
}

}  // namespace

void CfarConfig::validate() const {
  if (train_cells < 1) throw InvalidArgument("CfarConfig: train_cells must be >= 1");
  if (guard_cells < 0) throw InvalidArgument("CfarConfig: guard_cells must be >= 0");
  if (!(threshold_factor > 0.0)) throw InvalidArgument("CfarConfig: threshold_factor must be positive");
}

std::size_t DetectionImage::count() const noexcept {
  return static_cast<std::size_t>(std::count(detections.data().begin(), detections.data().end(), 1));
}

DetectionImage soca_cfar(const SonarPolarImage& img, const CfarConfig& cfg) {
  return soca_cfar(img.intensities, img.spec, cfg);
}

DetectionImage soca_cfar(const Grid<float>& intensities, const SonarSpec& spec, const CfarConfig& cfg) {
  cfg.validate();
  if (intensities.rows() <= cfg.footprint() || intensities.cols() <= cfg.footprint()) {
    throw InvalidArgument("soca_cfar: CFAR window is larger than the image");
  }
  DetectionImage out;
  out.spec = spec;
  out.detections = BinaryRaster(intensities.rows(), intensities.cols(), 0);
  for_each_noise_estimate(intensities, cfg, [&](int r, int c, double noise) {
    const double v = intensities(r, c);
    if (std::isfinite(noise) && v > cfg.threshold_factor * noise && v > cfg.min_intensity) out.detections(r, c) = 1;
  });
  return out;
}

PointCloud2D detections_to_cloud(const DetectionImage& det) {
  PointCloud2D cloud;
  cloud.frame_id = "sonar";
  for (int r = 0; r < det.detections.rows(); ++r) {
    for (int c = 0; c < det.detections.cols(); ++c) {
      if (!det.detections(r, c)) continue;
      const Point3 p = spherical_to_cartesian({det.spec.range_of_bin(r), det.spec.bearing_of_beam(c), 0.0, 1.0});
      cloud.points.push_back({p.x, p.y});
    }
  }
  return cloud;
}

Grid<float> rayleigh_image(int rows, int cols, double scale, std::uint64_t seed) {
  Grid<float> img(rows, cols, 0.0f);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& v : img.data()) v = static_cast<float>(scale * std::sqrt(-2.0 * std::log(1.0 - unit(rng))));
  return img;
}

double calibrate_threshold(int train_cells, int guard_cells, double design_pfa, int rows, int cols, int n_images,
                           std::uint64_t seed) {
  if (!(design_pfa > 0.0 && design_pfa < 1.0)) throw InvalidArgument("calibrate_threshold: pfa must lie in (0, 1)");
  if (n_images < 1) throw InvalidArgument("calibrate_threshold: need at least one image");
  CfarConfig cfg;
  cfg.train_cells = train_cells;
  cfg.guard_cells = guard_cells;
  cfg.validate();
  std::vector<float> ratios;
  ratios.reserve(static_cast<std::size_t>(rows) * cols * n_images);
  std::size_t total = 0;
  for (int i = 0; i < n_images; ++i) {
    const Grid<float> img = rayleigh_image(rows, cols, 1.0, seed + static_cast<std::uint64_t>(i));
    for_each_noise_estimate(img, cfg, [&](int r, int c, double noise) {
      ++total;
      if (std::isfinite(noise) && noise > 0.0) ratios.push_back(static_cast<float>(img(r, c) / noise));
    });
  }
  // Cells without a complete window never fire, so they still count in the denominator.
  const auto k = static_cast<std::size_t>(std::floor(design_pfa * static_cast<double>(total)));
  if (k == 0 || k >= ratios.size()) throw InvalidArgument("calibrate_threshold: too few samples for this pfa");
  std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() - k), ratios.end());
  return ratios[ratios.size() - k];
}

}  // namespace sonar_oi
