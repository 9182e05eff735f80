#pragma once

#include <cstdint>

#include "sonar_oi/geometry.hpp"
#include "sonar_oi/raster.hpp"
#include "sonar_oi/sonar_sim.hpp"

namespace sonar_oi {

struct CfarConfig {
  int train_cells{12};  // per side
  int guard_cells{4};   // per side
  double threshold_factor{5.0};
  double min_intensity{0.0};

  void validate() const;
  [[nodiscard]] int footprint() const noexcept { return 2 * (train_cells + guard_cells) + 1; }
};

struct DetectionImage {
  BinaryRaster detections;  // same layout as the source polar image (range bins x beams)
  SonarSpec spec;

  [[nodiscard]] std::size_t count() const noexcept;
};

/// Smallest-of cell-averaging CFAR. Four 1-D training windows (leading and lagging along
/// range and along bearing) sit beyond the guard cells; the noise estimate is the smallest
/// of the complete windows' means. A cell fires when it exceeds both
/// threshold_factor * noise and min_intensity. Cells with no complete window never fire.
[[nodiscard]] DetectionImage soca_cfar(const SonarPolarImage& img, const CfarConfig& cfg);
[[nodiscard]] DetectionImage soca_cfar(const Grid<float>& intensities, const SonarSpec& spec, const CfarConfig& cfg);

/// Each detection's (range-bin center, beam bearing) mapped to sonar-frame Cartesian with zero elevation.
[[nodiscard]] PointCloud2D detections_to_cloud(const DetectionImage& det);

/// Monte-Carlo threshold calibration: the threshold factor whose false-alarm fraction on
/// unit-scale Rayleigh images equals the design rate.
[[nodiscard]] double calibrate_threshold(int train_cells, int guard_cells, double design_pfa, int rows, int cols,
                                         int n_images, std::uint64_t seed);

/// Unit-scale Rayleigh noise image.
[[nodiscard]] Grid<float> rayleigh_image(int rows, int cols, double scale, std::uint64_t seed);

}  // namespace sonar_oi
