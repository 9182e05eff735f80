#pragma once

#include <cstdint>
#include <filesystem>

#include "sonar_oi/geometry.hpp"
#include "sonar_oi/raster.hpp"
#include "sonar_oi/world.hpp"

namespace sonar_oi {

struct SonarSpec {
  double fov{deg2rad(130.0)};
  double max_range{30.0};
  int n_beams{256};
  int n_range_bins{512};
  double rate_hz{5.0};

  [[nodiscard]] double bin_width() const noexcept { return max_range / n_range_bins; }
  /// Bin centers sit at (i + 0.5) * bin_width.
  [[nodiscard]] double range_of_bin(int bin) const noexcept { return (bin + 0.5) * bin_width(); }
  /// Beams are spread uniformly from -fov/2 (beam 0) to +fov/2 (last beam).
  [[nodiscard]] double bearing_of_beam(int beam) const noexcept {
    return -0.5 * fov + fov * beam / static_cast<double>(n_beams - 1);
  }
  void validate() const;
  friend bool operator==(const SonarSpec&, const SonarSpec&) = default;
};

struct NoiseConfig {
  double speckle_sigma{0.3};
  double background_level{0.02};
  double p_second_return{0.1};
  double dropout_prob{0.05};
  double second_return_gain{0.15};  // echo amplitude relative to the primary hit
  double hit_gain{10.0};            // primary intensity = hit_gain / range

  [[nodiscard]] static NoiseConfig disabled() {
    NoiseConfig n;
    n.speckle_sigma = 0.0;
    n.background_level = 0.0;
    n.p_second_return = 0.0;
    n.dropout_prob = 0.0;
    return n;
  }
  void validate() const;
};

/// Range-by-bearing intensity grid: rows are range bins, columns are beams.
struct SonarPolarImage {
  Grid<float> intensities;
  SonarSpec spec;
  double stamp{0.0};
  Pose2 true_pose;  // simulation ground truth; never read by the estimator
};

/// Ray-casts every beam against the world and deposits echo intensity with 1/R falloff,
/// optional second returns, multiplicative speckle, dropout and Rayleigh clutter.
[[nodiscard]] SonarPolarImage render(const WorldModel& world, const Pose2& pose, const SonarSpec& spec,
                                     const NoiseConfig& noise, std::uint64_t rng_seed, double stamp = 0.0);

// Binary interchange: "SPI1", u32 rows, u32 cols, f64 fov, f64 max_range, f64 stamp,
// then rows*cols little-endian f32 in row-major order.
void write_polar_image(const std::filesystem::path& path, const SonarPolarImage& img);
[[nodiscard]] SonarPolarImage read_polar_image(const std::filesystem::path& path);

}  // namespace sonar_oi
