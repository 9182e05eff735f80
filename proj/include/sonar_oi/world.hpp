#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sonar_oi/geometry.hpp"
#include "sonar_oi/raster.hpp"

namespace sonar_oi {

enum class CellClass : std::uint8_t { Water = 0, Structure = 1, Vessel = 2 };

struct Polygon {
  std::vector<Point2> vertices;
  CellClass cls{CellClass::Structure};

  [[nodiscard]] bool contains(Point2 p) const noexcept;
  [[nodiscard]] Point2 min_corner() const noexcept;
  [[nodiscard]] Point2 max_corner() const noexcept;
};

[[nodiscard]] Polygon make_rectangle(Point2 lo, Point2 hi, CellClass cls);
[[nodiscard]] bool polygons_overlap(const Polygon& a, const Polygon& b, double margin = 0.0);
/// True when no two non-adjacent edges intersect.
[[nodiscard]] bool is_simple(const Polygon& poly);

/// Ground-truth polygon world behind the rasterized maps.
struct WorldModel {
  std::vector<Polygon> structures;
  std::vector<Polygon> vessels;
  Point2 bounds_min{0.0, 0.0};
  Point2 bounds_max{0.0, 0.0};
  Point2 start{0.0, 0.0};
  Point2 goal{0.0, 0.0};
  double channel_y_min{0.0};
  double channel_y_max{0.0};

  [[nodiscard]] bool in_bounds(Point2 p) const noexcept {
    return p.x >= bounds_min.x && p.y >= bounds_min.y && p.x <= bounds_max.x && p.y <= bounds_max.y;
  }
  /// Distance from p to the nearest polygon edge, or +inf if there are no polygons.
  [[nodiscard]] double clearance(Point2 p) const noexcept;
  [[nodiscard]] bool in_water(Point2 p) const noexcept;

  friend bool operator==(const WorldModel&, const WorldModel&) = default;
};

inline bool operator==(const Polygon& a, const Polygon& b) {
  return a.cls == b.cls && a.vertices == b.vertices;
}

struct RayHit {
  double range{0.0};       // entry distance into the first polygon
  double exit_range{0.0};  // where the ray leaves that polygon
  CellClass cls{CellClass::Structure};
  int polygon{-1};  // index into structures, then vessels
};

/// First polygon hit along a ray (structures and vessels alike) within max_range.
[[nodiscard]] std::optional<RayHit> cast_ray(const WorldModel& world, Point2 origin, double angle,
                                             double max_range);

struct GeneratorConfig {
  double width{160.0};
  double height{100.0};
  double wall_thickness{6.0};
  int pier_count{10};
  double pier_length_min{12.0};
  double pier_length_max{26.0};
  double pier_width_min{3.0};
  double pier_width_max{5.0};
  double min_pier_gap{10.0};
  double end_clearance{18.0};  // pier-free span next to the east and west walls
  int vessel_count{6};
  double vessel_length_min{8.0};
  double vessel_length_max{14.0};
  double vessel_beam_min{3.0};
  double vessel_beam_max{4.5};
  double channel_width{24.0};
  int max_attempts{2000};
};

/// Procedural marina: framed by seawalls, piers reaching in from the north and south
/// walls, moored vessels, and an east-west channel kept free of obstacles.
[[nodiscard]] WorldModel generate_marina(std::uint64_t seed, const GeneratorConfig& cfg);

struct SegmentedOverheadMap {
  Grid<std::uint8_t> grid;  // CellClass values; row index grows with +y
  double resolution{0.25};
  Point2 origin{0.0, 0.0};  // world position of the lower-left corner of cell (0, 0)

  [[nodiscard]] int width() const noexcept { return grid.cols(); }
  [[nodiscard]] int height() const noexcept { return grid.rows(); }
  [[nodiscard]] Point2 cell_center(int row, int col) const noexcept {
    return {origin.x + (col + 0.5) * resolution, origin.y + (row + 0.5) * resolution};
  }
  [[nodiscard]] std::optional<std::pair<int, int>> cell_of(Point2 p) const noexcept;
  [[nodiscard]] bool contains(Point2 p) const noexcept { return cell_of(p).has_value(); }
};

struct BinaryStructureMask {
  Grid<std::uint8_t> grid;  // 1 = static structure
  double resolution{0.25};
  Point2 origin{0.0, 0.0};

  [[nodiscard]] std::optional<std::pair<int, int>> cell_of(Point2 p) const noexcept;
  [[nodiscard]] bool contains(Point2 p) const noexcept { return cell_of(p).has_value(); }
  /// Mask value at a world point, 0 outside the map.
  [[nodiscard]] std::uint8_t sample(Point2 p) const noexcept;
};

struct CandidateOverheadImage {
  BinaryRaster pixels;
  Pose2 carve_pose;
  RasterSpec spec;
};

[[nodiscard]] SegmentedOverheadMap rasterize(const WorldModel& world, double resolution);
[[nodiscard]] BinaryStructureMask structure_mask(const SegmentedOverheadMap& map);

/// True when a sonar-frame point lies inside the sector of half-angle fov/2 within max_range.
[[nodiscard]] bool in_sector(Point2 sonar_frame_point, double fov, double max_range) noexcept;

/// Sonar-FOV-shaped crop of the mask at the given pose, resampled into the sonar-aligned raster.
/// Throws InvalidArgument when the pose lies outside the map.
[[nodiscard]] CandidateOverheadImage carve_candidate(const BinaryStructureMask& mask, const Pose2& pose,
                                                     double fov, double max_range,
                                                     const RasterSpec& spec = {});

// Plain-text grids: one character per cell ('.', '#', 'v'); the first line is the top (highest) row.
[[nodiscard]] std::string to_text(const SegmentedOverheadMap& map);
[[nodiscard]] SegmentedOverheadMap segmented_map_from_text(const std::string& text, double resolution,
                                                           Point2 origin = {});

// PNG (palette index = class label) plus a "<png>.meta" sidecar with resolution and origin.
void save_map_png(const SegmentedOverheadMap& map, const std::filesystem::path& png);
[[nodiscard]] SegmentedOverheadMap load_map_png(const std::filesystem::path& png);

}  // namespace sonar_oi
