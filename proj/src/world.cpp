#include "sonar_oi/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "sonar_oi/error.hpp"
#include "sonar_oi/image_io.hpp"

namespace sonar_oi {
namespace {

double cross(Point2 a, Point2 b) noexcept { return a.x * b.y - a.y * b.x; }

double point_segment_distance(Point2 p, Point2 a, Point2 b) noexcept {
  const Point2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

bool segments_intersect(Point2 p1, Point2 p2, Point2 q1, Point2 q2) noexcept {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

// Ray parameters at which the ray (origin, dir) crosses the polygon boundary, sorted.
std::vector<double> ray_crossings(const Polygon& poly, Point2 origin, Point2 dir) {
  std::vector<double> ts;
  const auto& v = poly.vertices;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = v[i];
    const Point2 b = v[(i + 1) % n];
    const Point2 e = b - a;
    const double denom = cross(dir, e);
    if (std::abs(denom) < 1e-15) continue;
    const Point2 ao = a - origin;
    const double t = cross(ao, e) / denom;
    const double u = cross(ao, dir) / denom;
    // Half-open on the edge parameter so a ray through a shared vertex counts once.
    if (t >= 0.0 && u >= 0.0 && u < 1.0) ts.push_back(t);
  }
  std::sort(ts.begin(), ts.end());
  return ts;
}

Polygon vessel_hull(Point2 lo, Point2 hi, bool along_y, bool bow_positive) {
  // Rectangle with a pointed bow one beam-width long on the chosen end.
  Polygon p;
  p.cls = CellClass::Vessel;
  if (along_y) {
    const double beam = hi.x - lo.x;
    const double cx = 0.5 * (lo.x + hi.x);
    if (bow_positive) {
      const double shoulder = hi.y - 0.8 * beam;
      p.vertices = {{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, shoulder}, {cx, hi.y}, {lo.x, shoulder}};
    } else {
      const double shoulder = lo.y + 0.8 * beam;
      p.vertices = {{cx, lo.y}, {hi.x, shoulder}, {hi.x, hi.y}, {lo.x, hi.y}, {lo.x, shoulder}};
    }
  } else {
    const double beam = hi.y - lo.y;
    const double cy = 0.5 * (lo.y + hi.y);
    if (bow_positive) {
      const double shoulder = hi.x - 0.8 * beam;
      p.vertices = {{lo.x, lo.y}, {shoulder, lo.y}, {hi.x, cy}, {shoulder, hi.y}, {lo.x, hi.y}};
    } else {
      const double shoulder = lo.x + 0.8 * beam;
      p.vertices = {{lo.x, cy}, {shoulder, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {shoulder, hi.y}};
    }
  }
  return p;
}

template <typename Mask>
std::optional<std::pair<int, int>> grid_cell_of(const Mask& m, Point2 p) noexcept {
  const double cf = std::floor((p.x - m.origin.x) / m.resolution);
  const double rf = std::floor((p.y - m.origin.y) / m.resolution);
  if (cf < 0 || rf < 0 || cf >= m.grid.cols() || rf >= m.grid.rows()) return std::nullopt;
  return std::make_pair(static_cast<int>(rf), static_cast<int>(cf));
}

}  // namespace

bool Polygon::contains(Point2 p) const noexcept {
  bool inside = false;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = vertices[i];
    const Point2 b = vertices[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_at) inside = !inside;
    }
  }
  return inside;
}

Point2 Polygon::min_corner() const noexcept {
  Point2 m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const auto& v : vertices) m = {std::min(m.x, v.x), std::min(m.y, v.y)};
  return m;
}

Point2 Polygon::max_corner() const noexcept {
  Point2 m{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& v : vertices) m = {std::max(m.x, v.x), std::max(m.y, v.y)};
  return m;
}

Polygon make_rectangle(Point2 lo, Point2 hi, CellClass cls) {
  return Polygon{{{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}}, cls};
}

bool polygons_overlap(const Polygon& a, const Polygon& b, double margin) {
  const Point2 amin = a.min_corner(), amax = a.max_corner();
  const Point2 bmin = b.min_corner(), bmax = b.max_corner();
  if (amax.x + margin < bmin.x || bmax.x + margin < amin.x || amax.y + margin < bmin.y ||
      bmax.y + margin < amin.y) {
    return false;
  }
  for (const auto& v : a.vertices) {
    if (b.contains(v)) return true;
  }
  for (const auto& v : b.vertices) {
    if (a.contains(v)) return true;
  }
  const std::size_t na = a.vertices.size(), nb = b.vertices.size();
  for (std::size_t i = 0; i < na; ++i) {
    const Point2 p1 = a.vertices[i], p2 = a.vertices[(i + 1) % na];
    for (std::size_t j = 0; j < nb; ++j) {
      const Point2 q1 = b.vertices[j], q2 = b.vertices[(j + 1) % nb];
      if (segments_intersect(p1, p2, q1, q2)) return true;
      if (margin > 0.0 && (point_segment_distance(p1, q1, q2) < margin ||
                           point_segment_distance(q1, p1, p2) < margin)) {
        return true;
      }
    }
  }
  return false;
}

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.vertices.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(poly.vertices[i], poly.vertices[(i + 1) % n], poly.vertices[j],
                             poly.vertices[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

double WorldModel::clearance(Point2 p) const noexcept {
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](const std::vector<Polygon>& polys) {
    for (const auto& poly : polys) {
      const std::size_t n = poly.vertices.size();
      for (std::size_t i = 0; i < n; ++i) {
        best = std::min(best, point_segment_distance(p, poly.vertices[i], poly.vertices[(i + 1) % n]));
      }
    }
  };
  scan(structures);
  scan(vessels);
  return best;
}

bool WorldModel::in_water(Point2 p) const noexcept {
  if (!in_bounds(p)) return false;
  for (const auto& s : structures) {
    if (s.contains(p)) return false;
  }
  for (const auto& v : vessels) {
    if (v.contains(p)) return false;
  }
  return true;
}

std::optional<RayHit> cast_ray(const WorldModel& world, Point2 origin, double angle, double max_range) {
  const Point2 dir{std::cos(angle), std::sin(angle)};
  std::optional<RayHit> best;
  auto scan = [&](const std::vector<Polygon>& polys, int offset) {
    for (std::size_t k = 0; k < polys.size(); ++k) {
      const Polygon& poly = polys[k];
      // Cheap reject: ray segment bounding box against polygon bounding box.
      const Point2 end = origin + max_range * dir;
      const Point2 pmin = poly.min_corner(), pmax = poly.max_corner();
      if (std::max(origin.x, end.x) < pmin.x || std::min(origin.x, end.x) > pmax.x ||
          std::max(origin.y, end.y) < pmin.y || std::min(origin.y, end.y) > pmax.y) {
        continue;
      }
      double entry = 0.0, exit = 0.0;
      if (poly.contains(origin)) {
        const auto ts = ray_crossings(poly, origin, dir);
        entry = 0.0;
        exit = ts.empty() ? std::numeric_limits<double>::infinity() : ts.front();
      } else {
        const auto ts = ray_crossings(poly, origin, dir);
        if (ts.empty()) continue;
        entry = ts[0];
        exit = ts.size() > 1 ? ts[1] : entry;
      }
      if (entry > max_range) continue;
      if (!best || entry < best->range) {
        best = RayHit{entry, exit, poly.cls, offset + static_cast<int>(k)};
      }
    }
  };
  scan(world.structures, 0);
  scan(world.vessels, static_cast<int>(world.structures.size()));
  return best;
}

WorldModel generate_marina(std::uint64_t seed, const GeneratorConfig& cfg) {
  if (cfg.width <= 0 || cfg.height <= 0 || cfg.wall_thickness <= 0 || cfg.channel_width <= 0) {
    throw InvalidArgument("generate_marina: dimensions must be positive");
  }
  const double t = cfg.wall_thickness;
  const double cy = 0.5 * cfg.height;
  const double ch_lo = cy - 0.5 * cfg.channel_width;
  const double ch_hi = cy + 0.5 * cfg.channel_width;
  const double pier_room = ch_lo - t - 0.5;
  if (ch_lo <= t + 1.0) throw GenerationFailed("generate_marina: channel wider than the basin");
  if (cfg.pier_count > 0 && pier_room < std::min(3.0, cfg.pier_length_min)) {
    throw GenerationFailed("generate_marina: no room for piers outside the channel");
  }
  const double x_lo = t + cfg.end_clearance;
  const double x_hi = cfg.width - t - cfg.end_clearance;

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo >= hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  WorldModel w;
  w.bounds_min = {0.0, 0.0};
  w.bounds_max = {cfg.width, cfg.height};
  w.channel_y_min = ch_lo;
  w.channel_y_max = ch_hi;
  w.start = {t + 10.0, cy};
  w.goal = {cfg.width - t - 10.0, cy};
  w.structures.push_back(make_rectangle({0.0, 0.0}, {cfg.width, t}, CellClass::Structure));
  w.structures.push_back(make_rectangle({0.0, cfg.height - t}, {cfg.width, cfg.height}, CellClass::Structure));
  w.structures.push_back(make_rectangle({0.0, 0.0}, {t, cfg.height}, CellClass::Structure));
  w.structures.push_back(make_rectangle({cfg.width - t, 0.0}, {cfg.width, cfg.height}, CellClass::Structure));

  struct Pier {
    double x0, x1, length;
    bool south;
  };
  std::vector<Pier> piers;
  int attempts = 0;
  while (static_cast<int>(piers.size()) < cfg.pier_count) {
    if (++attempts > cfg.max_attempts) {
      throw GenerationFailed("generate_marina: could not place " + std::to_string(cfg.pier_count) + " piers");
    }
    const bool south = piers.size() % 2 == 0;
    const double pw = uniform(cfg.pier_width_min, cfg.pier_width_max);
    if (x_hi - pw <= x_lo) throw GenerationFailed("generate_marina: basin too short for piers");
    const double x0 = uniform(x_lo, x_hi - pw);
    const double len = std::min(uniform(cfg.pier_length_min, cfg.pier_length_max), pier_room);
    bool ok = true;
    for (const auto& p : piers) {
      if (p.south != south) continue;
      if (x0 < p.x1 + cfg.min_pier_gap && p.x0 < x0 + pw + cfg.min_pier_gap) ok = false;
    }
    if (!ok) continue;
    piers.push_back({x0, x0 + pw, len, south});
  }
  std::sort(piers.begin(), piers.end(), [](const Pier& a, const Pier& b) { return a.x0 < b.x0; });
  for (const auto& p : piers) {
    if (p.south) {
      w.structures.push_back(make_rectangle({p.x0, t - 0.5}, {p.x1, t + p.length}, CellClass::Structure));
    } else {
      w.structures.push_back(
          make_rectangle({p.x0, cfg.height - t - p.length}, {p.x1, cfg.height - t + 0.5}, CellClass::Structure));
    }
  }

  attempts = 0;
  while (static_cast<int>(w.vessels.size()) < cfg.vessel_count) {
    if (++attempts > cfg.max_attempts) {
      throw GenerationFailed("generate_marina: could not place " + std::to_string(cfg.vessel_count) + " vessels");
    }
    const double beam = uniform(cfg.vessel_beam_min, cfg.vessel_beam_max);
    double len = uniform(cfg.vessel_length_min, cfg.vessel_length_max);
    const bool south = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    Polygon hull;
    if (!piers.empty() && std::uniform_int_distribution<int>(0, 1)(rng) == 0) {
      // Moored alongside a pier, bow toward the channel.
      std::vector<const Pier*> side;
      for (const auto& p : piers) {
        if (p.south == south) side.push_back(&p);
      }
      if (side.empty()) continue;
      const Pier& p = *side[std::uniform_int_distribution<std::size_t>(0, side.size() - 1)(rng)];
      len = std::min(len, p.length - 1.0);
      if (len < cfg.vessel_length_min * 0.5) continue;
      const bool east = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
      const double gap = 1.0;
      const double vx0 = east ? p.x1 + gap : p.x0 - gap - beam;
      const double y0 = south ? t + 1.0 + uniform(0.0, p.length - len - 1.0) : cfg.height - t - 1.0 - len -
                                                                                  uniform(0.0, p.length - len - 1.0);
      hull = vessel_hull({vx0, y0}, {vx0 + beam, y0 + len}, true, south);
    } else {
      // Along the seawall.
      const double x0 = uniform(t + 2.0, cfg.width - t - 2.0 - len);
      const double y0 = south ? t + 1.0 : cfg.height - t - 1.0 - beam;
      hull = vessel_hull({x0, y0}, {x0 + len, y0 + beam}, false, std::uniform_int_distribution<int>(0, 1)(rng) == 0);
    }
    const Point2 hmin = hull.min_corner(), hmax = hull.max_corner();
    if (hmax.y > ch_lo - 0.5 && hmin.y < ch_hi + 0.5) continue;
    if (!w.in_bounds(hmin) || !w.in_bounds(hmax)) continue;
    bool ok = true;
    for (const auto& s : w.structures) ok = ok && !polygons_overlap(hull, s, 0.5);
    for (const auto& v : w.vessels) ok = ok && !polygons_overlap(hull, v, 0.5);
    if (!ok) continue;
    w.vessels.push_back(std::move(hull));
  }
  return w;
}

std::optional<std::pair<int, int>> SegmentedOverheadMap::cell_of(Point2 p) const noexcept {
  return grid_cell_of(*this, p);
}

std::optional<std::pair<int, int>> BinaryStructureMask::cell_of(Point2 p) const noexcept {
  return grid_cell_of(*this, p);
}

std::uint8_t BinaryStructureMask::sample(Point2 p) const noexcept {
  const auto cell = cell_of(p);
  return cell ? grid(cell->first, cell->second) : 0;
}

SegmentedOverheadMap rasterize(const WorldModel& world, double resolution) {
  if (!(resolution > 0.0)) throw InvalidArgument("rasterize: resolution must be positive");
  SegmentedOverheadMap map;
  map.resolution = resolution;
  map.origin = world.bounds_min;
  const int cols = static_cast<int>(std::ceil((world.bounds_max.x - world.bounds_min.x) / resolution - 1e-9));
  const int rows = static_cast<int>(std::ceil((world.bounds_max.y - world.bounds_min.y) / resolution - 1e-9));
  map.grid = Grid<std::uint8_t>(std::max(rows, 0), std::max(cols, 0), static_cast<std::uint8_t>(CellClass::Water));
  // Vessels first so structure labels overwrite them: structure > vessel > water.
  auto paint = [&](const Polygon& poly) {
    const Point2 lo = poly.min_corner(), hi = poly.max_corner();
    const int c0 = std::max(0, static_cast<int>(std::floor((lo.x - map.origin.x) / resolution)));
    const int c1 = std::min(map.width() - 1, static_cast<int>(std::floor((hi.x - map.origin.x) / resolution)));
    const int r0 = std::max(0, static_cast<int>(std::floor((lo.y - map.origin.y) / resolution)));
    const int r1 = std::min(map.height() - 1, static_cast<int>(std::floor((hi.y - map.origin.y) / resolution)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (poly.contains(map.cell_center(r, c))) map.grid(r, c) = static_cast<std::uint8_t>(poly.cls);
      }
    }
  };
  for (const auto& v : world.vessels) paint(v);
  for (const auto& s : world.structures) paint(s);
  return map;
}

BinaryStructureMask structure_mask(const SegmentedOverheadMap& map) {
  BinaryStructureMask mask;
  mask.resolution = map.resolution;
  mask.origin = map.origin;
  mask.grid = Grid<std::uint8_t>(map.height(), map.width(), 0);
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    mask.grid.data()[i] = map.grid.data()[i] == static_cast<std::uint8_t>(CellClass::Structure) ? 1 : 0;
  }
  return mask;
}

bool in_sector(Point2 p, double fov, double max_range) noexcept {
  const double r = p.norm();
  if (r > max_range) return false;
  if (r == 0.0) return true;
  return std::abs(std::atan2(p.y, p.x)) <= 0.5 * fov;
}

CandidateOverheadImage carve_candidate(const BinaryStructureMask& mask, const Pose2& pose, double fov,
                                       double max_range, const RasterSpec& spec) {
  if (!(fov > 0.0 && fov < 2.0 * kPi)) throw InvalidArgument("carve_candidate: fov must lie in (0, 2pi)");
  if (!(max_range > 0.0)) throw InvalidArgument("carve_candidate: max_range must be positive");
  if (!mask.contains(pose.translation())) {
    throw InvalidArgument("carve_candidate: pose " + to_string(pose) + " lies outside the map");
  }
  CandidateOverheadImage out;
  out.carve_pose = pose;
  out.spec = spec;
  out.pixels = BinaryRaster(spec.rows, spec.cols, 0);
  const double c = std::cos(pose.theta());
  const double s = std::sin(pose.theta());
  for (int r = 0; r < spec.rows; ++r) {
    for (int col = 0; col < spec.cols; ++col) {
      const Point2 p = spec.pixel_center(r, col);
      if (!in_sector(p, fov, max_range)) continue;
      const Point2 w{pose.x() + c * p.x - s * p.y, pose.y() + s * p.x + c * p.y};
      out.pixels(r, col) = mask.sample(w);
    }
  }
  return out;
}

std::string to_text(const SegmentedOverheadMap& map) {
  std::string out;
  out.reserve(static_cast<std::size_t>(map.height()) * static_cast<std::size_t>(map.width() + 1));
  for (int r = map.height() - 1; r >= 0; --r) {
    for (int c = 0; c < map.width(); ++c) {
      switch (static_cast<CellClass>(map.grid(r, c))) {
        case CellClass::Water: out += '.'; break;
        case CellClass::Structure: out += '#'; break;
        case CellClass::Vessel: out += 'v'; break;
      }
    }
    out += '\n';
  }
  return out;
}

SegmentedOverheadMap segmented_map_from_text(const std::string& text, double resolution, Point2 origin) {
  if (!(resolution > 0.0)) throw InvalidArgument("segmented_map_from_text: resolution must be positive");
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  SegmentedOverheadMap map;
  map.resolution = resolution;
  map.origin = origin;
  const int rows = static_cast<int>(lines.size());
  const int cols = rows ? static_cast<int>(lines.front().size()) : 0;
  map.grid = Grid<std::uint8_t>(rows, cols, 0);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(lines[static_cast<std::size_t>(i)].size()) != cols) {
      throw InvalidArgument("segmented_map_from_text: ragged line " + std::to_string(i));
    }
    for (int c = 0; c < cols; ++c) {
      const char ch = lines[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      CellClass cls{};
      if (ch == '.') cls = CellClass::Water;
      else if (ch == '#') cls = CellClass::Structure;
      else if (ch == 'v') cls = CellClass::Vessel;
      else throw InvalidArgument(std::string("segmented_map_from_text: unknown cell '") + ch + "'");
      map.grid(rows - 1 - i, c) = static_cast<std::uint8_t>(cls);
    }
  }
  return map;
}

void save_map_png(const SegmentedOverheadMap& map, const std::filesystem::path& png) {
  const std::vector<Rgb> palette{{20, 40, 120}, {40, 200, 60}, {220, 120, 20}};
  write_png_indexed(png, map.grid, palette, /*flip_rows=*/true);
  std::ofstream meta(png.string() + ".meta");
  meta.precision(17);
  meta << "resolution " << map.resolution << "\norigin_x " << map.origin.x << "\norigin_y " << map.origin.y << "\n";
  if (!meta) throw Error("save_map_png: cannot write sidecar for " + png.string());
}

SegmentedOverheadMap load_map_png(const std::filesystem::path& png) {
  SegmentedOverheadMap map;
  map.grid = read_png(png, /*flip_rows=*/true);
  for (auto v : map.grid.data()) {
    if (v > 2) throw Error("load_map_png: invalid class label in " + png.string());
  }
  std::ifstream meta(png.string() + ".meta");
  if (!meta) throw Error("load_map_png: missing sidecar " + png.string() + ".meta");
  bool have_res = false;
  for (std::string key; meta >> key;) {
    double v = 0.0;
    meta >> v;
    if (key == "resolution") {
      map.resolution = v;
      have_res = true;
    } else if (key == "origin_x") {
      map.origin.x = v;
    } else if (key == "origin_y") {
      map.origin.y = v;
    }
  }
  if (!have_res || !(map.resolution > 0.0)) throw Error("load_map_png: sidecar lacks a positive resolution");
  return map;
}

}  // namespace sonar_oi
