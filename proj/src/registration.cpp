#include "sonar_oi/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "sonar_oi/error.hpp"
#include "sonar_oi/spatial_hash.hpp"

namespace sonar_oi {

void IcpConfig::validate() const {
  if (max_iterations <= 0 || !(correspondence_dist > 0.0) || !(convergence_translation > 0.0) ||
      !(convergence_rotation > 0.0) || min_points <= 0) {
    throw InvalidArgument("IcpConfig: all parameters must be positive");
  }
}

void ConsensusSearch::validate() const {
  if (xy_extent < 0.0 || yaw_extent < 0.0 || !(xy_step > 0.0) || !(yaw_step > 0.0) || !(inlier_dist > 0.0)) {
    throw InvalidArgument("ConsensusSearch: extents must be non-negative and steps positive");
  }
}

PointCloud2D voxel_downsample(const PointCloud2D& cloud, double voxel) {
  if (!(voxel > 0.0)) throw InvalidArgument("voxel_downsample: voxel size must be positive");
  struct Keyed {
    std::int64_t ix, iy;
    Point2 p;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    keyed.push_back({static_cast<std::int64_t>(std::floor(p.x / voxel)),
                     static_cast<std::int64_t>(std::floor(p.y / voxel)), p});
  }
  // Sorting the members too makes the centroid sums order-independent.
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.ix, a.iy, a.p.x, a.p.y) < std::tie(b.ix, b.iy, b.p.x, b.p.y);
  });
  PointCloud2D out;
  out.frame_id = cloud.frame_id;
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    double sx = 0.0, sy = 0.0;
    while (j < keyed.size() && keyed[j].ix == keyed[i].ix && keyed[j].iy == keyed[i].iy) {
      sx += keyed[j].p.x;
      sy += keyed[j].p.y;
      ++j;
    }
    const double n = static_cast<double>(j - i);
    out.points.push_back({sx / n, sy / n});
    i = j;
  }
  return out;
}

int consensus_count(const PointCloud2D& source, const PointCloud2D& target, const Pose2& transform, double dist) {
  const SpatialHash hash(target.points, dist);
  int count = 0;
  for (const auto& p : source.points) {
    if (hash.nearest(transform_point(transform, p), dist)) ++count;
  }
  return count;
}

Pose2 consensus_init(const PointCloud2D& source, const PointCloud2D& target, const Pose2& center,
                     const ConsensusSearch& search) {
  search.validate();
  if (source.empty() || target.empty()) throw InsufficientPoints("consensus_init: empty cloud");
  const SpatialHash hash(target.points, search.inlier_dist);
  const int nxy = static_cast<int>(std::floor(search.xy_extent / search.xy_step + 1e-9));
  const int nyaw = static_cast<int>(std::floor(search.yaw_extent / search.yaw_step + 1e-9));

  struct Best {
    int count{-1};
    double dist2{0.0};
    double dx{0.0}, dy{0.0}, dyaw{0.0};
  } best;
  for (int ix = -nxy; ix <= nxy; ++ix) {
    for (int iy = -nxy; iy <= nxy; ++iy) {
      for (int it = -nyaw; it <= nyaw; ++it) {
        const double dx = ix * search.xy_step;
        const double dy = iy * search.xy_step;
        const double dyaw = it * search.yaw_step;
        const Pose2 cand(center.x() + dx, center.y() + dy, center.theta() + dyaw);
        int count = 0;
        for (const auto& p : source.points) {
          if (hash.nearest(transform_point(cand, p), search.inlier_dist)) ++count;
        }
        const double d2 = dx * dx + dy * dy + dyaw * dyaw;
        const bool better = count > best.count ||
                            (count == best.count &&
                             std::tie(d2, dx, dy, dyaw) < std::tie(best.dist2, best.dx, best.dy, best.dyaw));
        if (better) best = {count, d2, dx, dy, dyaw};
      }
    }
  }
  return {center.x() + best.dx, center.y() + best.dy, center.theta() + best.dyaw};
}

Pose2 fit_rigid_transform(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
  if (src.size() != dst.size() || src.empty()) throw InvalidArgument("fit_rigid_transform: mismatched inputs");
  const double n = static_cast<double>(src.size());
  Point2 ms{}, md{};
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms = ms + src[i];
    md = md + dst[i];
  }
  ms = (1.0 / n) * ms;
  md = (1.0 / n) * md;
  // The planar rotation maximizing sum d_i . R s_i has angle atan2(sum s x d, sum s . d),
  // the same optimum an SVD of the 2x2 cross-covariance yields.
  double sdot = 0.0, scross = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point2 a = src[i] - ms;
    const Point2 b = dst[i] - md;
    sdot += a.x * b.x + a.y * b.y;
    scross += a.x * b.y - a.y * b.x;
  }
  const double theta = std::atan2(scross, sdot);
  const double c = std::cos(theta), s = std::sin(theta);
  return {md.x - (c * ms.x - s * ms.y), md.y - (s * ms.x + c * ms.y), theta};
}

RegistrationResult icp(const PointCloud2D& source, const PointCloud2D& target, const Pose2& init,
                       const IcpConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(source.size()) < cfg.min_points || static_cast<int>(target.size()) < cfg.min_points) {
    throw InsufficientPoints("icp: clouds have " + std::to_string(source.size()) + " and " +
                             std::to_string(target.size()) + " points, need " + std::to_string(cfg.min_points));
  }
  const SpatialHash hash(target.points, cfg.correspondence_dist);
  RegistrationResult result;
  result.transform = init;
  std::vector<Point2> src, dst;
  src.reserve(source.size());
  dst.reserve(source.size());

  auto associate = [&](const Pose2& T, double& sq_sum) {
    src.clear();
    dst.clear();
    sq_sum = 0.0;
    for (const auto& p : source.points) {
      const Point2 q = transform_point(T, p);
      if (const auto nb = hash.nearest(q, cfg.correspondence_dist)) {
        src.push_back(p);
        dst.push_back(target.points[nb->index]);
        sq_sum += nb->distance * nb->distance;
      }
    }
    return static_cast<int>(src.size());
  };

  for (int it = 0; it < cfg.max_iterations; ++it) {
    double sq = 0.0;
    const int n = associate(result.transform, sq);
    result.iterations = it + 1;
    if (n < cfg.min_points) {
      result.n_correspondences = n;
      result.inlier_rmse = n > 0 ? std::sqrt(sq / n) : 0.0;
      result.converged = false;
      return result;
    }
    const Pose2 next = fit_rigid_transform(src, dst);
    const Pose2 step = between(result.transform, next);
    result.transform = next;
    if (std::hypot(step.x(), step.y()) < cfg.convergence_translation &&
        std::abs(step.theta()) < cfg.convergence_rotation) {
      break;
    }
  }
  double sq = 0.0;
  const int n = associate(result.transform, sq);
  result.n_correspondences = n;
  result.inlier_rmse = n > 0 ? std::sqrt(sq / n) : 0.0;
  // Hitting the iteration cap still counts; only a starved correspondence set fails.
  result.converged = n >= cfg.min_points;
  return result;
}

double overlap_fraction(const PointCloud2D& source, const PointCloud2D& target, const Pose2& transform, double dist) {
  if (source.empty()) throw InvalidArgument("overlap_fraction: empty source cloud");
  if (!(dist > 0.0)) throw InvalidArgument("overlap_fraction: distance must be positive");
  if (target.empty()) return 0.0;
  return static_cast<double>(consensus_count(source, target, transform, dist)) / static_cast<double>(source.size());
}

RegistrationConstraint registration_constraint(const PointCloud2D& source, const PointCloud2D& target,
                                               const Pose2& transform, double match_dist, double normal_radius) {
  if (!(match_dist > 0.0) || !(normal_radius > 0.0)) {
    throw InvalidArgument("registration_constraint: distances must be positive");
  }
  RegistrationConstraint out;
  if (source.empty() || target.empty()) return out;
  const SpatialHash hash(target.points, std::max(match_dist, normal_radius));
  const double c = std::cos(transform.theta());
  const double s = std::sin(transform.theta());

  std::vector<std::pair<Point2, Point2>> rows;  // (source point, normal in source frame)
  double sq = 0.0;
  for (const auto& p : source.points) {
    const auto nn = hash.nearest(transform_point(transform, p), match_dist);
    if (!nn) continue;
    const auto local = hash.within(target.points[nn->index], normal_radius);
    if (local.size() < 2) continue;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (auto i : local) mean += Eigen::Vector2d(target.points[i].x, target.points[i].y);
    mean /= static_cast<double>(local.size());
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (auto i : local) {
      const Eigen::Vector2d d = Eigen::Vector2d(target.points[i].x, target.points[i].y) - mean;
      scatter += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter);
    const Eigen::Vector2d n = es.eigenvectors().col(0);  // smallest spread = line normal
    rows.push_back({p, {c * n.x() + s * n.y(), -s * n.x() + c * n.y()}});
    sq += p.x * p.x + p.y * p.y;
  }
  if (rows.empty()) return out;
  out.count = static_cast<int>(rows.size());
  out.lever_arm = std::max(std::sqrt(sq / out.count), 1e-6);
  for (const auto& [p, n] : rows) {
    const Eigen::Vector3d j(n.x, n.y, (p.x * n.y - p.y * n.x) / out.lever_arm);
    out.information += j * j.transpose();
  }
  out.information /= static_cast<double>(out.count);
  return out;
}

void write_cloud_csv(const std::filesystem::path& path, const PointCloud2D& cloud) {
  std::ofstream out(path);
  out.precision(17);
  for (const auto& p : cloud.points) out << p.x << ',' << p.y << '\n';
  if (!out) throw Error("write_cloud_csv: cannot write " + path.string());
}

PointCloud2D read_cloud_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_cloud_csv: cannot open " + path.string());
  PointCloud2D cloud;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Point2 p;
    char comma = 0;
    if (!(ls >> p.x >> comma >> p.y) || comma != ',' || !std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error("read_cloud_csv: malformed line " + std::to_string(line_no) + " in " + path.string());
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace sonar_oi
