#include "sonar_oi/geometry.hpp"

#include <cstdio>

#include "sonar_oi/error.hpp"

namespace sonar_oi {

Pose2 Pose2::inverse() const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {-c * x_ - s * y_, s * x_ - c * y_, -theta_};
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta());
  const double s = std::sin(a.theta());
  return {a.x() + c * b.x() - s * b.y(), a.y() + s * b.x() + c * b.y(), a.theta() + b.theta()};
}

Pose2 between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta());
  const double s = std::sin(a.theta());
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  return {c * dx + s * dy, -s * dx + c * dy, b.theta() - a.theta()};
}

Point2 transform_point(const Pose2& p, Point2 pt) noexcept {
  const double c = std::cos(p.theta());
  const double s = std::sin(p.theta());
  return {p.x() + c * pt.x - s * pt.y, p.y() + s * pt.x + c * pt.y};
}

Eigen::Vector3d local_difference(const Pose2& a, const Pose2& b) {
  const Pose2 d = between(a, b);
  return {d.x(), d.y(), d.theta()};
}

Eigen::Matrix3d adjoint(const Pose2& p) {
  const double c = std::cos(p.theta());
  const double s = std::sin(p.theta());
  Eigen::Matrix3d ad;
  ad << c, -s, p.y(),
        s, c, -p.x(),
        0.0, 0.0, 1.0;
  return ad;
}

std::string to_string(const Pose2& p) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "(%.6f, %.6f, %.6f)", p.x(), p.y(), p.theta());
  return buf;
}

Point3 spherical_to_cartesian(const PolarReturn& r) {
  if (!(r.range > 0.0)) throw InvalidArgument("spherical_to_cartesian: range must be positive");
  const double ce = std::cos(r.elevation);
  return {r.range * ce * std::cos(r.bearing), r.range * ce * std::sin(r.bearing),
          r.range * std::sin(r.elevation)};
}

PointCloud2D transform_cloud(const Pose2& p, const PointCloud2D& cloud) {
  PointCloud2D out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size());
  for (const auto& pt : cloud.points) out.points.push_back(transform_point(p, pt));
  return out;
}

}  // namespace sonar_oi
