#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sonar_oi {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into [-pi, pi). pi itself maps to -pi.
[[nodiscard]] inline double wrap_angle(double a) noexcept {
  constexpr double two_pi = 2.0 * kPi;
  double w = a - two_pi * std::floor((a + kPi) / two_pi);
  // floor() rounding can leave w == pi for inputs a hair below an odd multiple of pi
  if (w >= kPi) w -= two_pi;
  if (w < -kPi) w += two_pi;
  return w;
}

[[nodiscard]] constexpr double deg2rad(double d) noexcept { return d * kPi / 180.0; }
[[nodiscard]] constexpr double rad2deg(double r) noexcept { return r * 180.0 / kPi; }

struct Point2 {
  double x{0.0};
  double y{0.0};

  friend bool operator==(const Point2&, const Point2&) = default;
  [[nodiscard]] double norm() const noexcept { return std::hypot(x, y); }
};

[[nodiscard]] inline Point2 operator+(Point2 a, Point2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
[[nodiscard]] inline Point2 operator-(Point2 a, Point2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
[[nodiscard]] inline Point2 operator*(double s, Point2 p) noexcept { return {s * p.x, s * p.y}; }
[[nodiscard]] inline double distance(Point2 a, Point2 b) noexcept { return (a - b).norm(); }

/// Planar robot pose. theta is kept in [-pi, pi) by every constructor and operation.
class Pose2 {
 public:
  Pose2() = default;
  Pose2(double x, double y, double theta) : x_(x), y_(y), theta_(wrap_angle(theta)) {}

  [[nodiscard]] static Pose2 identity() { return {}; }

  [[nodiscard]] double x() const noexcept { return x_; }
  [[nodiscard]] double y() const noexcept { return y_; }
  [[nodiscard]] double theta() const noexcept { return theta_; }
  [[nodiscard]] Point2 translation() const noexcept { return {x_, y_}; }
  [[nodiscard]] Eigen::Vector3d vector() const { return {x_, y_, theta_}; }

  [[nodiscard]] Pose2 inverse() const;

  friend bool operator==(const Pose2&, const Pose2&) = default;

 private:
  double x_{0.0};
  double y_{0.0};
  double theta_{0.0};
};

/// SE(2) product a * b.
[[nodiscard]] Pose2 compose(const Pose2& a, const Pose2& b);
/// inverse(a) * b: pose of b expressed in a's frame.
[[nodiscard]] Pose2 between(const Pose2& a, const Pose2& b);
[[nodiscard]] inline Pose2 inverse(const Pose2& p) { return p.inverse(); }
/// Rotates pt by p.theta then translates by (p.x, p.y).
[[nodiscard]] Point2 transform_point(const Pose2& p, Point2 pt) noexcept;

/// Local difference used by factor residuals: translation of between(a, b) plus wrapped yaw.
[[nodiscard]] Eigen::Vector3d local_difference(const Pose2& a, const Pose2& b);

/// SE(2) adjoint for the (x, y, theta) ordering.
[[nodiscard]] Eigen::Matrix3d adjoint(const Pose2& p);

std::string to_string(const Pose2& p);

struct PolarReturn {
  double range{0.0};      // meters, > 0
  double bearing{0.0};    // radians
  double elevation{0.0};  // radians
  double intensity{0.0};  // >= 0
};

struct Point3 {
  double x{0.0};
  double y{0.0};
  double z{0.0};
};

/// Sonar spherical-to-Cartesian mapping. Throws InvalidArgument for range <= 0.
[[nodiscard]] Point3 spherical_to_cartesian(const PolarReturn& r);

struct PointCloud2D {
  std::vector<Point2> points;
  std::string frame_id;

  [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
  [[nodiscard]] bool empty() const noexcept { return points.empty(); }
};

[[nodiscard]] PointCloud2D transform_cloud(const Pose2& p, const PointCloud2D& cloud);

}  // namespace sonar_oi
