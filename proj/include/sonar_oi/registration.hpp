#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "sonar_oi/geometry.hpp"

namespace sonar_oi {

struct IcpConfig {
  int max_iterations{50};
  double correspondence_dist{2.0};  // meters
  double convergence_translation{1e-4};
  double convergence_rotation{1e-4};
  int min_points{10};

  void validate() const;
};

struct RegistrationResult {
  Pose2 transform;  // maps source points onto the target
  double inlier_rmse{0.0};
  int n_correspondences{0};
  int iterations{0};
  bool converged{false};
};

/// Grid of candidate offsets added to the center pose, plus the radius used to score consensus.
struct ConsensusSearch {
  double xy_extent{2.0};
  double xy_step{0.5};
  double yaw_extent{deg2rad(10.0)};
  double yaw_step{deg2rad(2.0)};
  double inlier_dist{0.5};

  void validate() const;
};

/// One point per occupied voxel at the centroid of its members, ordered by voxel index.
/// Exactly invariant to input order.
[[nodiscard]] PointCloud2D voxel_downsample(const PointCloud2D& cloud, double voxel);

/// Number of source points that, transformed, have a target neighbor strictly within dist.
[[nodiscard]] int consensus_count(const PointCloud2D& source, const PointCloud2D& target, const Pose2& transform,
                                  double dist);

/// Exhaustive consensus-set maximization over the search grid around center. Ties go to
/// the candidate closest to center (squared norm of the (dx, dy, dyaw) offset), then to the
/// lexicographically smallest (dx, dy, dyaw). Throws InsufficientPoints on empty clouds.
[[nodiscard]] Pose2 consensus_init(const PointCloud2D& source, const PointCloud2D& target, const Pose2& center,
                                   const ConsensusSearch& search = {});

/// Point-to-point ICP with closed-form planar rigid alignment at each step.
/// Throws InsufficientPoints when either cloud has fewer than cfg.min_points points.
[[nodiscard]] RegistrationResult icp(const PointCloud2D& source, const PointCloud2D& target, const Pose2& init,
                                     const IcpConfig& cfg = {});

/// Closed-form least-squares rigid transform taking src[i] onto dst[i].
[[nodiscard]] Pose2 fit_rigid_transform(const std::vector<Point2>& src, const std::vector<Point2>& dst);

/// Fraction of transformed source points whose nearest target lies strictly closer than dist.
/// Throws InvalidArgument for an empty source.
[[nodiscard]] double overlap_fraction(const PointCloud2D& source, const PointCloud2D& target, const Pose2& transform,
                                      double dist = 1.0);

/// How well a registration pins down each direction of the transform. Every source point
/// with a target neighbour closer than match_dist contributes J^T J with
/// J = (n_x, n_y, (p x n) / lever_arm), where p is the source point, n the unit normal of the
/// target's local line (PCA over target points within normal_radius) rotated into the
/// source frame, and lever_arm the rms norm of the contributing source points. The sum is
/// divided by the count, so translation eigenvalues lie in [0, 1]; a straight wall leaves
/// the along-wall direction near zero.
struct RegistrationConstraint {
  Eigen::Matrix3d information{Eigen::Matrix3d::Zero()};
  double lever_arm{1.0};
  int count{0};
};
[[nodiscard]] RegistrationConstraint registration_constraint(const PointCloud2D& source, const PointCloud2D& target,
                                                             const Pose2& transform, double match_dist = 1.0,
                                                             double normal_radius = 1.5);

void write_cloud_csv(const std::filesystem::path& path, const PointCloud2D& cloud);
[[nodiscard]] PointCloud2D read_cloud_csv(const std::filesystem::path& path);

}  // namespace sonar_oi
