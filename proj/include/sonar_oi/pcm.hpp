#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "sonar_oi/posegraph.hpp"

namespace sonar_oi {

/// Chi-square 95% quantile, 3 degrees of freedom.
inline constexpr double kChi2_95_3dof = 7.814727903251178;

struct PcmConfig {
  double chi2_threshold{kChi2_95_3dof};
};

/// A relative pose with a first-order covariance in the right-perturbation convention.
struct UncertainPose {
  Pose2 pose;
  Eigen::Matrix3d cov{Eigen::Matrix3d::Zero()};
};

[[nodiscard]] UncertainPose compose(const UncertainPose& a, const UncertainPose& b);
[[nodiscard]] UncertainPose inverse(const UncertainPose& a);

/// Composition of SSM measurements leading from variable `from` to variable `to`, following
/// SSM factors in either direction. nullopt if no SSM path exists.
[[nodiscard]] std::optional<UncertainPose> odometry_chain(const PoseGraph& graph, int from, int to);

/// Supplies the odometry chain between two variables; lets callers with a known chain
/// structure avoid searching the graph.
using ChainFn = std::function<std::optional<UncertainPose>(int from, int to)>;

/// Squared Mahalanobis norm of the cycle a, chain(a.j -> b.j), b^-1, chain(b.i -> a.i).
/// nullopt when either chain is missing.
[[nodiscard]] std::optional<double> pcm_cycle_distance(const Factor& a, const Factor& b, const PoseGraph& graph);
[[nodiscard]] std::optional<double> pcm_cycle_distance(const Factor& a, const Factor& b, const ChainFn& chain);

/// Symmetric pairwise-consistency matrix; the diagonal is true.
[[nodiscard]] std::vector<std::vector<bool>> pcm_consistency(const std::vector<Factor>& candidates,
                                                             const PoseGraph& graph, const PcmConfig& cfg = {});
[[nodiscard]] std::vector<std::vector<bool>> pcm_consistency(const std::vector<Factor>& candidates,
                                                             const ChainFn& chain, const PcmConfig& cfg = {});

/// Exact maximum clique. Among maximum cliques the lexicographically smallest sorted index
/// list wins.
[[nodiscard]] std::vector<std::size_t> maximum_clique(const std::vector<std::vector<bool>>& adjacency);

/// Indices (ascending) of the selected candidates.
[[nodiscard]] std::vector<std::size_t> pcm_select(const std::vector<Factor>& candidates, const PoseGraph& graph,
                                                  const PcmConfig& cfg = {});
[[nodiscard]] std::vector<std::size_t> pcm_select(const std::vector<Factor>& candidates, const ChainFn& chain,
                                                  const PcmConfig& cfg = {});

}  // namespace sonar_oi
