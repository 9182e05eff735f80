#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sonar_oi/cfar.hpp"
#include "sonar_oi/geometry.hpp"
#include "sonar_oi/oi_pipeline.hpp"
#include "sonar_oi/posegraph.hpp"
#include "sonar_oi/registration.hpp"
#include "sonar_oi/sonar_sim.hpp"
#include "sonar_oi/world.hpp"

namespace sonar_oi {

// ---------------------------------------------------------------------------------------
// Trajectories

/// Ground-truth poses sampled every dt seconds.
struct Trajectory {
  std::string name;
  double dt{0.2};
  std::vector<Pose2> poses;

  [[nodiscard]] double stamp(std::size_t k) const noexcept { return dt * static_cast<double>(k); }
};

/// Constant-speed waypoint follower: drives each leg straight at `speed`, turns in place at
/// `turn_rate` (rad/s) to face the next leg. Poses are sampled at rate_hz.
[[nodiscard]] Trajectory trajectory_from_waypoints(const std::string& name, const std::vector<Point2>& waypoints,
                                                   double speed, double turn_rate, double rate_hz);

struct TrajectoryConfig {
  double speed{1.0};
  double turn_rate{deg2rad(30.0)};
  double rate_hz{5.0};
  double edge_margin{3.0};   // slalom stays this far inside the channel edges
  double leg_length{20.0};   // along-channel length of one slalom leg
  int laps{10};
};

/// Slalom from world.start to world.goal through the channel, alternating between the
/// channel edges so the sonar faces each pier field in turn.
[[nodiscard]] Trajectory fly_through(const WorldModel& world, const TrajectoryConfig& cfg = {});
/// Fly-through to the goal, then back to the start along the mirrored slalom.
[[nodiscard]] Trajectory out_and_back(const WorldModel& world, const TrajectoryConfig& cfg = {});
/// cfg.laps repetitions of out_and_back.
[[nodiscard]] Trajectory long_distance(const WorldModel& world, const TrajectoryConfig& cfg = {});
[[nodiscard]] Trajectory make_trajectory(const std::string& kind, const WorldModel& world,
                                         const TrajectoryConfig& cfg = {});
[[nodiscard]] double path_length(const Trajectory& traj);

/// Throws InvalidArgument when a sample leaves the water or comes closer than min_clearance
/// to a polygon.
void check_collision_free(const WorldModel& world, const Trajectory& traj, double min_clearance);

// ---------------------------------------------------------------------------------------
// Dead reckoning

struct DeadReckoningConfig {
  double sigma_velocity{0.1};          // m/s
  double sigma_theta{deg2rad(1.0)};    // rad/s on the heading rate
  double sigma_xy_init{1.0};           // meters, initial position fix
  double sigma_theta_init{deg2rad(1.0)};

  void validate() const;
};

/// One noisy body-frame increment per trajectory step (poses.size() - 1 entries): the
/// forward distance gets sigma_velocity * dt noise and the heading increment
/// sigma_theta * dt noise. Zero noise reproduces between(p[k], p[k+1]) exactly.
[[nodiscard]] std::vector<Pose2> simulate_dead_reckoning(const Trajectory& traj, const DeadReckoningConfig& cfg,
                                                         std::uint64_t rng_seed);
/// Same, with explicit timestamps; throws InvalidArgument unless they increase by dt.
[[nodiscard]] std::vector<Pose2> simulate_dead_reckoning(const std::vector<Pose2>& poses,
                                                         const std::vector<double>& stamps, double dt,
                                                         const DeadReckoningConfig& cfg, std::uint64_t rng_seed);

// ---------------------------------------------------------------------------------------
// Mission

struct KeyframePolicy {
  double translation_gate{2.0};
  double rotation_gate{deg2rad(30.0)};

  void validate() const;
};

struct ScanMatchConfig {
  double voxel{0.25};
  IcpConfig icp;
  ConsensusSearch consensus;
  double min_overlap{0.5};
  double sigma_xy{0.1};
  double sigma_theta{deg2rad(0.5)};
  double rmse_ref{0.1};
  // ICP results farther than this Mahalanobis distance (chi2, 3 dof, odometry plus ICP
  // covariance) from odometry fall back to odometry.
  double odometry_gate{16.27};
  // Same inflation floor as OiConfig::constraint_floor, applied to scan-match noise.
  double constraint_floor{0.0025};
};

struct LoopClosureConfig {
  bool enabled{true};
  int min_separation{8};  // keyframes
  int max_candidates{3};
  double search_sigmas{3.0};
  double min_overlap{0.6};
  int pcm_window{15};
  double sigma_xy{0.15};
  double sigma_theta{deg2rad(1.0)};
  double pcm_chi2{7.814727903251178};
};

struct OiConfig {
  OiGateConfig gate;
  double sigma_xy{0.5};
  double sigma_theta{deg2rad(2.0)};
  OracleCorruption corruption;
  // consensus_init is switched on when the position marginal's largest standard deviation
  // exceeds this (meters).
  double consensus_sigma_threshold{1.5};
  // Proposals whose correction is farther than this Mahalanobis distance (chi2, 3 dof) from
  // the predicted keyframe pose, under predicted plus OI covariance, are dropped.
  double innovation_gate{16.27};
  // The fixed OI covariance is inflated along directions the registration constrains
  // weakly: eigenvalues of 2 * constraint information are clamped to [constraint_floor, 1]
  // and inverted. The floor caps the inflation at 1 / sqrt(floor) in standard deviation.
  double constraint_floor{0.0025};
};

struct MissionConfig {
  SonarSpec sonar;
  NoiseConfig sonar_noise;
  CfarConfig cfar;
  RasterSpec raster;
  double overhead_resolution{0.25};
  DeadReckoningConfig dead_reckoning;
  KeyframePolicy keyframes;
  TrajectoryConfig trajectory;
  ScanMatchConfig scan_match;
  LoopClosureConfig loop_closure;
  OiConfig oi;
  OptimizerConfig optimizer;
  double anchor_sigma{1e-3};
  double min_clearance{1.0};

  void validate() const;
};

enum class MissionMode { Baseline, Proposed };
[[nodiscard]] std::string to_string(MissionMode m);
[[nodiscard]] MissionMode mission_mode_from_string(const std::string& s);

struct KeyframeRecord {
  int id{0};           // graph variable id (1-based; 0 is the anchor)
  std::size_t step{0};  // trajectory sample index
  double stamp{0.0};
  Pose2 truth;
  Pose2 estimate;      // final optimized estimate
  Pose2 dead_reckoned;
};

struct FactorLogEntry {
  int keyframe{0};  // keyframe being processed when the factor was considered
  FactorKind kind{FactorKind::Prior};
  int i{0};
  int j{-1};
  bool accepted{false};
  std::string reason;       // why rejected, or how accepted ("icp", "odometry", "pcm", ...)
  long graph_index{-1};     // index into the final graph's factor list when accepted
  double overlap{0.0};
};

struct StageTiming {
  std::map<std::string, double> seconds;  // wall clock per stage
};

struct MissionReport {
  std::string trajectory;
  MissionMode mode{MissionMode::Baseline};
  std::uint64_t seed{0};
  std::vector<KeyframeRecord> keyframes;
  std::vector<FactorLogEntry> factor_log;
  PoseGraph graph;
  StageTiming timing;  // excluded from the canonical text
};

/// Runs the mission. `translator` overrides the oracle in proposed mode (e.g. a remote
/// translator); the oracle is built from the config's corruption otherwise.
[[nodiscard]] MissionReport run_mission(const WorldModel& world, const Trajectory& traj, MissionMode mode,
                                        const MissionConfig& cfg, std::uint64_t rng_seed,
                                        Translator* translator = nullptr);

// ---------------------------------------------------------------------------------------
// Metrics and reports

struct KeyframeError {
  int id{0};
  double position{0.0};  // meters
  double yaw{0.0};       // radians, shortest arc, absolute
};

struct Metrics {
  std::size_t count{0};
  double position_mae{0.0};
  double position_rmse{0.0};
  double yaw_mae{0.0};  // radians
  double yaw_rmse{0.0};
  std::vector<KeyframeError> per_keyframe;
};

/// Estimated and true keyframe poses are both expressed in the frame of the true initial
/// keyframe and compared pose by pose, initial keyframe included. Throws InvalidArgument on
/// empty or mismatched input.
[[nodiscard]] Metrics compute_metrics(const std::vector<Pose2>& estimated, const std::vector<Pose2>& truth);
[[nodiscard]] Metrics compute_metrics(const MissionReport& report);

/// Canonical text of everything in the report except wall-clock timing.
[[nodiscard]] std::string canonical_text(const MissionReport& report);

void write_metrics_csv(const std::filesystem::path& path, const Metrics& m);
void write_factor_log_tsv(const std::filesystem::path& path, const std::vector<FactorLogEntry>& log);
void write_keyframes_tsv(const std::filesystem::path& path, const std::vector<KeyframeRecord>& kfs);
[[nodiscard]] std::vector<KeyframeRecord> read_keyframes_tsv(const std::filesystem::path& path);

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<Pose2> poses;
};
void write_trajectory_svg(const std::filesystem::path& path, const WorldModel& world,
                          const std::vector<SvgSeries>& series);

/// metrics.csv, factors.tsv, keyframes.tsv, graph.g2o, trajectory.svg, timing.tsv.
void write_report(const std::filesystem::path& dir, const MissionReport& report, const WorldModel& world);

}  // namespace sonar_oi
