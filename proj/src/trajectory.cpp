#include <cmath>
#include <random>

#include "sonar_oi/error.hpp"
#include "sonar_oi/mission.hpp"

namespace sonar_oi {

namespace {

// A trajectory piece: either a straight drive or an in-place turn, lasting `duration`.
struct Motion {
  Pose2 start;
  double distance{0.0};
  double rotation{0.0};
  double duration{0.0};

  [[nodiscard]] Pose2 at(double t) const {
    const double f = duration > 0.0 ? std::clamp(t / duration, 0.0, 1.0) : 1.0;
    return compose(start, Pose2(f * distance, 0.0, f * rotation));
  }
};

std::vector<Point2> dedup(const std::vector<Point2>& pts) {
  std::vector<Point2> out;
  for (const auto& p : pts) {
    if (out.empty() || distance(out.back(), p) > 1e-9) out.push_back(p);
  }
  return out;
}

}  // namespace

Trajectory trajectory_from_waypoints(const std::string& name, const std::vector<Point2>& waypoints, double speed,
                                     double turn_rate, double rate_hz) {
  if (!(speed > 0.0) || !(turn_rate > 0.0) || !(rate_hz > 0.0)) {
    throw InvalidArgument("trajectory: speed, turn rate and rate must be positive");
  }
  const auto wps = dedup(waypoints);
  if (wps.size() < 2) throw InvalidArgument("trajectory: need at least two distinct waypoints");

  std::vector<Motion> motions;
  Pose2 cur(wps[0].x, wps[0].y, std::atan2(wps[1].y - wps[0].y, wps[1].x - wps[0].x));
  for (std::size_t k = 1; k < wps.size(); ++k) {
    const Point2 d = wps[k] - cur.translation();
    const double turn = wrap_angle(std::atan2(d.y, d.x) - cur.theta());
    if (std::abs(turn) > 1e-12) {
      motions.push_back({cur, 0.0, turn, std::abs(turn) / turn_rate});
      cur = motions.back().at(motions.back().duration);
    }
    const double len = d.norm();
    motions.push_back({cur, len, 0.0, len / speed});
    cur = motions.back().at(motions.back().duration);
  }

  Trajectory traj;
  traj.name = name;
  traj.dt = 1.0 / rate_hz;
  double total = 0.0;
  for (const auto& m : motions) total += m.duration;
  const auto n = static_cast<std::size_t>(std::floor(total / traj.dt + 1e-9));
  std::size_t seg = 0;
  double seg_start = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = traj.stamp(k);
    while (seg + 1 < motions.size() && t > seg_start + motions[seg].duration) {
      seg_start += motions[seg].duration;
      ++seg;
    }
    traj.poses.push_back(motions[seg].at(t - seg_start));
  }
  return traj;
}

namespace {

std::vector<Point2> slalom(const WorldModel& world, const TrajectoryConfig& cfg, bool reverse, bool mirror) {
  const double cy = 0.5 * (world.channel_y_min + world.channel_y_max);
  const double amp = 0.5 * (world.channel_y_max - world.channel_y_min) - cfg.edge_margin;
  if (!(amp > 0.0)) throw InvalidArgument("trajectory: channel too narrow for the edge margin");
  if (!(cfg.leg_length > 0.0)) throw InvalidArgument("trajectory: leg_length must be positive");
  std::vector<Point2> pts{{world.start.x, cy}};
  double side = mirror ? -1.0 : 1.0;
  for (double x = world.start.x + 0.5 * cfg.leg_length; x < world.goal.x - 0.25 * cfg.leg_length;
       x += cfg.leg_length) {
    pts.push_back({x, cy + side * amp});
    side = -side;
  }
  pts.push_back({world.goal.x, cy});
  if (reverse) std::reverse(pts.begin(), pts.end());
  return pts;
}

std::vector<Point2> out_and_back_points(const WorldModel& world, const TrajectoryConfig& cfg) {
  auto pts = slalom(world, cfg, false, false);
  const auto back = slalom(world, cfg, true, true);
  pts.insert(pts.end(), back.begin(), back.end());
  return pts;
}

}  // namespace

Trajectory fly_through(const WorldModel& world, const TrajectoryConfig& cfg) {
  return trajectory_from_waypoints("fly-through", slalom(world, cfg, false, false), cfg.speed, cfg.turn_rate,
                                   cfg.rate_hz);
}

Trajectory out_and_back(const WorldModel& world, const TrajectoryConfig& cfg) {
  return trajectory_from_waypoints("out-and-back", out_and_back_points(world, cfg), cfg.speed, cfg.turn_rate,
                                   cfg.rate_hz);
}

Trajectory long_distance(const WorldModel& world, const TrajectoryConfig& cfg) {
  if (cfg.laps < 1) throw InvalidArgument("trajectory: laps must be at least 1");
  std::vector<Point2> pts;
  const auto lap = out_and_back_points(world, cfg);
  for (int k = 0; k < cfg.laps; ++k) pts.insert(pts.end(), lap.begin(), lap.end());
  return trajectory_from_waypoints("long-distance", pts, cfg.speed, cfg.turn_rate, cfg.rate_hz);
}

Trajectory make_trajectory(const std::string& kind, const WorldModel& world, const TrajectoryConfig& cfg) {
  if (kind == "fly-through") return fly_through(world, cfg);
  if (kind == "out-and-back") return out_and_back(world, cfg);
  if (kind == "long-distance") return long_distance(world, cfg);
  throw InvalidArgument("unknown trajectory '" + kind + "' (fly-through, out-and-back, long-distance)");
}

double path_length(const Trajectory& traj) {
  double len = 0.0;
  for (std::size_t k = 1; k < traj.poses.size(); ++k) {
    len += distance(traj.poses[k - 1].translation(), traj.poses[k].translation());
  }
  return len;
}

void check_collision_free(const WorldModel& world, const Trajectory& traj, double min_clearance) {
  for (std::size_t k = 0; k < traj.poses.size(); ++k) {
    const Point2 p = traj.poses[k].translation();
    if (!world.in_water(p) || world.clearance(p) < min_clearance) {
      throw InvalidArgument("trajectory '" + traj.name + "' collides at sample " + std::to_string(k) + " " +
                            to_string(traj.poses[k]));
    }
  }
}

void DeadReckoningConfig::validate() const {
  if (!(sigma_velocity >= 0.0 && sigma_theta >= 0.0 && sigma_xy_init >= 0.0 && sigma_theta_init >= 0.0)) {
    throw InvalidArgument("dead reckoning: sigmas must be non-negative");
  }
}

std::vector<Pose2> simulate_dead_reckoning(const std::vector<Pose2>& poses, const std::vector<double>& stamps,
                                           double dt, const DeadReckoningConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  if (!(dt > 0.0)) throw InvalidArgument("dead reckoning: dt must be positive");
  if (poses.size() != stamps.size()) throw InvalidArgument("dead reckoning: one stamp per pose");
  for (std::size_t k = 1; k < stamps.size(); ++k) {
    if (!(stamps[k] > stamps[k - 1]) || std::abs(stamps[k] - stamps[k - 1] - dt) > 1e-6 * dt) {
      throw InvalidArgument("dead reckoning: stamps must increase by dt (sample " + std::to_string(k) + ")");
    }
  }
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Pose2> out;
  out.reserve(poses.empty() ? 0 : poses.size() - 1);
  for (std::size_t k = 1; k < poses.size(); ++k) {
    const Pose2 d = between(poses[k - 1], poses[k]);
    const double dv = cfg.sigma_velocity * dt * n01(rng);
    const double dth = cfg.sigma_theta * dt * n01(rng);
    out.emplace_back(d.x() + dv, d.y(), d.theta() + dth);
  }
  return out;
}

std::vector<Pose2> simulate_dead_reckoning(const Trajectory& traj, const DeadReckoningConfig& cfg,
                                           std::uint64_t rng_seed) {
  std::vector<double> stamps(traj.poses.size());
  for (std::size_t k = 0; k < stamps.size(); ++k) stamps[k] = traj.stamp(k);
  return simulate_dead_reckoning(traj.poses, stamps, traj.dt, cfg, rng_seed);
}

}  // namespace sonar_oi
