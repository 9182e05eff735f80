#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sonar_oi/config.hpp"
#include "sonar_oi/error.hpp"
#include "sonar_oi/mission.hpp"
#include "sonar_oi/translator_client.hpp"
#include "support/echo_server.hpp"

using namespace sonar_oi;
namespace fs = std::filesystem;

namespace {

// Walled basin with pier stubs on both sides and a block at the east end, so every
// keyframe near the end of a west-to-east run sees corners.
WorldModel basin() {
  WorldModel w;
  w.bounds_min = {0, 0};
  w.bounds_max = {100, 60};
  const auto s = CellClass::Structure;
  w.structures.push_back(make_rectangle({0, 0}, {100, 3}, s));
  w.structures.push_back(make_rectangle({0, 57}, {100, 60}, s));
  w.structures.push_back(make_rectangle({0, 3}, {3, 57}, s));
  w.structures.push_back(make_rectangle({97, 3}, {100, 57}, s));
  for (double x : {20.0, 45.0, 70.0}) {
    w.structures.push_back(make_rectangle({x, 3}, {x + 2, 15}, s));
    w.structures.push_back(make_rectangle({x + 10, 45}, {x + 12, 57}, s));
  }
  w.structures.push_back(make_rectangle({84, 24}, {90, 34}, s));
  w.start = {10, 30};
  w.goal = {72, 30};
  w.channel_y_min = 18;
  w.channel_y_max = 42;
  return w;
}

Trajectory basin_run() {
  return trajectory_from_waypoints("basin", {{10, 30}, {40, 22}, {60, 38}, {72, 30}}, 1.0, deg2rad(30.0), 5.0);
}

Trajectory straight(double length) {
  return trajectory_from_waypoints("straight", {{0, 0}, {length, 0}}, 1.0, deg2rad(30.0), 5.0);
}

Pose2 integrate(const Pose2& start, const std::vector<Pose2>& odo) {
  Pose2 p = start;
  for (const auto& o : odo) p = compose(p, o);
  return p;
}

// One fly-through mission pair shared by several cases; computed once.
struct FlyThrough {
  WorldModel world;
  Trajectory traj;
  MissionReport baseline;
  MissionReport proposed;
};

const FlyThrough& fly_through_pair() {
  static const FlyThrough ft = [] {
    FlyThrough f;
    f.world = generate_marina(1, GeneratorConfig{});
    const MissionConfig cfg;
    f.traj = fly_through(f.world, cfg.trajectory);
    f.baseline = run_mission(f.world, f.traj, MissionMode::Baseline, cfg, 7);
    f.proposed = run_mission(f.world, f.traj, MissionMode::Proposed, cfg, 7);
    return f;
  }();
  return ft;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sonar_oi_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("built-in trajectories stay in open water") {
  for (std::uint64_t seed : {0, 1, 2, 3, 4}) {
    const auto world = generate_marina(seed, GeneratorConfig{});
    TrajectoryConfig cfg;
    cfg.laps = 2;
    for (const char* kind : {"fly-through", "out-and-back", "long-distance"}) {
      const auto traj = make_trajectory(kind, world, cfg);
      CAPTURE(seed);
      CAPTURE(kind);
      CHECK_NOTHROW(check_collision_free(world, traj, MissionConfig{}.min_clearance));
      CHECK(traj.poses.size() > 2);
    }
    const auto ft = fly_through(world, cfg);
    const auto ob = out_and_back(world, cfg);
    const auto ld = long_distance(world, cfg);
    // Sampling at a fixed rate may stop up to one step short of the final waypoint.
    CHECK(distance(ob.poses.back().translation(), ob.poses.front().translation()) <= cfg.speed * ob.dt + 1e-9);
    CHECK(path_length(ob) == doctest::Approx(2.0 * path_length(ft)).epsilon(0.02));
    CHECK(path_length(ld) == doctest::Approx(2.0 * path_length(ob)).epsilon(0.02));
  }
}

TEST_CASE("waypoint follower holds speed and turn rate") {
  const auto traj = trajectory_from_waypoints("sq", {{0, 0}, {10, 0}, {10, 10}}, 1.0, deg2rad(30.0), 5.0);
  for (std::size_t k = 1; k < traj.poses.size(); ++k) {
    const Pose2 d = between(traj.poses[k - 1], traj.poses[k]);
    CHECK(d.translation().norm() <= 1.0 * traj.dt + 1e-9);
    CHECK(std::abs(d.theta()) <= deg2rad(30.0) * traj.dt + 1e-9);
  }
  CHECK(path_length(traj) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK_THROWS_AS(check_collision_free(basin(), straight(200.0), 1.0), InvalidArgument);
}

TEST_CASE("dead reckoning without noise reproduces the trajectory") {
  DeadReckoningConfig cfg;
  cfg.sigma_velocity = 0.0;
  cfg.sigma_theta = 0.0;
  const auto world = generate_marina(2, GeneratorConfig{});
  const auto traj = fly_through(world);
  const auto odo = simulate_dead_reckoning(traj, cfg, 11);
  REQUIRE(odo.size() == traj.poses.size() - 1);
  Pose2 p = traj.poses.front();
  for (std::size_t k = 0; k < odo.size(); ++k) {
    p = compose(p, odo[k]);
    const Pose2 e = between(traj.poses[k + 1], p);
    REQUIRE(std::abs(e.x()) < 1e-9);
    REQUIRE(std::abs(e.y()) < 1e-9);
    REQUIRE(std::abs(e.theta()) < 1e-9);
  }
}

TEST_CASE("dead reckoning rejects bad timestamps and configs") {
  const auto traj = straight(10.0);
  std::vector<double> stamps;
  for (std::size_t k = 0; k < traj.poses.size(); ++k) stamps.push_back(traj.stamp(k));
  CHECK_NOTHROW((void)simulate_dead_reckoning(traj.poses, stamps, traj.dt, {}, 1));

  auto swapped = stamps;
  std::swap(swapped[3], swapped[4]);
  CHECK_THROWS_AS((void)simulate_dead_reckoning(traj.poses, swapped, traj.dt, {}, 1), InvalidArgument);
  auto repeated = stamps;
  repeated[5] = repeated[4];
  CHECK_THROWS_AS((void)simulate_dead_reckoning(traj.poses, repeated, traj.dt, {}, 1), InvalidArgument);
  auto short_stamps = stamps;
  short_stamps.pop_back();
  CHECK_THROWS_AS((void)simulate_dead_reckoning(traj.poses, short_stamps, traj.dt, {}, 1), InvalidArgument);

  DeadReckoningConfig bad;
  bad.sigma_velocity = -0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS((void)simulate_dead_reckoning(traj, bad, 1), InvalidArgument);
}

TEST_CASE("dead reckoning is deterministic per seed") {
  const auto traj = straight(20.0);
  const auto a = simulate_dead_reckoning(traj, {}, 5);
  const auto b = simulate_dead_reckoning(traj, {}, 5);
  const auto c = simulate_dead_reckoning(traj, {}, 6);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].x() == b[k].x());
    CHECK(a[k].theta() == b[k].theta());
    differs = differs || a[k].x() != c[k].x();
  }
  CHECK(differs);
}

TEST_CASE("stationary drift has zero mean") {
  Trajectory still;
  still.name = "still";
  still.dt = 0.2;
  still.poses.assign(300, Pose2(5.0, -2.0, 0.7));
  const int n = 1000;
  std::vector<double> xs;
  std::vector<double> ys;
  for (int s = 0; s < n; ++s) {
    const auto odo = simulate_dead_reckoning(still, {}, static_cast<std::uint64_t>(s));
    const Pose2 e = between(still.poses.front(), integrate(still.poses.front(), odo));
    xs.push_back(e.x());
    ys.push_back(e.y());
  }
  for (const auto* v : {&xs, &ys}) {
    double mean = 0.0;
    for (double x : *v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : *v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / (n - 1));
    CHECK(sd > 0.0);
    CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("straight transit drift matches the random-walk variance") {
  // Heading error after m steps is a sum of m increments with sd s = sigma_theta * dt, and
  // each step of length d moves sideways by about d * heading error, so the terminal
  // cross-track variance is d^2 s^2 sum_{m < N} m^2. Along track only the speed noise adds up.
  const auto traj = straight(100.0);
  const DeadReckoningConfig cfg;
  const int steps = static_cast<int>(traj.poses.size()) - 1;
  const double d = 1.0 * traj.dt;
  const double s = cfg.sigma_theta * traj.dt;
  double sum_m2 = 0.0;
  for (int m = 0; m < steps; ++m) sum_m2 += static_cast<double>(m) * m;
  const double var_cross = d * d * s * s * sum_m2;
  const double var_along = steps * std::pow(cfg.sigma_velocity * traj.dt, 2);

  const int n = 2000;
  double sy = 0.0;
  double sx = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto odo = simulate_dead_reckoning(traj, cfg, static_cast<std::uint64_t>(k));
    const Pose2 p = integrate(traj.poses.front(), odo);
    sy += p.y() * p.y();
    const double ex = p.x() - 100.0;
    sx += ex * ex;
  }
  CHECK(sy / n == doctest::Approx(var_cross).epsilon(0.10));
  // Along track the cosine of the heading error shortens every step a little; that bias
  // adds (sum d s^2 m / 2)^2 to the squared error.
  double bias = 0.0;
  for (int m = 0; m < steps; ++m) bias += 0.5 * d * s * s * m;
  CHECK(sx / n == doctest::Approx(var_along + bias * bias).epsilon(0.15));
}

TEST_CASE("straight transit drift bands are stable") {
  // Percentiles of the terminal drift over seeds 0..499, frozen from a Monte Carlo run.
  const auto traj = straight(100.0);
  std::vector<double> drift;
  for (int k = 0; k < 500; ++k) {
    const auto odo = simulate_dead_reckoning(traj, {}, static_cast<std::uint64_t>(k));
    drift.push_back(distance(integrate(traj.poses.front(), odo).translation(), traj.poses.back().translation()));
  }
  std::sort(drift.begin(), drift.end());
  CHECK(drift[50] == doctest::Approx(0.72738134100969287).epsilon(1e-9));
  CHECK(drift[250] == doctest::Approx(3.1985836851057394).epsilon(1e-9));
  CHECK(drift[450] == doctest::Approx(7.4711561078424964).epsilon(1e-9));
  // O(meters) and never exactly zero.
  CHECK(drift.front() > 0.0);
  CHECK(drift[250] > 1.0);
  CHECK(drift[250] < 10.0);
}

TEST_CASE("metrics examples") {
  const std::vector<Pose2> truth{{2, 1, 0.3}, {5, 2, 0.5}, {7, -1, -2.0}};
  SUBCASE("identical trajectories") {
    const auto m = compute_metrics(truth, truth);
    CHECK(m.count == 3);
    CHECK(m.position_mae == 0.0);
    CHECK(m.position_rmse == 0.0);
    CHECK(m.yaw_mae == 0.0);
    CHECK(m.yaw_rmse == 0.0);
  }
  SUBCASE("constant offset in the initial keyframe frame") {
    std::vector<Pose2> est;
    const Pose2 origin = truth.front();
    for (const auto& t : truth) {
      const Pose2 rel = between(origin, t);
      est.push_back(compose(origin, Pose2(rel.x() + 0.6, rel.y() - 0.8, rel.theta())));
    }
    const auto m = compute_metrics(est, truth);
    CHECK(m.position_mae == doctest::Approx(1.0));
    CHECK(m.position_rmse == doctest::Approx(1.0));
    CHECK(m.yaw_mae == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("two poses with errors 3 and 4") {
    const std::vector<Pose2> t2{{0, 0, 0}, {10, 0, 0}};
    const std::vector<Pose2> e2{{3, 0, 0}, {10, 4, 0}};
    const auto m = compute_metrics(e2, t2);
    CHECK(m.position_mae == doctest::Approx(3.5));
    CHECK(m.position_rmse == doctest::Approx(std::sqrt(12.5)));
  }
  SUBCASE("yaw uses the short way round") {
    const std::vector<Pose2> t2{{0, 0, 0}, {1, 0, kPi - 0.01}};
    const std::vector<Pose2> e2{{0, 0, 0}, {1, 0, -kPi + 0.01}};
    CHECK(compute_metrics(e2, t2).yaw_mae == doctest::Approx(0.01).epsilon(1e-9));
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS((void)compute_metrics(std::vector<Pose2>{}, std::vector<Pose2>{}), InvalidArgument);
    CHECK_THROWS_AS((void)compute_metrics(truth, std::vector<Pose2>(truth.begin(), truth.end() - 1)),
                    InvalidArgument);
  }
}

TEST_CASE("RMSE is never below MAE") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Pose2> t;
    std::vector<Pose2> e;
    const int count = 2 + trial % 20;
    for (int k = 0; k < count; ++k) {
      t.emplace_back(n(rng) * 10, n(rng) * 10, n(rng));
      e.emplace_back(t.back().x() + n(rng), t.back().y() + n(rng), t.back().theta() + 0.1 * n(rng));
    }
    const auto m = compute_metrics(e, t);
    CHECK(m.position_rmse >= m.position_mae - 1e-12);
    CHECK(m.yaw_rmse >= m.yaw_mae - 1e-12);
  }
  const auto& ft = fly_through_pair();
  for (const auto* r : {&ft.baseline, &ft.proposed}) {
    const auto m = compute_metrics(*r);
    CHECK(m.position_rmse >= m.position_mae);
    CHECK(m.yaw_rmse >= m.yaw_mae);
  }
}

TEST_CASE("baseline without any noise is nearly exact") {
  const auto world = generate_marina(0, GeneratorConfig{});
  MissionConfig cfg;
  cfg.sonar_noise = NoiseConfig::disabled();
  cfg.dead_reckoning.sigma_velocity = 0.0;
  cfg.dead_reckoning.sigma_theta = 0.0;
  cfg.dead_reckoning.sigma_xy_init = 0.0;
  cfg.dead_reckoning.sigma_theta_init = 0.0;
  const auto report = run_mission(world, fly_through(world, cfg.trajectory), MissionMode::Baseline, cfg, 3);
  CHECK(compute_metrics(report).position_mae < 0.1);
}

TEST_CASE("proposed beats baseline on the same seed") {
  const auto& ft = fly_through_pair();
  const auto mb = compute_metrics(ft.baseline);
  const auto mp = compute_metrics(ft.proposed);
  CHECK(mp.position_mae < mb.position_mae);
  REQUIRE(ft.baseline.keyframes.size() == ft.proposed.keyframes.size());
  for (std::size_t k = 0; k < ft.baseline.keyframes.size(); ++k) {
    // Same seed, same odometry and the same keyframe steps.
    CHECK(ft.baseline.keyframes[k].step == ft.proposed.keyframes[k].step);
    CHECK(ft.baseline.keyframes[k].dead_reckoned.x() == ft.proposed.keyframes[k].dead_reckoned.x());
  }
}

TEST_CASE("baseline has no overhead-image factors") {
  const auto& ft = fly_through_pair();
  for (const auto& f : ft.baseline.graph.factors()) CHECK(f.kind != FactorKind::OI);
  for (const auto& e : ft.baseline.factor_log) CHECK(e.kind != FactorKind::OI);
  int oi = 0;
  for (const auto& f : ft.proposed.graph.factors()) oi += f.kind == FactorKind::OI ? 1 : 0;
  CHECK(oi > 0);
}

TEST_CASE("every graph factor appears once in the factor log") {
  const auto& ft = fly_through_pair();
  for (const auto* r : {&ft.baseline, &ft.proposed}) {
    const auto& factors = r->graph.factors();
    std::vector<int> seen(factors.size(), 0);
    for (const auto& e : r->factor_log) {
      if (!e.accepted) {
        CHECK(e.graph_index == -1);
        CHECK_FALSE(e.reason.empty());
        continue;
      }
      REQUIRE(e.graph_index >= 0);
      REQUIRE(e.graph_index < static_cast<long>(factors.size()));
      const auto& f = factors[static_cast<std::size_t>(e.graph_index)];
      CHECK(f.kind == e.kind);
      CHECK(f.i == e.i);
      CHECK(f.j == e.j);
      ++seen[static_cast<std::size_t>(e.graph_index)];
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("graph shape follows the keyframe chain") {
  const auto& ft = fly_through_pair();
  const auto& g = ft.proposed.graph;
  int anchor_priors = 0;
  for (const auto& f : g.factors()) {
    if (f.kind == FactorKind::Prior && f.i == g.anchor_id()) ++anchor_priors;
    if (f.kind == FactorKind::SSM) CHECK(f.j == f.i + 1);
    if (f.kind == FactorKind::NSSM) CHECK(f.j - f.i >= MissionConfig{}.loop_closure.min_separation);
    if (f.kind == FactorKind::OI) CHECK(f.i == g.anchor_id());
  }
  CHECK(anchor_priors == 1);
  CHECK_NOTHROW(check_constrained(g));
  // One SSM factor per keyframe after the first.
  int ssm = 0;
  for (const auto& f : g.factors()) ssm += f.kind == FactorKind::SSM ? 1 : 0;
  CHECK(ssm == static_cast<int>(ft.proposed.keyframes.size()) - 1);
}

TEST_CASE("keyframes follow the odometry gates") {
  const auto& ft = fly_through_pair();
  const MissionConfig cfg;
  const auto& kfs = ft.baseline.keyframes;
  CHECK(kfs.front().step == 0);
  for (std::size_t k = 1; k < kfs.size(); ++k) {
    CHECK(kfs[k].step > kfs[k - 1].step);
    CHECK(kfs[k].id == kfs[k - 1].id + 1);
    const Pose2 rel = between(kfs[k - 1].dead_reckoned, kfs[k].dead_reckoned);
    const bool gated = rel.translation().norm() >= cfg.keyframes.translation_gate - 1e-9 ||
                       std::abs(rel.theta()) >= cfg.keyframes.rotation_gate - 1e-9;
    CHECK(gated);
  }
}

TEST_CASE("missions are deterministic") {
  const auto world = generate_marina(4, GeneratorConfig{});
  const MissionConfig cfg;
  const auto traj = fly_through(world, cfg.trajectory);
  for (auto mode : {MissionMode::Baseline, MissionMode::Proposed}) {
    const auto a = run_mission(world, traj, mode, cfg, 21);
    const auto b = run_mission(world, traj, mode, cfg, 21);
    CHECK(canonical_text(a) == canonical_text(b));
    const auto c = run_mission(world, traj, mode, cfg, 22);
    CHECK(canonical_text(a) != canonical_text(c));
  }
}

TEST_CASE("zero-corruption oracle bounds the terminal error") {
  const auto world = basin();
  const auto traj = basin_run();
  for (double scale : {1.0, 4.0}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      MissionConfig cfg;
      cfg.dead_reckoning.sigma_velocity *= scale;
      cfg.dead_reckoning.sigma_theta *= scale;
      const auto report = run_mission(world, traj, MissionMode::Proposed, cfg, seed);
      CAPTURE(scale);
      CAPTURE(seed);
      // The run ends facing the east block, so the final keyframe gets an OI factor.
      const auto& last = report.factor_log.back();
      CHECK(last.kind == FactorKind::OI);
      CHECK(last.accepted);
      CHECK(compute_metrics(report).per_keyframe.back().position <= 0.5);
    }
  }
}

TEST_CASE("unreachable translator degrades to no overhead-image factors") {
  const auto world = basin();
  const auto traj = basin_run();
  RemoteTranslatorConfig rc;
  {
    // Grab a free port and release it so nothing is listening there.
    fixtures::EchoServer probe;
    rc.port = probe.port();
  }
  rc.timeout = std::chrono::milliseconds(200);
  RemoteTranslator remote(rc);
  const MissionConfig cfg;
  MissionReport report;
  REQUIRE_NOTHROW(report = run_mission(world, traj, MissionMode::Proposed, cfg, 2, &remote));
  int oi_logged = 0;
  for (const auto& e : report.factor_log) {
    if (e.kind != FactorKind::OI) continue;
    ++oi_logged;
    CHECK_FALSE(e.accepted);
    CHECK(e.reason.find("unavailable") != std::string::npos);
  }
  CHECK(oi_logged == static_cast<int>(report.keyframes.size()));
  for (const auto& f : report.graph.factors()) CHECK(f.kind != FactorKind::OI);
}

TEST_CASE("remote translator feeds the mission") {
  const auto world = basin();
  const auto traj = basin_run();
  fixtures::EchoServer server;
  RemoteTranslatorConfig rc;
  rc.port = server.port();
  RemoteTranslator remote(rc);
  const auto report = run_mission(world, traj, MissionMode::Proposed, MissionConfig{}, 2, &remote);
  int answered = 0;
  for (const auto& e : report.factor_log) {
    if (e.kind == FactorKind::OI && e.reason.find("unavailable") == std::string::npos) ++answered;
  }
  CHECK(answered == static_cast<int>(report.keyframes.size()));
}

TEST_CASE("mission input validation") {
  const auto world = basin();
  MissionConfig cfg;
  Trajectory one;
  one.poses = {Pose2(10, 30, 0)};
  CHECK_THROWS_AS((void)run_mission(world, one, MissionMode::Baseline, cfg, 0), InvalidArgument);
  CHECK_THROWS_AS((void)run_mission(world, straight(20.0), MissionMode::Baseline, cfg, 0), InvalidArgument);
  cfg.keyframes.translation_gate = 0.0;
  CHECK_THROWS_AS((void)run_mission(world, basin_run(), MissionMode::Baseline, cfg, 0), InvalidArgument);
  CHECK(mission_mode_from_string("baseline") == MissionMode::Baseline);
  CHECK(mission_mode_from_string(to_string(MissionMode::Proposed)) == MissionMode::Proposed);
  CHECK_THROWS_AS((void)mission_mode_from_string("both"), InvalidArgument);
}

TEST_CASE("report files round trip") {
  const auto& ft = fly_through_pair();
  const auto dir = temp_dir("report");
  write_report(dir, ft.proposed, ft.world);
  for (const char* f : {"metrics.csv", "factors.tsv", "keyframes.tsv", "graph.g2o", "trajectory.svg", "timing.tsv"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto kfs = read_keyframes_tsv(dir / "keyframes.tsv");
  REQUIRE(kfs.size() == ft.proposed.keyframes.size());
  std::vector<Pose2> est;
  std::vector<Pose2> truth;
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    const auto& a = kfs[k];
    const auto& b = ft.proposed.keyframes[k];
    CHECK(a.id == b.id);
    CHECK(a.step == b.step);
    CHECK(a.estimate.x() == b.estimate.x());
    CHECK(a.estimate.theta() == b.estimate.theta());
    CHECK(a.truth.y() == b.truth.y());
    CHECK(a.dead_reckoned.x() == b.dead_reckoned.x());
    est.push_back(a.estimate);
    truth.push_back(a.truth);
  }
  const auto m = compute_metrics(est, truth);
  CHECK(m.position_mae == compute_metrics(ft.proposed).position_mae);

  std::ifstream csv(dir / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "count,position_mae_m,position_rmse_m,yaw_mae_deg,yaw_rmse_deg");

  std::ifstream g2o(dir / "graph.g2o");
  const auto g = read_g2o(g2o);
  CHECK(g.factors().size() == ft.proposed.graph.factors().size());
  CHECK(g.values().size() == ft.proposed.graph.values().size());

  std::ofstream(dir / "bad.tsv") << "id\tstep\n1\t2\n";
  CHECK_THROWS_AS((void)read_keyframes_tsv(dir / "bad.tsv"), InvalidArgument);
  fs::remove_all(dir);
}

TEST_CASE("config JSON round trip") {
  AppConfig cfg;
  cfg.mission.sonar.max_range = 25.0;
  cfg.mission.loop_closure.enabled = false;
  cfg.mission.keyframes.rotation_gate = deg2rad(20.0);
  cfg.mission.oi.corruption.jitter_px = 2;
  cfg.world.vessel_count = 3;
  const std::string text = config_to_json(cfg);
  const AppConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.mission.sonar.max_range == 25.0);
  CHECK_FALSE(back.mission.loop_closure.enabled);
  CHECK(back.mission.keyframes.rotation_gate == doctest::Approx(deg2rad(20.0)).epsilon(1e-12));
  CHECK(back.mission.oi.corruption.jitter_px == 2);
  CHECK(back.world.vessel_count == 3);
  CHECK(text.find("\"rotation_gate_deg\": 20.0") != std::string::npos);
  CHECK(config_to_json(AppConfig{}).find("\"rotation_gate_deg\": 30.0") != std::string::npos);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  const AppConfig shipped = load_config(SONAR_OI_SOURCE_DIR "/configs/default.json");
  CHECK(config_to_json(shipped) == config_to_json(AppConfig{}));
}

TEST_CASE("config JSON defaults, unknown keys and bad values") {
  const AppConfig partial = config_from_json(R"({"keyframes": {"translation_gate": 3.0}})");
  CHECK(partial.mission.keyframes.translation_gate == 3.0);
  CHECK(config_to_json(config_from_json("{}")) == config_to_json(AppConfig{}));

  CHECK_THROWS_AS((void)config_from_json(R"({"sonar": {"fovv": 1}})"), InvalidArgument);
  CHECK_THROWS_AS((void)config_from_json(R"({"missions": {}})"), InvalidArgument);
  CHECK_THROWS_AS((void)config_from_json(R"({"sonar": {"max_range": "far"}})"), InvalidArgument);
  CHECK_THROWS_AS((void)config_from_json(R"({"keyframes": {"translation_gate": -1}})"),
                  InvalidArgument);
  CHECK_THROWS_AS((void)config_from_json("{not json"), InvalidArgument);
  try {
    (void)config_from_json(R"({"sonar": {"fovv": 1}})");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("fovv") != std::string::npos);
  }

  const auto dir = temp_dir("config");
  save_config(dir / "c.json", partial);
  CHECK(config_to_json(load_config(dir / "c.json")) == config_to_json(partial));
  fs::remove_all(dir);
}

TEST_CASE("world JSON round trip is exact") {
  const auto world = generate_marina(9, GeneratorConfig{});
  const auto back = world_from_json(world_to_json(world));
  CHECK(world_to_json(back) == world_to_json(world));
  REQUIRE(back.structures.size() == world.structures.size());
  REQUIRE(back.vessels.size() == world.vessels.size());
  for (std::size_t k = 0; k < world.structures.size(); ++k) {
    REQUIRE(back.structures[k].vertices.size() == world.structures[k].vertices.size());
    for (std::size_t v = 0; v < world.structures[k].vertices.size(); ++v) {
      CHECK(back.structures[k].vertices[v].x == world.structures[k].vertices[v].x);
      CHECK(back.structures[k].vertices[v].y == world.structures[k].vertices[v].y);
    }
  }
  CHECK(back.start.x == world.start.x);
  CHECK(back.channel_y_max == world.channel_y_max);
  // Same rasterization from the reloaded world.
  CHECK(to_text(rasterize(back, 0.5)) == to_text(rasterize(world, 0.5)));
  CHECK_THROWS_AS((void)world_from_json(R"({"bounds_min": [0, 0]})"), InvalidArgument);
}

TEST_CASE("paired benchmark uses one seed for both modes") {
  AppConfig cfg;
  cfg.world = GeneratorConfig{};
  const auto run = run_paired(cfg, "fly-through", 1);
  CHECK(run.seed == 1);
  CHECK(run.keyframes > 10);
  CHECK(run.proposed.position_mae < run.baseline.position_mae);
  CHECK(run.oi_accepted > 0);
  BenchSummary summary;
  summary.trajectory = "fly-through";
  summary.runs = {run};
  summary.baseline_mae = run.baseline.position_mae;
  summary.proposed_mae = run.proposed.position_mae;
  const auto table = format_benchmark(summary);
  CHECK(table.find("fly-through") != std::string::npos);
  CHECK(summary.ratio() == doctest::Approx(run.proposed.position_mae / run.baseline.position_mae));
}
