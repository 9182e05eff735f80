#include "sonar_oi/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sonar_oi/error.hpp"

namespace sonar_oi {

namespace {

using nlohmann::json;

// Walks a config struct once for both directions, so reading and writing cannot drift apart.
class Binder {
 public:
  Binder(json& node, bool reading, std::string path) : node_(node), reading_(reading), path_(std::move(path)) {
    if (reading_ && !node_.is_object()) throw InvalidArgument("config: '" + where() + "' must be an object");
  }
  ~Binder() noexcept(false) {
    if (!reading_ || std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : node_.items()) {
      if (!seen_.contains(key)) throw InvalidArgument("config: unknown key '" + join(key) + "'");
    }
  }

  void number(const char* key, double& v) { scaled(key, v, 1.0); }
  // Written with 15 significant digits so defaults such as 30 degrees print as 30.
  void degrees(const char* key, double& radians) {
    seen_.insert(key);
    if (!reading_) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.15g", rad2deg(radians));
      node_[key] = std::strtod(buf, nullptr);
    } else if (node_.contains(key)) {
      if (!node_[key].is_number()) throw InvalidArgument("config: '" + join(key) + "' must be a number");
      radians = deg2rad(node_[key].get<double>());
    }
  }
  void integer(const char* key, int& v) {
    seen_.insert(key);
    if (!reading_) {
      node_[key] = v;
    } else if (node_.contains(key)) {
      if (!node_[key].is_number_integer()) throw InvalidArgument("config: '" + join(key) + "' must be an integer");
      v = node_[key].get<int>();
    }
  }
  void boolean(const char* key, bool& v) {
    seen_.insert(key);
    if (!reading_) {
      node_[key] = v;
    } else if (node_.contains(key)) {
      if (!node_[key].is_boolean()) throw InvalidArgument("config: '" + join(key) + "' must be true or false");
      v = node_[key].get<bool>();
    }
  }
  template <typename F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    if (!reading_) node_[key] = json::object();
    if (reading_ && !node_.contains(key)) return;
    Binder sub(node_[key], reading_, join(key));
    body(sub);
  }

 private:
  void scaled(const char* key, double& v, double scale) {
    seen_.insert(key);
    if (!reading_) {
      node_[key] = v / scale;
    } else if (node_.contains(key)) {
      if (!node_[key].is_number()) throw InvalidArgument("config: '" + join(key) + "' must be a number");
      v = node_[key].get<double>() * scale;
    }
  }
  [[nodiscard]] std::string where() const { return path_.empty() ? "<root>" : path_; }
  [[nodiscard]] std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  json& node_;
  bool reading_;
  std::string path_;
  std::set<std::string> seen_;
};

void bind(Binder& b, IcpConfig& c) {
  b.integer("max_iterations", c.max_iterations);
  b.number("correspondence_dist", c.correspondence_dist);
  b.number("convergence_translation", c.convergence_translation);
  b.number("convergence_rotation", c.convergence_rotation);
  b.integer("min_points", c.min_points);
}

void bind(Binder& b, ConsensusSearch& c) {
  b.number("xy_extent", c.xy_extent);
  b.number("xy_step", c.xy_step);
  b.degrees("yaw_extent_deg", c.yaw_extent);
  b.degrees("yaw_step_deg", c.yaw_step);
  b.number("inlier_dist", c.inlier_dist);
}

void bind(Binder& b, AppConfig& app) {
  b.section("world", [&](Binder& s) {
    auto& w = app.world;
    s.number("width", w.width);
    s.number("height", w.height);
    s.number("wall_thickness", w.wall_thickness);
    s.integer("pier_count", w.pier_count);
    s.number("pier_length_min", w.pier_length_min);
    s.number("pier_length_max", w.pier_length_max);
    s.number("pier_width_min", w.pier_width_min);
    s.number("pier_width_max", w.pier_width_max);
    s.number("min_pier_gap", w.min_pier_gap);
    s.number("end_clearance", w.end_clearance);
    s.integer("vessel_count", w.vessel_count);
    s.number("vessel_length_min", w.vessel_length_min);
    s.number("vessel_length_max", w.vessel_length_max);
    s.number("vessel_beam_min", w.vessel_beam_min);
    s.number("vessel_beam_max", w.vessel_beam_max);
    s.number("channel_width", w.channel_width);
    s.integer("max_attempts", w.max_attempts);
  });
  auto& m = app.mission;
  b.section("sonar", [&](Binder& s) {
    s.degrees("fov_deg", m.sonar.fov);
    s.number("max_range", m.sonar.max_range);
    s.integer("n_beams", m.sonar.n_beams);
    s.integer("n_range_bins", m.sonar.n_range_bins);
    s.number("rate_hz", m.sonar.rate_hz);
  });
  b.section("sonar_noise", [&](Binder& s) {
    s.number("speckle_sigma", m.sonar_noise.speckle_sigma);
    s.number("background_level", m.sonar_noise.background_level);
    s.number("p_second_return", m.sonar_noise.p_second_return);
    s.number("dropout_prob", m.sonar_noise.dropout_prob);
    s.number("second_return_gain", m.sonar_noise.second_return_gain);
    s.number("hit_gain", m.sonar_noise.hit_gain);
  });
  b.section("cfar", [&](Binder& s) {
    s.integer("train_cells", m.cfar.train_cells);
    s.integer("guard_cells", m.cfar.guard_cells);
    s.number("threshold_factor", m.cfar.threshold_factor);
    s.number("min_intensity", m.cfar.min_intensity);
  });
  b.section("raster", [&](Binder& s) {
    s.integer("rows", m.raster.rows);
    s.integer("cols", m.raster.cols);
    s.number("resolution", m.raster.resolution);
  });
  b.number("overhead_resolution", m.overhead_resolution);
  b.section("dead_reckoning", [&](Binder& s) {
    s.number("sigma_velocity", m.dead_reckoning.sigma_velocity);
    s.degrees("sigma_theta_deg", m.dead_reckoning.sigma_theta);
    s.number("sigma_xy_init", m.dead_reckoning.sigma_xy_init);
    s.degrees("sigma_theta_init_deg", m.dead_reckoning.sigma_theta_init);
  });
  b.section("keyframes", [&](Binder& s) {
    s.number("translation_gate", m.keyframes.translation_gate);
    s.degrees("rotation_gate_deg", m.keyframes.rotation_gate);
  });
  b.section("trajectory", [&](Binder& s) {
    s.number("speed", m.trajectory.speed);
    s.degrees("turn_rate_deg", m.trajectory.turn_rate);
    s.number("rate_hz", m.trajectory.rate_hz);
    s.number("edge_margin", m.trajectory.edge_margin);
    s.number("leg_length", m.trajectory.leg_length);
    s.integer("laps", m.trajectory.laps);
  });
  b.section("scan_match", [&](Binder& s) {
    auto& c = m.scan_match;
    s.number("voxel", c.voxel);
    s.section("icp", [&](Binder& t) { bind(t, c.icp); });
    s.section("consensus", [&](Binder& t) { bind(t, c.consensus); });
    s.number("min_overlap", c.min_overlap);
    s.number("sigma_xy", c.sigma_xy);
    s.degrees("sigma_theta_deg", c.sigma_theta);
    s.number("rmse_ref", c.rmse_ref);
    s.number("odometry_gate", c.odometry_gate);
  });
  b.section("loop_closure", [&](Binder& s) {
    auto& c = m.loop_closure;
    s.boolean("enabled", c.enabled);
    s.integer("min_separation", c.min_separation);
    s.integer("max_candidates", c.max_candidates);
    s.number("search_sigmas", c.search_sigmas);
    s.number("min_overlap", c.min_overlap);
    s.integer("pcm_window", c.pcm_window);
    s.number("sigma_xy", c.sigma_xy);
    s.degrees("sigma_theta_deg", c.sigma_theta);
    s.number("pcm_chi2", c.pcm_chi2);
  });
  b.section("oi", [&](Binder& s) {
    auto& c = m.oi;
    s.section("gate", [&](Binder& g) {
      g.number("min_overlap", c.gate.min_overlap);
      g.number("binarize_threshold", c.gate.binarize_threshold);
      g.number("voxel", c.gate.voxel);
      g.number("overlap_dist", c.gate.overlap_dist);
      g.boolean("use_consensus", c.gate.use_consensus);
      g.boolean("refine", c.gate.refine);
      g.number("refine_dist", c.gate.refine_dist);
      g.number("trim_margin", c.gate.trim_margin);
      g.section("icp", [&](Binder& t) { bind(t, c.gate.icp); });
      g.section("consensus", [&](Binder& t) { bind(t, c.gate.consensus); });
    });
    s.number("sigma_xy", c.sigma_xy);
    s.degrees("sigma_theta_deg", c.sigma_theta);
    s.section("corruption", [&](Binder& t) {
      t.number("p_drop", c.corruption.p_drop);
      t.integer("jitter_px", c.corruption.jitter_px);
      t.number("p_fp", c.corruption.p_fp);
    });
    s.number("consensus_sigma_threshold", c.consensus_sigma_threshold);
    s.number("innovation_gate", c.innovation_gate);
    s.number("constraint_floor", c.constraint_floor);
  });
  b.section("optimizer", [&](Binder& s) {
    auto& c = m.optimizer;
    s.integer("max_iterations", c.max_iterations);
    s.number("relative_tolerance", c.relative_tolerance);
    s.number("step_tolerance", c.step_tolerance);
    s.number("initial_lambda", c.initial_lambda);
    s.number("lambda_factor", c.lambda_factor);
    s.number("max_lambda", c.max_lambda);
  });
  b.number("anchor_sigma", m.anchor_sigma);
  b.number("min_clearance", m.min_clearance);
}

}  // namespace

std::string config_to_json(const AppConfig& cfg) {
  json root = json::object();
  AppConfig copy = cfg;
  {
    Binder b(root, false, "");
    bind(b, copy);
  }
  return root.dump(2) + "\n";
}

AppConfig config_from_json(const std::string& text, const AppConfig& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  AppConfig out = base;
  {
    Binder b(root, true, "");
    bind(b, out);
  }
  out.mission.validate();
  return out;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_json(ss.str());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void save_config(const std::filesystem::path& path, const AppConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config " + path.string());
  out << config_to_json(cfg);
}

namespace {

json point_json(Point2 p) { return json::array({p.x, p.y}); }

Point2 point_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw InvalidArgument("world: '" + what + "' must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json polygons_json(const std::vector<Polygon>& polys) {
  json arr = json::array();
  for (const auto& p : polys) {
    json verts = json::array();
    for (const auto& v : p.vertices) verts.push_back(point_json(v));
    arr.push_back(verts);
  }
  return arr;
}

std::vector<Polygon> polygons_from(const json& j, CellClass cls, const std::string& what) {
  if (!j.is_array()) throw InvalidArgument("world: '" + what + "' must be an array of polygons");
  std::vector<Polygon> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string name = what + "[" + std::to_string(k) + "]";
    if (!j[k].is_array() || j[k].size() < 3) throw InvalidArgument("world: '" + name + "' needs at least 3 vertices");
    Polygon p;
    p.cls = cls;
    for (const auto& v : j[k]) p.vertices.push_back(point_from(v, name));
    out.push_back(std::move(p));
  }
  return out;
}

const json& field(const json& root, const char* key) {
  if (!root.contains(key)) throw InvalidArgument(std::string("world: missing '") + key + "'");
  return root.at(key);
}

}  // namespace

std::string world_to_json(const WorldModel& w) {
  json root;
  root["bounds_min"] = point_json(w.bounds_min);
  root["bounds_max"] = point_json(w.bounds_max);
  root["start"] = point_json(w.start);
  root["goal"] = point_json(w.goal);
  root["channel_y"] = json::array({w.channel_y_min, w.channel_y_max});
  root["structures"] = polygons_json(w.structures);
  root["vessels"] = polygons_json(w.vessels);
  return root.dump(1) + "\n";
}

WorldModel world_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("world: ") + e.what());
  }
  if (!root.is_object()) throw InvalidArgument("world: top level must be an object");
  WorldModel w;
  w.bounds_min = point_from(field(root, "bounds_min"), "bounds_min");
  w.bounds_max = point_from(field(root, "bounds_max"), "bounds_max");
  w.start = point_from(field(root, "start"), "start");
  w.goal = point_from(field(root, "goal"), "goal");
  const Point2 ch = point_from(field(root, "channel_y"), "channel_y");
  w.channel_y_min = ch.x;
  w.channel_y_max = ch.y;
  w.structures = polygons_from(field(root, "structures"), CellClass::Structure, "structures");
  w.vessels = polygons_from(field(root, "vessels"), CellClass::Vessel, "vessels");
  return w;
}

void save_world(const std::filesystem::path& path, const WorldModel& world) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write world " + path.string());
  out << world_to_json(world);
}

WorldModel load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read world " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return world_from_json(ss.str());
}

PairedRun run_paired(const AppConfig& cfg, const std::string& trajectory, std::uint64_t seed) {
  const WorldModel world = generate_marina(seed, cfg.world);
  const Trajectory traj = make_trajectory(trajectory, world, cfg.mission.trajectory);
  PairedRun run;
  run.seed = seed;
  run.path_length = path_length(traj);
  const auto base = run_mission(world, traj, MissionMode::Baseline, cfg.mission, seed);
  const auto prop = run_mission(world, traj, MissionMode::Proposed, cfg.mission, seed);
  run.keyframes = base.keyframes.size();
  run.baseline = compute_metrics(base);
  run.proposed = compute_metrics(prop);
  run.baseline_seconds = base.timing.seconds.at("total");
  run.proposed_seconds = prop.timing.seconds.at("total");
  for (const auto& f : prop.factor_log) {
    if (f.kind == FactorKind::OI) (f.accepted ? run.oi_accepted : run.oi_rejected) += 1;
  }
  return run;
}

BenchSummary run_benchmark(const AppConfig& cfg, const std::string& trajectory, std::uint64_t first_seed,
                           int count) {
  if (count < 1) throw InvalidArgument("benchmark: need at least one seed");
  BenchSummary s;
  s.trajectory = trajectory;
  for (int k = 0; k < count; ++k) {
    s.runs.push_back(run_paired(cfg, trajectory, first_seed + static_cast<std::uint64_t>(k)));
    const auto& r = s.runs.back();
    s.baseline_mae += r.baseline.position_mae;
    s.proposed_mae += r.proposed.position_mae;
    s.baseline_rmse += r.baseline.position_rmse;
    s.proposed_rmse += r.proposed.position_rmse;
    s.baseline_yaw_mae += r.baseline.yaw_mae;
    s.proposed_yaw_mae += r.proposed.yaw_mae;
    s.max_seconds = std::max({s.max_seconds, r.baseline_seconds, r.proposed_seconds});
  }
  const double n = count;
  s.baseline_mae /= n;
  s.proposed_mae /= n;
  s.baseline_rmse /= n;
  s.proposed_rmse /= n;
  s.baseline_yaw_mae /= n;
  s.proposed_yaw_mae /= n;
  return s;
}

std::string format_benchmark(const BenchSummary& s) {
  std::ostringstream out;
  char line[256];
  out << "trajectory: " << s.trajectory << "\n";
  std::snprintf(line, sizeof line, "%6s %5s %8s | %9s %9s %8s | %9s %9s %8s | %7s %7s\n", "seed", "kfs", "length",
                "base_mae", "base_rmse", "base_yaw", "prop_mae", "prop_rmse", "prop_yaw", "oi_acc", "secs");
  out << line;
  for (const auto& r : s.runs) {
    std::snprintf(line, sizeof line, "%6llu %5zu %8.1f | %9.3f %9.3f %8.2f | %9.3f %9.3f %8.2f | %7d %7.1f\n",
                  static_cast<unsigned long long>(r.seed), r.keyframes, r.path_length, r.baseline.position_mae,
                  r.baseline.position_rmse, rad2deg(r.baseline.yaw_mae), r.proposed.position_mae,
                  r.proposed.position_rmse, rad2deg(r.proposed.yaw_mae), r.oi_accepted,
                  std::max(r.baseline_seconds, r.proposed_seconds));
    out << line;
  }
  std::snprintf(line, sizeof line, "%6s %5s %8s | %9.3f %9.3f %8.2f | %9.3f %9.3f %8.2f |\n", "mean", "", "",
                s.baseline_mae, s.baseline_rmse, rad2deg(s.baseline_yaw_mae), s.proposed_mae, s.proposed_rmse,
                rad2deg(s.proposed_yaw_mae));
  out << line;
  std::snprintf(line, sizeof line, "proposed/baseline position MAE ratio: %.3f\n", s.ratio());
  out << line;
  return out.str();
}

}  // namespace sonar_oi
