#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sonar_oi/error.hpp"
#include "sonar_oi/mission.hpp"

namespace sonar_oi {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

Metrics compute_metrics(const std::vector<Pose2>& estimated, const std::vector<Pose2>& truth) {
  if (estimated.size() != truth.size()) throw InvalidArgument("metrics: trajectories differ in length");
  if (estimated.empty()) throw InvalidArgument("metrics: no keyframes");
  // Both trajectories are expressed in the frame of the true initial keyframe.
  const Pose2 origin = truth.front();
  Metrics m;
  double se_pos = 0.0;
  double se_yaw = 0.0;
  for (std::size_t k = 0; k < estimated.size(); ++k) {
    const Pose2 e = between(origin, estimated[k]);
    const Pose2 t = between(origin, truth[k]);
    KeyframeError err{static_cast<int>(k), distance(e.translation(), t.translation()),
                      std::abs(wrap_angle(e.theta() - t.theta()))};
    m.position_mae += err.position;
    m.yaw_mae += err.yaw;
    se_pos += err.position * err.position;
    se_yaw += err.yaw * err.yaw;
    m.per_keyframe.push_back(err);
  }
  m.count = m.per_keyframe.size();
  const auto n = static_cast<double>(m.count);
  m.position_mae /= n;
  m.yaw_mae /= n;
  m.position_rmse = std::sqrt(se_pos / n);
  m.yaw_rmse = std::sqrt(se_yaw / n);
  return m;
}

Metrics compute_metrics(const MissionReport& report) {
  std::vector<Pose2> est;
  std::vector<Pose2> truth;
  for (const auto& k : report.keyframes) {
    est.push_back(k.estimate);
    truth.push_back(k.truth);
  }
  auto m = compute_metrics(est, truth);
  for (auto& e : m.per_keyframe) e.id = report.keyframes[static_cast<std::size_t>(e.id)].id;
  return m;
}

std::string canonical_text(const MissionReport& report) {
  std::ostringstream out;
  out << "trajectory " << report.trajectory << "\nmode " << to_string(report.mode) << "\nseed " << report.seed
      << "\n";
  for (const auto& k : report.keyframes) {
    out << "kf " << k.id << ' ' << k.step << ' ' << fmt(k.stamp) << ' ' << fmt(k.truth.x()) << ' '
        << fmt(k.truth.y()) << ' ' << fmt(k.truth.theta()) << ' ' << fmt(k.estimate.x()) << ' '
        << fmt(k.estimate.y()) << ' ' << fmt(k.estimate.theta()) << ' ' << fmt(k.dead_reckoned.x()) << ' '
        << fmt(k.dead_reckoned.y()) << ' ' << fmt(k.dead_reckoned.theta()) << '\n';
  }
  for (const auto& f : report.factor_log) {
    out << "factor " << f.keyframe << ' ' << to_string(f.kind) << ' ' << f.i << ' ' << f.j << ' ' << f.accepted
        << ' ' << f.graph_index << ' ' << fmt(f.overlap) << ' ' << f.reason << '\n';
  }
  write_g2o(out, report.graph);
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, const Metrics& m) {
  auto out = open_out(path);
  out << "count,position_mae_m,position_rmse_m,yaw_mae_deg,yaw_rmse_deg\n"
      << m.count << ',' << fmt(m.position_mae) << ',' << fmt(m.position_rmse) << ',' << fmt(rad2deg(m.yaw_mae))
      << ',' << fmt(rad2deg(m.yaw_rmse)) << '\n';
}

void write_factor_log_tsv(const std::filesystem::path& path, const std::vector<FactorLogEntry>& log) {
  auto out = open_out(path);
  out << "keyframe\tkind\ti\tj\taccepted\tgraph_index\toverlap\treason\n";
  for (const auto& f : log) {
    out << f.keyframe << '\t' << to_string(f.kind) << '\t' << f.i << '\t' << f.j << '\t' << (f.accepted ? 1 : 0)
        << '\t' << f.graph_index << '\t' << fmt(f.overlap) << '\t' << f.reason << '\n';
  }
}

namespace {
constexpr const char* kKeyframeHeader =
    "id\tstep\tstamp\ttrue_x\ttrue_y\ttrue_theta\test_x\test_y\test_theta\tdr_x\tdr_y\tdr_theta";
}

void write_keyframes_tsv(const std::filesystem::path& path, const std::vector<KeyframeRecord>& kfs) {
  auto out = open_out(path);
  out << kKeyframeHeader << '\n';
  for (const auto& k : kfs) {
    out << k.id << '\t' << k.step << '\t' << fmt(k.stamp);
    for (const Pose2* p : {&k.truth, &k.estimate, &k.dead_reckoned}) {
      out << '\t' << fmt(p->x()) << '\t' << fmt(p->y()) << '\t' << fmt(p->theta());
    }
    out << '\n';
  }
}

std::vector<KeyframeRecord> read_keyframes_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kKeyframeHeader) {
    throw InvalidArgument(path.string() + ": unexpected keyframes header");
  }
  std::vector<KeyframeRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    KeyframeRecord k;
    double v[9];
    ls >> k.id >> k.step >> k.stamp;
    for (double& x : v) ls >> x;
    if (!ls) throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    k.truth = Pose2(v[0], v[1], v[2]);
    k.estimate = Pose2(v[3], v[4], v[5]);
    k.dead_reckoned = Pose2(v[6], v[7], v[8]);
    out.push_back(k);
  }
  return out;
}

void write_trajectory_svg(const std::filesystem::path& path, const WorldModel& world,
                          const std::vector<SvgSeries>& series) {
  constexpr double kScale = 5.0;  // px per meter
  const double w = (world.bounds_max.x - world.bounds_min.x) * kScale;
  const double h = (world.bounds_max.y - world.bounds_min.y) * kScale;
  auto px = [&](Point2 p) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", (p.x - world.bounds_min.x) * kScale,
                  (world.bounds_max.y - p.y) * kScale);
    return std::string(buf);
  };
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h + 20.0 * series.size()
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#eaf3fb\"/>\n";
  auto polys = [&](const std::vector<Polygon>& ps, const char* fill) {
    for (const auto& poly : ps) {
      out << "<polygon fill=\"" << fill << "\" points=\"";
      for (const auto& v : poly.vertices) out << px(v) << ' ';
      out << "\"/>\n";
    }
  };
  polys(world.structures, "#7a7a7a");
  polys(world.vessels, "#c9a66b");
  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << series[s].color << "\" points=\"";
    for (const auto& p : series[s].poses) out << px(p.translation()) << ' ';
    out << "\"/>\n<text x=\"6\" y=\"" << h + 15.0 + 20.0 * static_cast<double>(s) << "\" fill=\""
        << series[s].color << "\" font-family=\"monospace\" font-size=\"13\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

void write_report(const std::filesystem::path& dir, const MissionReport& report, const WorldModel& world) {
  std::filesystem::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", compute_metrics(report));
  write_factor_log_tsv(dir / "factors.tsv", report.factor_log);
  write_keyframes_tsv(dir / "keyframes.tsv", report.keyframes);
  {
    auto out = open_out(dir / "graph.g2o");
    write_g2o(out, report.graph);
  }
  SvgSeries truth{"truth", "#111111", {}};
  SvgSeries dr{"dead reckoning", "#d62728", {}};
  SvgSeries est{to_string(report.mode), "#1f77b4", {}};
  for (const auto& k : report.keyframes) {
    truth.poses.push_back(k.truth);
    dr.poses.push_back(k.dead_reckoned);
    est.poses.push_back(k.estimate);
  }
  write_trajectory_svg(dir / "trajectory.svg", world, {truth, dr, est});
  auto out = open_out(dir / "timing.tsv");
  out << "stage\tseconds\n";
  for (const auto& [stage, sec] : report.timing.seconds) out << stage << '\t' << fmt(sec) << '\n';
}

}  // namespace sonar_oi
