#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "sonar_oi/config.hpp"
#include "sonar_oi/error.hpp"
#include "sonar_oi/mission.hpp"
#include "sonar_oi/oi_pipeline.hpp"
#include "sonar_oi/translator_client.hpp"
#include "sonar_oi/world.hpp"

namespace fs = std::filesystem;
using namespace sonar_oi;

namespace {

struct Common {
  std::string config;
  std::string world;
  std::uint64_t world_seed{0};
};

AppConfig app_config(const Common& c) { return c.config.empty() ? AppConfig{} : load_config(c.config); }

WorldModel world_for(const Common& c, const AppConfig& cfg) {
  return c.world.empty() ? generate_marina(c.world_seed, cfg.world) : load_world(c.world);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file (defaults for missing keys)")->check(CLI::ExistingFile);
  sub->add_option("--world", c.world, "world JSON written by gen-world")->check(CLI::ExistingFile);
  sub->add_option("--world-seed", c.world_seed, "marina generator seed when --world is not given");
}

void print_metrics(const Metrics& m) {
  std::printf("keyframes        %zu\n", m.count);
  std::printf("position MAE     %.3f m\n", m.position_mae);
  std::printf("position RMSE    %.3f m\n", m.position_rmse);
  std::printf("yaw MAE          %.3f deg\n", rad2deg(m.yaw_mae));
  std::printf("yaw RMSE         %.3f deg\n", rad2deg(m.yaw_rmse));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sonar pose-graph SLAM with overhead-image factors"};
  app.require_subcommand(1);

  // gen-world
  Common gw;
  std::string gw_out;
  double gw_res = 0.25;
  auto* gen = app.add_subcommand("gen-world", "generate a marina and write its maps");
  add_common(gen, gw);
  gen->add_option("--seed", gw.world_seed, "generator seed");
  gen->add_option("--out", gw_out, "output directory")->required();
  gen->add_option("--resolution", gw_res, "overhead map resolution (m/pixel)");

  // export-dataset
  Common ed;
  std::string ed_out;
  int ed_n = 100;
  std::uint64_t ed_seed = 0;
  double ed_max_t = 5.0;
  double ed_max_yaw = 22.0;
  auto* exp = app.add_subcommand("export-dataset", "write translator training triplets");
  add_common(exp, ed);
  exp->add_option("--n", ed_n, "number of samples")->check(CLI::NonNegativeNumber);
  exp->add_option("--seed", ed_seed, "sampling seed");
  exp->add_option("--max-translation", ed_max_t, "perturbation radius (m)");
  exp->add_option("--max-yaw", ed_max_yaw, "perturbation yaw bound (deg)");
  exp->add_option("--out", ed_out, "output directory")->required();

  // run
  Common rn;
  std::string rn_mode = "proposed";
  std::string rn_traj = "fly-through";
  std::string rn_translator = "oracle";
  std::uint64_t rn_seed = 0;
  std::string rn_out;
  auto* run = app.add_subcommand("run", "run one mission");
  add_common(run, rn);
  run->add_option("--mode", rn_mode, "baseline | proposed")->check(CLI::IsMember({"baseline", "proposed"}));
  run->add_option("--trajectory", rn_traj, "fly-through | out-and-back | long-distance")
      ->check(CLI::IsMember({"fly-through", "out-and-back", "long-distance"}));
  run->add_option("--translator", rn_translator, "oracle | remote:<host:port>");
  run->add_option("--seed", rn_seed, "mission seed (sensor and odometry noise)");
  run->add_option("--out", rn_out, "report directory");

  // metrics
  std::string mt_in;
  auto* met = app.add_subcommand("metrics", "recompute metrics from a report directory");
  met->add_option("dir", mt_in, "report directory containing keyframes.tsv")->required()->check(CLI::ExistingDirectory);

  // bench
  AppConfig bench_cfg;
  Common bc;
  std::string bn_traj = "fly-through";
  std::uint64_t bn_first = 0;
  int bn_count = 5;
  std::string bn_out;
  auto* bench = app.add_subcommand("bench", "paired-seed baseline vs proposed sweep");
  bench->add_option("--config", bc.config, "JSON config file")->check(CLI::ExistingFile);
  bench->add_option("--trajectory", bn_traj, "fly-through | out-and-back | long-distance")
      ->check(CLI::IsMember({"fly-through", "out-and-back", "long-distance"}));
  bench->add_option("--first-seed", bn_first, "first seed");
  bench->add_option("--seeds", bn_count, "number of paired seeds")->check(CLI::PositiveNumber);
  bench->add_option("--out", bn_out, "write the summary table to this file as well");

  // dump-config
  std::string dc_out;
  auto* dump = app.add_subcommand("dump-config", "write the default config as JSON");
  dump->add_option("--out", dc_out, "output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const AppConfig cfg = app_config(gw);
      const WorldModel world = generate_marina(gw.world_seed, cfg.world);
      fs::create_directories(gw_out);
      save_world(fs::path(gw_out) / "world.json", world);
      const auto map = rasterize(world, gw_res);
      save_map_png(map, fs::path(gw_out) / "map.png");
      std::ofstream(fs::path(gw_out) / "map.txt") << to_text(map);
      write_trajectory_svg(fs::path(gw_out) / "world.svg", world, {});
      std::printf("wrote %s (%zu structures, %zu vessels)\n", gw_out.c_str(), world.structures.size(),
                  world.vessels.size());
    } else if (exp->parsed()) {
      const AppConfig cfg = app_config(ed);
      const WorldModel world = world_for(ed, cfg);
      DatasetConfig dc;
      dc.sonar = cfg.mission.sonar;
      dc.noise = cfg.mission.sonar_noise;
      dc.cfar = cfg.mission.cfar;
      dc.raster = cfg.mission.raster;
      dc.overhead_resolution = cfg.mission.overhead_resolution;
      const PerturbLimits limits{ed_max_t, deg2rad(ed_max_yaw)};
      const auto samples = export_training_samples(world, ed_n, limits, ed_seed, ed_out, dc);
      std::printf("wrote %zu samples to %s\n", samples.size(), ed_out.c_str());
    } else if (run->parsed()) {
      const AppConfig cfg = app_config(rn);
      const WorldModel world = world_for(rn, cfg);
      const Trajectory traj = make_trajectory(rn_traj, world, cfg.mission.trajectory);
      std::unique_ptr<Translator> remote;
      if (rn_translator.rfind("remote:", 0) == 0) {
        remote = std::make_unique<RemoteTranslator>(parse_endpoint(rn_translator.substr(7)));
      } else if (rn_translator != "oracle") {
        throw InvalidArgument("--translator must be 'oracle' or 'remote:<host:port>'");
      }
      const auto report =
          run_mission(world, traj, mission_mode_from_string(rn_mode), cfg.mission, rn_seed, remote.get());
      if (!rn_out.empty()) write_report(rn_out, report, world);
      std::printf("%s %s, seed %llu, %.0f m\n", to_string(report.mode).c_str(), traj.name.c_str(),
                  static_cast<unsigned long long>(rn_seed), path_length(traj));
      print_metrics(compute_metrics(report));
      std::printf("wall clock       %.2f s\n", report.timing.seconds.at("total"));
    } else if (met->parsed()) {
      const auto kfs = read_keyframes_tsv(fs::path(mt_in) / "keyframes.tsv");
      std::vector<Pose2> est;
      std::vector<Pose2> truth;
      for (const auto& k : kfs) {
        est.push_back(k.estimate);
        truth.push_back(k.truth);
      }
      print_metrics(compute_metrics(est, truth));
    } else if (bench->parsed()) {
      bench_cfg = app_config(bc);
      const auto summary = run_benchmark(bench_cfg, bn_traj, bn_first, bn_count);
      const std::string table = format_benchmark(summary);
      std::cout << table;
      if (!bn_out.empty()) std::ofstream(bn_out) << table;
    } else if (dump->parsed()) {
      if (dc_out.empty()) {
        std::cout << config_to_json(AppConfig{});
      } else {
        save_config(dc_out, AppConfig{});
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
