#pragma once

#include <filesystem>
#include <string>

#include "sonar_oi/mission.hpp"
#include "sonar_oi/world.hpp"

namespace sonar_oi {

/// Everything the CLI reads from a config file: the marina generator and the mission.
struct AppConfig {
  GeneratorConfig world;
  MissionConfig mission;
};

/// JSON text with every key present. Angles are written in degrees under *_deg keys.
[[nodiscard]] std::string config_to_json(const AppConfig& cfg);
/// Keys missing from the text keep their value in `base`; unknown keys, wrong types and
/// configs failing validation throw InvalidArgument naming the offending key.
[[nodiscard]] AppConfig config_from_json(const std::string& text, const AppConfig& base = {});

[[nodiscard]] AppConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const AppConfig& cfg);

/// Polygon world as JSON (bounds, start, goal, channel, structures, vessels). Values are
/// written at full precision, so a round trip is exact.
[[nodiscard]] std::string world_to_json(const WorldModel& world);
[[nodiscard]] WorldModel world_from_json(const std::string& text);
void save_world(const std::filesystem::path& path, const WorldModel& world);
[[nodiscard]] WorldModel load_world(const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------
// Paired-seed benchmark: seed s generates the marina and drives both modes with identical
// sensor and odometry noise.

struct PairedRun {
  std::uint64_t seed{0};
  std::size_t keyframes{0};
  double path_length{0.0};
  Metrics baseline;
  Metrics proposed;
  double baseline_seconds{0.0};
  double proposed_seconds{0.0};
  int oi_accepted{0};
  int oi_rejected{0};
};

struct BenchSummary {
  std::string trajectory;
  std::vector<PairedRun> runs;
  double baseline_mae{0.0};  // mean over runs
  double proposed_mae{0.0};
  double baseline_rmse{0.0};
  double proposed_rmse{0.0};
  double baseline_yaw_mae{0.0};
  double proposed_yaw_mae{0.0};
  double max_seconds{0.0};  // slowest single mission

  [[nodiscard]] double ratio() const { return proposed_mae / baseline_mae; }
};

[[nodiscard]] PairedRun run_paired(const AppConfig& cfg, const std::string& trajectory, std::uint64_t seed);
[[nodiscard]] BenchSummary run_benchmark(const AppConfig& cfg, const std::string& trajectory,
                                         std::uint64_t first_seed, int count);
/// Table with one row per seed plus the mean row and the proposed/baseline ratio.
[[nodiscard]] std::string format_benchmark(const BenchSummary& summary);

}  // namespace sonar_oi
