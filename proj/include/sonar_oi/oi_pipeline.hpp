#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sonar_oi/cfar.hpp"
#include "sonar_oi/geometry.hpp"
#include "sonar_oi/raster.hpp"
#include "sonar_oi/registration.hpp"
#include "sonar_oi/sonar_sim.hpp"
#include "sonar_oi/world.hpp"

namespace sonar_oi {

/// Two binary channels on the shared sonar-frame raster.
struct TranslatorInput {
  BinaryRaster cfar_raster;
  BinaryRaster candidate_raster;
  RasterSpec spec;

  void validate() const;
};

/// Per-pixel structure probability in [0, 1], sonar frame.
struct SyntheticOverheadImage {
  ProbabilityRaster probability;
  RasterSpec spec;
};

/// Sonar-frame cloud rasterized onto the shared raster (1 where any point lands).
[[nodiscard]] BinaryRaster cloud_to_raster(const PointCloud2D& cloud, const RasterSpec& spec);
[[nodiscard]] TranslatorInput make_translator_input(const DetectionImage& det, const CandidateOverheadImage& cand);

/// Sector limits used to tell real structure edges from edges made by the field-of-view cut.
struct SectorLimits {
  double fov{deg2rad(130.0)};
  double max_range{30.0};
};

/// Binarize at threshold (strictly greater), keep pixels with at least one non-structure
/// 4-neighbour (off-raster counts as non-structure), map pixel centres to meters, then
/// voxel-downsample (skipped when voxel <= 0). When `sector` is given, a neighbour outside
/// the sector does not count as non-structure, so straight cuts along the fan edge and the
/// range arc are not reported as outline.
[[nodiscard]] PointCloud2D raster_to_outline_cloud(const ProbabilityRaster& img, const RasterSpec& spec,
                                                   double threshold, double voxel,
                                                   const std::optional<SectorLimits>& sector = std::nullopt);
[[nodiscard]] PointCloud2D raster_to_outline_cloud(const BinaryRaster& img, const RasterSpec& spec, double voxel,
                                                   const std::optional<SectorLimits>& sector = std::nullopt);

// ---------------------------------------------------------------------------------------
// Translators

struct OracleCorruption {
  double p_drop{0.0};   // per positive pixel
  int jitter_px{0};     // each pixel may copy a neighbour up to this many pixels away
  double p_fp{0.0};     // per in-sector pixel

  void validate() const;
};

/// Ground truth the oracle renders from. Simulation only.
struct OracleScene {
  const WorldModel* world{nullptr};
  const BinaryStructureMask* mask{nullptr};
  SectorLimits sector;
};

/// Structure mask at the true pose restricted to what the sonar can see: along each bearing
/// only the first polygon hit counts, over its entry-to-exit span; anything behind it, or
/// behind a vessel, is occluded. Returned as 0/1 in the sonar raster.
[[nodiscard]] BinaryRaster visible_structure(const OracleScene& scene, const Pose2& true_pose, const RasterSpec& spec);

/// Oracle stand-in for the learned translator: visible_structure at the true pose, then
/// boundary jitter, false positives and dropout in that order. Deterministic in rng_seed.
[[nodiscard]] SyntheticOverheadImage translate_oracle(const TranslatorInput& input, const OracleScene& scene,
                                                      const Pose2& true_pose, const OracleCorruption& corruption,
                                                      std::uint64_t rng_seed);

/// Polymorphic translator used by the proposal step. The true pose and seed are simulation
/// context that only the oracle reads.
class Translator {
 public:
  virtual ~Translator() = default;
  [[nodiscard]] virtual SyntheticOverheadImage translate(const TranslatorInput& input, const Pose2& true_pose,
                                                         std::uint64_t seed) = 0;
};

class OracleTranslator final : public Translator {
 public:
  OracleTranslator(OracleScene scene, OracleCorruption corruption) : scene_(scene), corruption_(corruption) {
    corruption_.validate();
  }
  [[nodiscard]] SyntheticOverheadImage translate(const TranslatorInput& input, const Pose2& true_pose,
                                                 std::uint64_t seed) override {
    return translate_oracle(input, scene_, true_pose, corruption_, seed);
  }

 private:
  OracleScene scene_;
  OracleCorruption corruption_;
};

// ---------------------------------------------------------------------------------------
// OI factor proposal

struct OiGateConfig {
  double min_overlap{0.80};
  double binarize_threshold{0.5};
  double voxel{0.5};
  double overlap_dist{1.0};
  bool use_consensus{false};
  // Second ICP pass from the first result, using only synthetic points that land at least
  // trim_margin inside the candidate's sector (points outside it have no counterpart).
  bool refine{true};
  double refine_dist{1.0};
  double trim_margin{1.0};
  IcpConfig icp;
  ConsensusSearch consensus;

  void validate() const;
};

struct OiFactorProposal {
  int keyframe{0};
  Pose2 measurement;  // anchor -> keyframe
  Pose2 carve_pose;   // estimate the candidate was carved at
  Pose2 corrected_pose;
  double overlap{0.0};
  RegistrationResult registration;
  RegistrationConstraint constraint;  // synthetic outline against candidate outline
};

struct OiRejection {
  int keyframe{0};
  std::string reason;
  double overlap{0.0};
};

using OiOutcome = std::variant<OiFactorProposal, OiRejection>;

struct OiRequest {
  int keyframe{0};
  const DetectionImage* detections{nullptr};
  Pose2 estimate;     // current SLAM estimate of the keyframe, map frame
  Pose2 anchor_pose;  // map pose of the overhead-image frame
  Pose2 true_pose;    // simulation context for the oracle
  std::uint64_t seed{0};
  bool use_consensus{false};  // per-request override of the gate's setting (OR-ed)
};

/// Carve at the estimate, translate, register synthetic -> candidate outlines, gate by
/// convergence and overlap. Never touches a pose graph.
[[nodiscard]] OiOutcome propose_oi_factor(const OiRequest& req, const BinaryStructureMask& mask, Translator& translator,
                                          const OiGateConfig& gate, const SectorLimits& sector,
                                          const RasterSpec& spec = {});

// ---------------------------------------------------------------------------------------
// Dataset interchange

struct PerturbLimits {
  double max_translation{5.0};       // meters, uniform over the disk
  double max_yaw{deg2rad(22.0)};     // radians, uniform in [-max, max]
};

struct DatasetConfig {
  SonarSpec sonar;
  NoiseConfig noise;
  CfarConfig cfar;
  RasterSpec raster;
  double overhead_resolution{0.25};
  double min_clearance{1.5};
  int max_attempts{10000};
};

struct DatasetSample {
  int id{0};
  Pose2 true_pose;
  Pose2 perturbed_pose;
  Pose2 perturbation;  // body frame: perturbed = true o perturbation
};

/// Writes manifest.tsv plus {id}_cfar.png, {id}_cand.png, {id}_label.png per sample into
/// out_dir. Returns the manifest rows. Throws InvalidArgument for a world without structure
/// and GenerationFailed when no collision-free pose can be found.
std::vector<DatasetSample> export_training_samples(const WorldModel& world, int n, const PerturbLimits& perturb,
                                                   std::uint64_t rng_seed, const std::filesystem::path& out_dir,
                                                   const DatasetConfig& cfg = {});
[[nodiscard]] std::vector<DatasetSample> read_manifest(const std::filesystem::path& dir);

}  // namespace sonar_oi
