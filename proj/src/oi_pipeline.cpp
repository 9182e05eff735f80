#include "sonar_oi/oi_pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "sonar_oi/error.hpp"
#include "sonar_oi/image_io.hpp"
#include "sonar_oi/seeding.hpp"

namespace sonar_oi {

void TranslatorInput::validate() const {
  if (spec.rows <= 0 || spec.cols <= 0 || !(spec.resolution > 0.0)) {
    throw InvalidArgument("translator input: bad raster spec");
  }
  for (const auto* ch : {&cfar_raster, &candidate_raster}) {
    if (ch->rows() != spec.rows || ch->cols() != spec.cols) {
      throw InvalidArgument("translator input: channel shape does not match the raster spec");
    }
    for (auto v : ch->data()) {
      if (v > 1) throw InvalidArgument("translator input: channels must be 0/1");
    }
  }
}

BinaryRaster cloud_to_raster(const PointCloud2D& cloud, const RasterSpec& spec) {
  BinaryRaster out(spec.rows, spec.cols, 0);
  for (const auto& p : cloud.points) {
    if (auto px = spec.pixel_of(p)) out(px->first, px->second) = 1;
  }
  return out;
}

TranslatorInput make_translator_input(const DetectionImage& det, const CandidateOverheadImage& cand) {
  TranslatorInput in{cloud_to_raster(detections_to_cloud(det), cand.spec), cand.pixels, cand.spec};
  in.validate();
  return in;
}

namespace {

template <typename Pred>
PointCloud2D outline(int rows, int cols, const RasterSpec& spec, double voxel, const std::optional<SectorLimits>& sector,
                     Pred on) {
  if (rows != spec.rows || cols != spec.cols) throw InvalidArgument("outline: raster does not match spec");
  auto is_background = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= rows || c >= cols) return !sector.has_value();
    if (sector && !in_sector(spec.pixel_center(r, c), sector->fov, sector->max_range)) return false;
    return !on(r, c);
  };
  PointCloud2D cloud;
  cloud.frame_id = "sonar";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!on(r, c)) continue;
      if (is_background(r - 1, c) || is_background(r + 1, c) || is_background(r, c - 1) || is_background(r, c + 1)) {
        cloud.points.push_back(spec.pixel_center(r, c));
      }
    }
  }
  if (voxel > 0.0 && !cloud.empty()) {
    auto ds = voxel_downsample(cloud, voxel);
    ds.frame_id = cloud.frame_id;
    return ds;
  }
  return cloud;
}

}  // namespace

PointCloud2D raster_to_outline_cloud(const ProbabilityRaster& img, const RasterSpec& spec, double threshold,
                                     double voxel, const std::optional<SectorLimits>& sector) {
  return outline(img.rows(), img.cols(), spec, voxel, sector, [&](int r, int c) { return img(r, c) > threshold; });
}

PointCloud2D raster_to_outline_cloud(const BinaryRaster& img, const RasterSpec& spec, double voxel,
                                     const std::optional<SectorLimits>& sector) {
  return outline(img.rows(), img.cols(), spec, voxel, sector, [&](int r, int c) { return img(r, c) != 0; });
}

void OracleCorruption::validate() const {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw InvalidArgument("oracle: p_drop must lie in [0, 1]");
  if (!(p_fp >= 0.0 && p_fp <= 1.0)) throw InvalidArgument("oracle: p_fp must lie in [0, 1]");
  if (jitter_px < 0) throw InvalidArgument("oracle: jitter_px must be non-negative");
}

BinaryRaster visible_structure(const OracleScene& scene, const Pose2& true_pose, const RasterSpec& spec) {
  if (scene.world == nullptr || scene.mask == nullptr) throw InvalidArgument("oracle: scene is incomplete");
  const auto& mask = *scene.mask;
  const double fov = scene.sector.fov;
  const double max_range = scene.sector.max_range;

  // Visible span per ray: from the first hit to where the ray leaves the structure it entered.
  constexpr int kRays = 1024;
  struct Span {
    double entry{-1.0};
    double exit{-1.0};
  };
  std::vector<Span> spans(kRays);
  const double step = 0.5 * mask.resolution;
  for (int k = 0; k < kRays; ++k) {
    const double bearing = -0.5 * fov + fov * k / (kRays - 1);
    const double angle = true_pose.theta() + bearing;
    const auto hit = cast_ray(*scene.world, true_pose.translation(), angle, max_range);
    if (!hit || hit->cls != CellClass::Structure) continue;
    const Point2 dir{std::cos(angle), std::sin(angle)};
    double t = std::max(hit->exit_range, hit->range);
    // Walk on through touching or overlapping structure (a pier running into a wall).
    while (t < max_range + mask.resolution && mask.sample(true_pose.translation() + t * dir) != 0) t += step;
    spans[static_cast<std::size_t>(k)] = {hit->range, t};
  }

  BinaryRaster out(spec.rows, spec.cols, 0);
  const double c = std::cos(true_pose.theta());
  const double s = std::sin(true_pose.theta());
  const double slack = spec.resolution;
  for (int r = 0; r < spec.rows; ++r) {
    for (int col = 0; col < spec.cols; ++col) {
      const Point2 p = spec.pixel_center(r, col);
      if (!in_sector(p, fov, max_range)) continue;
      const int k = static_cast<int>(std::lround((std::atan2(p.y, p.x) + 0.5 * fov) / fov * (kRays - 1)));
      const Span& sp = spans[static_cast<std::size_t>(std::clamp(k, 0, kRays - 1))];
      if (sp.entry < 0.0) continue;
      const double range = p.norm();
      if (range < sp.entry - slack || range > sp.exit + slack) continue;
      const Point2 w{true_pose.x() + c * p.x - s * p.y, true_pose.y() + s * p.x + c * p.y};
      out(r, col) = mask.sample(w);
    }
  }
  return out;
}

SyntheticOverheadImage translate_oracle(const TranslatorInput& input, const OracleScene& scene, const Pose2& true_pose,
                                        const OracleCorruption& corruption, std::uint64_t rng_seed) {
  corruption.validate();
  const RasterSpec& spec = input.spec;
  const BinaryRaster clean = visible_structure(scene, true_pose, spec);
  BinaryRaster img = clean;

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (corruption.jitter_px > 0) {
    std::uniform_int_distribution<int> shift(-corruption.jitter_px, corruption.jitter_px);
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        const int dr = shift(rng);
        const int dc = shift(rng);
        img(r, c) = clean.in_bounds(r + dr, c + dc) ? clean(r + dr, c + dc) : 0;
      }
    }
  }
  if (corruption.p_fp > 0.0) {
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        if (!in_sector(spec.pixel_center(r, c), scene.sector.fov, scene.sector.max_range)) continue;
        if (unit(rng) < corruption.p_fp) img(r, c) = 1;
      }
    }
  }
  if (corruption.p_drop > 0.0) {
    for (auto& v : img.data()) {
      if (v != 0 && unit(rng) < corruption.p_drop) v = 0;
    }
  }

  SyntheticOverheadImage out{ProbabilityRaster(spec.rows, spec.cols, 0.0f), spec};
  for (std::size_t i = 0; i < img.size(); ++i) out.probability.data()[i] = img.data()[i] ? 1.0f : 0.0f;
  return out;
}

void OiGateConfig::validate() const {
  if (!(min_overlap >= 0.0 && min_overlap <= 1.0)) throw InvalidArgument("oi gate: min_overlap must lie in [0, 1]");
  if (!(binarize_threshold >= 0.0 && binarize_threshold < 1.0)) {
    throw InvalidArgument("oi gate: binarize_threshold must lie in [0, 1)");
  }
  if (!(overlap_dist > 0.0)) throw InvalidArgument("oi gate: overlap_dist must be positive");
  if (refine && !(refine_dist > 0.0 && trim_margin >= 0.0)) throw InvalidArgument("oi gate: bad refinement settings");
  icp.validate();
  consensus.validate();
}

OiOutcome propose_oi_factor(const OiRequest& req, const BinaryStructureMask& mask, Translator& translator,
                            const OiGateConfig& gate, const SectorLimits& sector, const RasterSpec& spec) {
  gate.validate();
  if (req.detections == nullptr) throw InvalidArgument("propose_oi_factor: no detection image");
  auto reject = [&](std::string reason, double overlap = 0.0) {
    return OiOutcome{OiRejection{req.keyframe, std::move(reason), overlap}};
  };

  if (!mask.contains(req.estimate.translation())) return reject("estimate outside map");
  const CandidateOverheadImage cand = carve_candidate(mask, req.estimate, sector.fov, sector.max_range, spec);
  const TranslatorInput input = make_translator_input(*req.detections, cand);

  SyntheticOverheadImage synth;
  try {
    synth = translator.translate(input, req.true_pose, req.seed);
  } catch (const TranslatorUnavailable& e) {
    return reject(std::string("translator unavailable: ") + e.what());
  }
  if (synth.probability.rows() != spec.rows || synth.probability.cols() != spec.cols) {
    return reject("translator returned wrong shape");
  }

  const PointCloud2D src = raster_to_outline_cloud(synth.probability, spec, gate.binarize_threshold, gate.voxel, sector);
  const PointCloud2D tgt = raster_to_outline_cloud(cand.pixels, spec, gate.voxel, sector);
  if (src.empty() || tgt.empty()) return reject("no structure");
  if (static_cast<int>(src.size()) < gate.icp.min_points || static_cast<int>(tgt.size()) < gate.icp.min_points) {
    return reject("insufficient structure");
  }

  Pose2 init = Pose2::identity();
  if (gate.use_consensus || req.use_consensus) init = consensus_init(src, tgt, init, gate.consensus);
  RegistrationResult reg = icp(src, tgt, init, gate.icp);
  if (!reg.converged) return reject("icp did not converge");
  if (gate.refine) {
    const double inner_fov = sector.fov - 2.0 * gate.trim_margin / sector.max_range;
    PointCloud2D trimmed;
    for (const auto& p : src.points) {
      if (in_sector(transform_point(reg.transform, p), inner_fov, sector.max_range - gate.trim_margin)) {
        trimmed.points.push_back(p);
      }
    }
    if (static_cast<int>(trimmed.size()) >= gate.icp.min_points) {
      IcpConfig fine = gate.icp;
      fine.correspondence_dist = gate.refine_dist;
      const RegistrationResult r2 = icp(trimmed, tgt, reg.transform, fine);
      if (!r2.converged) return reject("icp did not converge");
      reg = r2;
    }
  }
  const double overlap = overlap_fraction(src, tgt, reg.transform, gate.overlap_dist);
  if (overlap < gate.min_overlap) return reject("low overlap", overlap);

  OiFactorProposal p;
  p.keyframe = req.keyframe;
  p.carve_pose = req.estimate;
  p.corrected_pose = compose(req.estimate, reg.transform);
  p.measurement = between(req.anchor_pose, p.corrected_pose);
  p.overlap = overlap;
  p.registration = reg;
  p.constraint = registration_constraint(src, tgt, reg.transform, gate.overlap_dist);
  return p;
}

// ---------------------------------------------------------------------------------------

namespace {

constexpr const char* kManifestHeader =
    "id\ttrue_x\ttrue_y\ttrue_theta\tpert_x\tpert_y\tpert_theta\tdx\tdy\tdtheta";

std::string sample_stem(int id) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << id;
  return s.str();
}

}  // namespace

std::vector<DatasetSample> export_training_samples(const WorldModel& world, int n, const PerturbLimits& perturb,
                                                   std::uint64_t rng_seed, const std::filesystem::path& out_dir,
                                                   const DatasetConfig& cfg) {
  if (n < 0) throw InvalidArgument("export_training_samples: n must be non-negative");
  if (!(perturb.max_translation >= 0.0) || !(perturb.max_yaw >= 0.0)) {
    throw InvalidArgument("export_training_samples: perturbation limits must be non-negative");
  }
  if (world.structures.empty()) throw InvalidArgument("export_training_samples: world has no structure");
  cfg.sonar.validate();
  cfg.noise.validate();
  cfg.cfar.validate();

  std::filesystem::create_directories(out_dir);
  const BinaryStructureMask mask = structure_mask(rasterize(world, cfg.overhead_resolution));

  std::mt19937_64 rng(derive_seed(rng_seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto lerp = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<DatasetSample> samples;
  std::ofstream manifest(out_dir / "manifest.tsv");
  manifest << kManifestHeader << '\n' << std::setprecision(17);
  for (int id = 0; id < n; ++id) {
    DatasetSample smp;
    smp.id = id;
    bool found = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !found; ++attempt) {
      const Point2 p{lerp(world.bounds_min.x, world.bounds_max.x), lerp(world.bounds_min.y, world.bounds_max.y)};
      const double heading = lerp(-kPi, kPi);
      const double rad = perturb.max_translation * std::sqrt(unit(rng));
      const double phi = lerp(-kPi, kPi);
      const double dyaw = lerp(-perturb.max_yaw, perturb.max_yaw);
      if (!world.in_water(p) || world.clearance(p) < cfg.min_clearance) continue;
      smp.true_pose = Pose2(p.x, p.y, heading);
      smp.perturbation = Pose2(rad * std::cos(phi), rad * std::sin(phi), dyaw);
      smp.perturbed_pose = compose(smp.true_pose, smp.perturbation);
      found = mask.contains(smp.perturbed_pose.translation());
    }
    if (!found) throw GenerationFailed("export_training_samples: no collision-free pose found");

    const auto polar = render(world, smp.true_pose, cfg.sonar, cfg.noise, derive_seed(rng_seed, 2, id));
    const auto det = soca_cfar(polar, cfg.cfar);
    const auto cand = carve_candidate(mask, smp.perturbed_pose, cfg.sonar.fov, cfg.sonar.max_range, cfg.raster);
    const auto label = carve_candidate(mask, smp.true_pose, cfg.sonar.fov, cfg.sonar.max_range, cfg.raster);
    const std::string stem = sample_stem(id);
    write_binary_png(out_dir / (stem + "_cfar.png"), cloud_to_raster(detections_to_cloud(det), cfg.raster));
    write_binary_png(out_dir / (stem + "_cand.png"), cand.pixels);
    write_binary_png(out_dir / (stem + "_label.png"), label.pixels);

    manifest << stem << '\t' << smp.true_pose.x() << '\t' << smp.true_pose.y() << '\t' << smp.true_pose.theta() << '\t'
             << smp.perturbed_pose.x() << '\t' << smp.perturbed_pose.y() << '\t' << smp.perturbed_pose.theta() << '\t'
             << smp.perturbation.x() << '\t' << smp.perturbation.y() << '\t' << smp.perturbation.theta() << '\n';
    samples.push_back(smp);
  }
  if (!manifest) throw Error("export_training_samples: failed writing manifest");
  return samples;
}

std::vector<DatasetSample> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw Error("read_manifest: cannot open " + (dir / "manifest.tsv").string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) throw Error("read_manifest: bad header");
  std::vector<DatasetSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream s(line);
    DatasetSample d;
    double v[9];
    s >> d.id;
    for (double& x : v) s >> x;
    if (!s) throw Error("read_manifest: malformed row: " + line);
    d.true_pose = Pose2(v[0], v[1], v[2]);
    d.perturbed_pose = Pose2(v[3], v[4], v[5]);
    d.perturbation = Pose2(v[6], v[7], v[8]);
    out.push_back(d);
  }
  return out;
}

}  // namespace sonar_oi
