#include "sonar_oi/mission.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <random>

#include <Eigen/Eigenvalues>

#include "sonar_oi/error.hpp"
#include "sonar_oi/pcm.hpp"
#include "sonar_oi/seeding.hpp"

namespace sonar_oi {

namespace {

enum Stream : std::uint64_t { kOdometry = 1, kInitialFix = 2, kRender = 3, kTranslate = 4 };

using Clock = std::chrono::steady_clock;

class StageClock {
 public:
  explicit StageClock(StageTiming& timing) : timing_(timing) {}
  template <typename F>
  decltype(auto) run(const std::string& stage, F&& f) {
    const auto t0 = Clock::now();
    struct Add {
      StageTiming& t;
      const std::string& s;
      Clock::time_point t0;
      ~Add() { t.seconds[s] += std::chrono::duration<double>(Clock::now() - t0).count(); }
    } add{timing_, stage, t0};
    return f();
  }

 private:
  StageTiming& timing_;
};

// Tiny floor so a pure in-place turn still yields a positive-definite odometry covariance.
const Eigen::Matrix3d kCovFloor = Eigen::Vector3d(1e-8, 1e-8, 1e-10).asDiagonal();

double largest_position_sigma(const NoiseModel3& marginal) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(marginal.covariance().topLeftCorner<2, 2>());
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

// Inflation-only covariance shaping from a registration's constraint information.
Eigen::Matrix3d shape_covariance(const Eigen::Matrix3d& base_sigmas_diag, const RegistrationConstraint& c,
                                 double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(2.0 * c.information);
  Eigen::Vector3d inv = es.eigenvalues();
  for (int k = 0; k < 3; ++k) inv[k] = 1.0 / std::clamp(inv[k], floor, 1.0);
  const Eigen::Matrix3d m = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  Eigen::Matrix3d cov = base_sigmas_diag * m * base_sigmas_diag;
  return 0.5 * (cov + cov.transpose());
}

double mahalanobis2(const Eigen::Vector3d& e, const Eigen::Matrix3d& cov) { return e.dot(cov.ldlt().solve(e)); }

// Cumulative odometry along the keyframe chain; chain(a, b) comes from two prefixes instead
// of composing every step, which keeps PCM cheap on long missions.
class SsmChain {
 public:
  void push(const UncertainPose& step) {
    if (prefix_.empty()) {
      prefix_.push_back(UncertainPose{});
      return;
    }
    prefix_.push_back(compose(prefix_.back(), step));
  }
  [[nodiscard]] std::optional<UncertainPose> operator()(int from, int to) const {
    if (from < 1 || to < 1 || from > size() || to > size()) return std::nullopt;
    if (from == to) return UncertainPose{};
    if (from > to) {
      auto fwd = (*this)(to, from);
      return inverse(*fwd);
    }
    const auto& a = prefix_[static_cast<std::size_t>(from - 1)];
    const auto& b = prefix_[static_cast<std::size_t>(to - 1)];
    const Pose2 rel = between(a.pose, b.pose);
    const Eigen::Matrix3d ad = adjoint(rel.inverse());
    Eigen::Matrix3d cov = b.cov - ad * a.cov * ad.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return UncertainPose{rel, cov};
  }
  [[nodiscard]] int size() const { return static_cast<int>(prefix_.size()); }

 private:
  std::vector<UncertainPose> prefix_;  // prefix_[k] = chain from keyframe 1 to keyframe k + 1
};

struct KeyframeData {
  int id{0};
  std::size_t step{0};
  PointCloud2D cloud;
  Pose2 dead_reckoned;
};

}  // namespace

void KeyframePolicy::validate() const {
  if (!(translation_gate > 0.0) || !(rotation_gate > 0.0)) {
    throw InvalidArgument("keyframes: gates must be positive");
  }
}

void MissionConfig::validate() const {
  sonar.validate();
  sonar_noise.validate();
  cfar.validate();
  if (raster.rows <= 0 || raster.cols <= 0 || !(raster.resolution > 0.0)) {
    throw InvalidArgument("mission: raster dimensions and resolution must be positive");
  }
  dead_reckoning.validate();
  keyframes.validate();
  scan_match.icp.validate();
  scan_match.consensus.validate();
  if (loop_closure.min_separation < 1 || loop_closure.max_candidates < 0 || loop_closure.pcm_window < 0) {
    throw InvalidArgument("mission: loop_closure separation, candidates and window must be non-negative");
  }
  if (!(loop_closure.search_sigmas >= 0.0 && loop_closure.min_overlap >= 0.0 && loop_closure.sigma_xy > 0.0 &&
        loop_closure.sigma_theta > 0.0 && loop_closure.pcm_chi2 > 0.0)) {
    throw InvalidArgument("mission: invalid loop_closure parameters");
  }
  oi.gate.validate();
  oi.corruption.validate();
  if (!(overhead_resolution > 0.0)) throw InvalidArgument("mission: overhead_resolution must be positive");
  if (!(scan_match.voxel > 0.0)) throw InvalidArgument("mission: scan_match.voxel must be positive");
  if (!(scan_match.sigma_xy > 0.0 && scan_match.sigma_theta > 0.0 && scan_match.rmse_ref > 0.0)) {
    throw InvalidArgument("mission: scan_match sigmas must be positive");
  }
  if (!(scan_match.odometry_gate > 0.0)) throw InvalidArgument("mission: scan_match.odometry_gate must be positive");
  if (!(oi.sigma_xy > 0.0 && oi.sigma_theta > 0.0)) throw InvalidArgument("mission: oi sigmas must be positive");
  if (!(oi.innovation_gate > 0.0)) throw InvalidArgument("mission: oi.innovation_gate must be positive");
  if (!(oi.constraint_floor > 0.0 && oi.constraint_floor <= 1.0)) {
    throw InvalidArgument("mission: oi.constraint_floor must be in (0, 1]");
  }
  if (!(anchor_sigma > 0.0)) throw InvalidArgument("mission: anchor_sigma must be positive");
  if (!(min_clearance >= 0.0)) throw InvalidArgument("mission: min_clearance must be non-negative");
}

std::string to_string(MissionMode m) { return m == MissionMode::Baseline ? "baseline" : "proposed"; }

MissionMode mission_mode_from_string(const std::string& s) {
  if (s == "baseline") return MissionMode::Baseline;
  if (s == "proposed") return MissionMode::Proposed;
  throw InvalidArgument("unknown mode '" + s + "' (baseline, proposed)");
}

MissionReport run_mission(const WorldModel& world, const Trajectory& traj, MissionMode mode,
                          const MissionConfig& cfg, std::uint64_t rng_seed, Translator* translator) {
  cfg.validate();
  if (traj.poses.size() < 2) throw InvalidArgument("mission: trajectory needs at least two samples");
  check_collision_free(world, traj, cfg.min_clearance);

  MissionReport rep;
  rep.trajectory = traj.name;
  rep.mode = mode;
  rep.seed = rng_seed;
  StageClock clock(rep.timing);
  const auto t_start = Clock::now();

  const bool proposed = mode == MissionMode::Proposed;
  const auto mask = clock.run("map", [&] { return structure_mask(rasterize(world, cfg.overhead_resolution)); });
  const SectorLimits sector{cfg.sonar.fov, cfg.sonar.max_range};
  std::unique_ptr<OracleTranslator> oracle;
  if (proposed && translator == nullptr) {
    oracle = std::make_unique<OracleTranslator>(OracleScene{&world, &mask, sector}, cfg.oi.corruption);
    translator = oracle.get();
  }

  const auto& dr_cfg = cfg.dead_reckoning;
  const auto odo = simulate_dead_reckoning(traj, dr_cfg, derive_seed(rng_seed, kOdometry));
  std::mt19937_64 fix_rng(derive_seed(rng_seed, kInitialFix));
  std::normal_distribution<double> n01(0.0, 1.0);
  const Pose2& t0 = traj.poses.front();
  const double fx = dr_cfg.sigma_xy_init * n01(fix_rng);
  const double fy = dr_cfg.sigma_xy_init * n01(fix_rng);
  const double fth = dr_cfg.sigma_theta_init * n01(fix_rng);
  const Pose2 x0_known(t0.x() + fx, t0.y() + fy, t0.theta() + fth);
  // A perfect initial fix still needs a finite prior.
  const NoiseModel3 fix_noise =
      NoiseModel3::from_sigmas(std::max(dr_cfg.sigma_xy_init, 1e-3), std::max(dr_cfg.sigma_xy_init, 1e-3),
                               std::max(dr_cfg.sigma_theta_init, 1e-4));

  // Per-step odometry noise, matching simulate_dead_reckoning.
  Eigen::Matrix3d step_cov = Eigen::Matrix3d::Zero();
  step_cov(0, 0) = std::pow(dr_cfg.sigma_velocity * traj.dt, 2);
  step_cov(2, 2) = std::pow(dr_cfg.sigma_theta * traj.dt, 2);
  step_cov += kCovFloor;

  PoseGraph& graph = rep.graph;
  const int anchor = graph.anchor_id();
  graph.add_variable(anchor, x0_known);
  auto log_factor = [&](int kf, const Factor& f, const std::string& reason, double overlap) {
    const auto idx = graph.add_factor(f);
    rep.factor_log.push_back({kf, f.kind, f.i, f.j, true, reason, static_cast<long>(idx), overlap});
  };
  auto log_reject = [&](int kf, FactorKind kind, int i, int j, const std::string& reason, double overlap) {
    rep.factor_log.push_back({kf, kind, i, j, false, reason, -1, overlap});
  };
  log_factor(0, {FactorKind::Prior, anchor, -1, x0_known,
                 NoiseModel3::from_sigmas(cfg.anchor_sigma, cfg.anchor_sigma, cfg.anchor_sigma)},
             "anchor", 0.0);

  std::vector<KeyframeData> kfs;
  SsmChain chain;
  std::vector<Factor> accepted_nssm;
  std::optional<NoiseModel3> last_marginal;

  Pose2 dr_pose = x0_known;
  UncertainPose since_kf;  // odometry accumulated since the last keyframe
  std::size_t step = 0;
  const ScanMatchConfig& sm = cfg.scan_match;
  const LoopClosureConfig& lc = cfg.loop_closure;

  // Scan-match noise grows with the ICP residual and is inflated along directions the
  // clouds leave unconstrained (a single straight wall says nothing about along-wall motion).
  auto scan_noise = [&](double sxy, double sth, const RegistrationResult& r, const PointCloud2D& src,
                        const PointCloud2D& dst) {
    const double s = std::max(1.0, r.inlier_rmse / sm.rmse_ref);
    const Eigen::Matrix3d sig = Eigen::Vector3d(sxy * s, sxy * s, sth * s).asDiagonal();
    return NoiseModel3(shape_covariance(sig, registration_constraint(src, dst, r.transform), sm.constraint_floor));
  };

  while (true) {
    const bool first = kfs.empty();
    const bool gate = !first && (since_kf.pose.translation().norm() >= cfg.keyframes.translation_gate ||
                                 std::abs(since_kf.pose.theta()) >= cfg.keyframes.rotation_gate);
    if (first || gate) {
      const int id = static_cast<int>(kfs.size()) + 1;
      const Pose2& truth = traj.poses[step];
      const auto det = clock.run("sonar", [&] {
        const auto img = render(world, truth, cfg.sonar, cfg.sonar_noise, derive_seed(rng_seed, kRender, id),
                                traj.stamp(step));
        return soca_cfar(img, cfg.cfar);
      });
      PointCloud2D cloud = clock.run("sonar", [&] { return voxel_downsample(detections_to_cloud(det), sm.voxel); });

      const Pose2 predicted = first ? x0_known : compose(graph.value(id - 1), since_kf.pose);
      const Eigen::Matrix3d predicted_cov =
          first || !last_marginal
              ? fix_noise.covariance()
              : compose(UncertainPose{graph.value(id - 1), last_marginal->covariance()}, since_kf).cov;

      std::future<OiOutcome> oi_future;
      if (proposed) {
        OiRequest req;
        req.keyframe = id;
        req.detections = &det;
        req.estimate = predicted;
        req.anchor_pose = graph.value(anchor);
        req.true_pose = truth;
        req.seed = derive_seed(rng_seed, kTranslate, id);
        req.use_consensus =
            last_marginal.has_value() && largest_position_sigma(*last_marginal) > cfg.oi.consensus_sigma_threshold;
        oi_future = std::async(std::launch::async, [req, &mask, translator, &cfg, sector] {
          return propose_oi_factor(req, mask, *translator, cfg.oi.gate, sector, cfg.raster);
        });
      }

      graph.add_variable(id, predicted);
      // A keyframe joined only by its sequential factor is a leaf: the optimum of the rest
      // of the graph does not move and its marginal follows by propagation.
      bool leaf = !first;
      UncertainPose ssm_step;
      if (first) {
        chain.push({});
        log_factor(id, {FactorKind::Prior, id, -1, x0_known, fix_noise}, "initial fix", 0.0);
      } else {
        // Sequential scan match, gated against odometry.
        clock.run("ssm", [&] {
          const auto& prev = kfs.back();
          Factor f{FactorKind::SSM, id - 1, id, since_kf.pose, NoiseModel3(since_kf.cov)};
          std::string reason = "odometry";
          double ov = 0.0;
          if (cloud.size() >= static_cast<std::size_t>(sm.icp.min_points) &&
              prev.cloud.size() >= static_cast<std::size_t>(sm.icp.min_points)) {
            const Pose2 init = consensus_init(cloud, prev.cloud, since_kf.pose, sm.consensus);
            const auto r = icp(cloud, prev.cloud, init, sm.icp);
            ov = overlap_fraction(cloud, prev.cloud, r.transform);
            const auto icp_noise = scan_noise(sm.sigma_xy, sm.sigma_theta, r, cloud, prev.cloud);
            const double d2 = mahalanobis2(local_difference(since_kf.pose, r.transform),
                                           since_kf.cov + icp_noise.covariance());
            if (!r.converged) {
              reason = "odometry (icp did not converge)";
            } else if (ov < sm.min_overlap) {
              reason = "odometry (low overlap)";
            } else if (d2 > sm.odometry_gate) {
              reason = "odometry (disagrees with dead reckoning)";
            } else {
              // Information-weighted fusion of the scan match with the odometry increment.
              const Eigen::Matrix3d info_o = since_kf.cov.inverse();
              const Eigen::Matrix3d info_i = icp_noise.information();
              Eigen::Matrix3d fused_cov = (info_o + info_i).inverse();
              fused_cov = 0.5 * (fused_cov + fused_cov.transpose());
              const Eigen::Vector3d delta = fused_cov * info_i * local_difference(since_kf.pose, r.transform);
              f.measurement = compose(since_kf.pose, Pose2(delta.x(), delta.y(), delta.z()));
              f.noise = NoiseModel3(fused_cov);
              reason = "icp";
            }
          } else {
            reason = "odometry (insufficient points)";
          }
          graph.update({{id, compose(graph.value(id - 1), f.measurement)}});
          ssm_step = {f.measurement, f.noise.covariance()};
          chain.push(ssm_step);
          log_factor(id, f, reason, ov);
        });

        // Non-sequential scan matches against earlier keyframes, filtered by PCM.
        if (lc.enabled && id - lc.min_separation >= 1) {
          clock.run("nssm", [&] {
            const Pose2 cur = graph.value(id);
            const double sigma = last_marginal ? largest_position_sigma(*last_marginal) : dr_cfg.sigma_xy_init;
            const double radius = lc.search_sigmas * sigma + cfg.sonar.max_range;
            const Pose2 look(0.5 * cfg.sonar.max_range, 0.0, 0.0);
            const Point2 cur_view = compose(cur, look).translation();
            std::vector<std::pair<double, int>> ranked;
            for (int j = 1; j <= id - lc.min_separation; ++j) {
              const Pose2& pj = graph.value(j);
              if (distance(pj.translation(), cur.translation()) > radius) continue;
              ranked.emplace_back(distance(compose(pj, look).translation(), cur_view), j);
            }
            std::sort(ranked.begin(), ranked.end());
            if (ranked.size() > static_cast<std::size_t>(lc.max_candidates)) ranked.resize(lc.max_candidates);

            std::vector<Factor> cands;
            std::vector<double> cand_overlap;
            for (const auto& [d, j] : ranked) {
              const auto& other = kfs[static_cast<std::size_t>(j - 1)].cloud;
              if (cloud.size() < static_cast<std::size_t>(sm.icp.min_points) ||
                  other.size() < static_cast<std::size_t>(sm.icp.min_points)) {
                log_reject(id, FactorKind::NSSM, j, id, "insufficient points", 0.0);
                continue;
              }
              const Pose2 init = consensus_init(cloud, other, between(graph.value(j), cur), sm.consensus);
              const auto r = icp(cloud, other, init, sm.icp);
              const double ov = overlap_fraction(cloud, other, r.transform);
              if (!r.converged) {
                log_reject(id, FactorKind::NSSM, j, id, "icp did not converge", ov);
              } else if (ov < lc.min_overlap) {
                log_reject(id, FactorKind::NSSM, j, id, "low overlap", ov);
              } else {
                cands.push_back({FactorKind::NSSM, j, id, r.transform,
                                 scan_noise(lc.sigma_xy, lc.sigma_theta, r, cloud, other)});
                cand_overlap.push_back(ov);
              }
            }
            if (cands.empty()) return;

            const std::size_t keep = lc.pcm_window > static_cast<int>(cands.size())
                                         ? static_cast<std::size_t>(lc.pcm_window) - cands.size()
                                         : 0;
            std::vector<Factor> pool(accepted_nssm.end() - static_cast<long>(std::min(keep, accepted_nssm.size())),
                                     accepted_nssm.end());
            const std::size_t first_new = pool.size();
            pool.insert(pool.end(), cands.begin(), cands.end());
            const ChainFn fn = [&chain](int a, int b) { return chain(a, b); };
            const auto sel = pcm_select(pool, fn, PcmConfig{lc.pcm_chi2});
            for (std::size_t c = 0; c < cands.size(); ++c) {
              const bool ok = std::binary_search(sel.begin(), sel.end(), first_new + c);
              if (ok) {
                log_factor(id, cands[c], "pcm", cand_overlap[c]);
                accepted_nssm.push_back(cands[c]);
                leaf = false;
              } else {
                log_reject(id, FactorKind::NSSM, cands[c].i, id, "pcm inconsistent", cand_overlap[c]);
              }
            }
          });
        }
      }

      if (proposed) {
        const auto outcome = clock.run("oi_wait", [&] { return oi_future.get(); });
        if (const auto* p = std::get_if<OiFactorProposal>(&outcome)) {
          const double s = 1.0 / std::max(p->overlap, 1e-6);
          const Eigen::Matrix3d sig =
              Eigen::Vector3d(cfg.oi.sigma_xy * s, cfg.oi.sigma_xy * s, cfg.oi.sigma_theta * s).asDiagonal();
          const NoiseModel3 noise(shape_covariance(sig, p->constraint, cfg.oi.constraint_floor));
          const double d2 =
              mahalanobis2(local_difference(predicted, p->corrected_pose), predicted_cov + noise.covariance());
          if (d2 > cfg.oi.innovation_gate) {
            log_reject(id, FactorKind::OI, anchor, id, "inconsistent with estimate", p->overlap);
          } else {
            log_factor(id, {FactorKind::OI, anchor, id, p->measurement, noise}, "oi", p->overlap);
            leaf = false;
          }
        } else {
          const auto& rj = std::get<OiRejection>(outcome);
          log_reject(id, FactorKind::OI, anchor, id, rj.reason, rj.overlap);
        }
      }

      if (leaf) {
        if (last_marginal) {
          last_marginal =
              NoiseModel3(compose(UncertainPose{graph.value(id - 1), last_marginal->covariance()}, ssm_step).cov);
        }
      } else {
        clock.run("optimize", [&] {
          const auto res = optimize(graph, cfg.optimizer);
          graph.update(res.values);
        });
        if (proposed || lc.enabled) {
          last_marginal = clock.run("marginal", [&] { return marginal_covariance(graph, id); });
        }
      }

      kfs.push_back({id, step, std::move(cloud), dr_pose});
      since_kf = UncertainPose{};
    }

    if (step + 1 >= traj.poses.size()) break;
    since_kf = compose(since_kf, UncertainPose{odo[step], step_cov});
    dr_pose = compose(dr_pose, odo[step]);
    ++step;
  }

  for (const auto& k : kfs) {
    rep.keyframes.push_back(
        {k.id, k.step, traj.stamp(k.step), traj.poses[k.step], graph.value(k.id), k.dead_reckoned});
  }
  rep.timing.seconds["total"] = std::chrono::duration<double>(Clock::now() - t_start).count();
  return rep;
}

}  // namespace sonar_oi
